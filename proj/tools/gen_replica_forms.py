#!/usr/bin/env python3
"""Writes the three bundled replica forms and their ground-truth ledgers.

    python3 tools/gen_replica_forms.py [out_dir]   (default: data/forms)

Form 1: 10 single-choice items on how pain interferes with daily life.
Form 2: 45 single-choice quality-of-life items on one four-point scale.
Form 3: 53 mixed items (single, multiple, fill-in) with nested skip logic.

Question texts avoid sharing content words so that an utterance asking one
item verbatim is never mistaken for another item by the transcript mapper.
"""

import json
import pathlib
import sys


def opts(*labels):
    return [{"id": label_id(l), "label": l} for l in labels]


def label_id(label):
    return "".join(c if c.isalnum() else "_" for c in label.lower()).strip("_")


def single(qid, text, labels, **extra):
    return {"id": qid, "text": text, "type": "single_choice", "options": opts(*labels), **extra}


def multi(qid, text, labels, **extra):
    return {"id": qid, "text": text, "type": "multi_choice", "options": opts(*labels), **extra}


def blank(qid, text, blanks, **extra):
    return {"id": qid, "text": text, "type": "fill_blank", "blanks": blanks, **extra}


def num(bid, unit, suffix=None):
    b = {"id": bid, "value_kind": "number", "unit": unit}
    if suffix:
        b["suffix"] = suffix
    return b


def free(bid):
    return {"id": bid, "value_kind": "free_text"}


def chosen(label):
    return {"kind": "chosen", "option": label_id(label)}


def chosen_many(*labels):
    return {"kind": "chosen_many", "options": sorted(label_id(l) for l in labels)}


def number(bid, value, unit):
    return {"kind": "blanks", "values": {bid: {"number": value, "unit": unit}}}


def text_value(bid, value):
    return {"kind": "blanks", "values": {bid: {"text": value}}}


def when_equals(label, then):
    return {"when": {"kind": "equals", "option_id": label_id(label)}, "then": then}


def when_contains(label, then):
    return {"when": {"kind": "contains", "option_id": label_id(label)}, "then": then}


# ---------------------------------------------------------------------------

INTERFERENCE = ["not at all", "slightly", "moderately", "severely", "extremely"]

FORM1_TEXTS = [
    "Has pain limited your general daily activity?",
    "How strongly has discomfort affected your mood?",
    "Has walking ability suffered because of soreness?",
    "Were household chores or paid employment harder to manage?",
    "Did aches strain relations with relatives and companions?",
    "Has your sleep been disrupted at night?",
    "Has enjoyment of life diminished recently?",
    "Could you concentrate on reading or television?",
    "Has your appetite for meals changed?",
    "Were bathing and dressing yourself difficult?",
]
FORM1_LEDGER = ["moderately", "slightly", "severely", "not at all", "slightly",
                "extremely", "moderately", "not at all", "slightly", "severely"]


def form1():
    qs = [single(f"f1_q{i + 1}", t, INTERFERENCE) for i, t in enumerate(FORM1_TEXTS)]
    ledger = {q["id"]: chosen(v) for q, v in zip(qs, FORM1_LEDGER)}
    doc = {"form_id": "form-1", "title": "Pain interference follow-up", "version": "1.0", "questions": qs}
    return doc, ledger


SCALE4 = ["not at all", "a little", "quite a bit", "very much"]

FORM2_TEXTS = [
    "Is carrying heavy grocery bags a struggle?",
    "Does a long stroll outdoors tire you out?",
    "Do you stay confined to bed or an armchair most afternoons?",
    "Do you need assistance eating, dressing or washing?",
    "Were you hindered performing your job or housework?",
    "Were hobbies and leisure pursuits restricted?",
    "Did climbing stairs leave you breathless?",
    "How intense was bodily pain overall?",
    "Did you require frequent naps to recover energy?",
    "Was falling asleep or remaining asleep troublesome?",
    "Did your muscles seem feeble or weak?",
    "Did food seem unappealing at mealtimes?",
    "Did queasiness or nausea bother you?",
    "Did you actually throw up or vomit?",
    "Were bowel movements hard and infrequent?",
    "Were stools loose or watery?",
    "Did fatigue weigh on you throughout the day?",
    "Did aching interfere with ordinary routines?",
    "Was focusing on newspapers or television tricky?",
    "Were you tense or on edge?",
    "Did worries occupy your thoughts?",
    "Were you irritable with people around you?",
    "Was your spirit downhearted or depressed?",
    "Was remembering names and appointments difficult?",
    "Has illness disrupted family life?",
    "Has treatment curtailed social gatherings with friends?",
    "Has medical care caused financial hardship?",
    "Was your skin itchy or dry?",
    "Has hair thinning or loss upset you?",
    "Did tingling in hands or feet occur?",
    "Was your mouth sore or ulcerated?",
    "Did flavours taste different from usual?",
    "Was swallowing uncomfortable?",
    "Did your weight drop unintentionally?",
    "Were hot flushes or night sweats present?",
    "Has your body image changed for the worse?",
    "Is the future of your health a concern?",
    "Were intimate relationships affected?",
    "Could you travel locally without help?",
    "Were dizzy spells or light-headedness a problem?",
    "Did you cough persistently?",
    "Did urine urgency wake you?",
    "Were your ankles or legs swollen?",
    "How would you rate enjoyment of everyday pleasures?",
    "Has quality of living declined on the whole?",
]


def form2():
    qs = [single(f"f2_q{i + 1:02d}", t, SCALE4) for i, t in enumerate(FORM2_TEXTS)]
    ledger = {q["id"]: chosen(SCALE4[(i * 7 + 3) % 4]) for i, q in enumerate(qs)}
    doc = {"form_id": "form-2", "title": "Quality of life follow-up", "version": "1.0", "questions": qs}
    return doc, ledger


def form3():
    q = []
    led = {}

    def add(spec, value=None):
        q.append(spec)
        if value is not None:
            led[spec["id"]] = value

    # Vital signs and measurements.
    add(blank("f3_height", "What is your standing height?", [num("cm", "cm", "cm")]), number("cm", 172, "cm"))
    add(blank("f3_weight", "What does the scale show for your weight?", [num("kg", "kg", "kg")]),
        number("kg", 81, "kg"))
    add(blank("f3_waist", "What is your waist circumference?", [num("cm", "cm", "cm")]), number("cm", 94, "cm"))
    add(blank("f3_bp", "What were your latest blood pressure readings?",
              [num("systolic", "mmhg", "mmHg systolic"), num("diastolic", "mmhg", "mmHg diastolic")]),
        {"kind": "blanks", "values": {"systolic": {"number": 128, "unit": "mmhg"},
                                      "diastolic": {"number": 82, "unit": "mmhg"}}})
    add(blank("f3_pulse", "What is your resting heart rate?", [num("bpm", "bpm", "bpm")]), number("bpm", 68, "bpm"))
    add(single("f3_general", "How would you describe your overall wellbeing?",
               ["excellent", "good", "fair", "poor"]), chosen("good"))

    # Smoking, with nested follow-ups.
    add(single("f3_smoking", "Do you smoke tobacco?", ["never smoked", "currently smoke", "quit smoking"],
               triggers=[when_equals("quit smoking", ["f3_quit_years", "f3_quit_aids"]),
                         when_equals("currently smoke", ["f3_cigs_day", "f3_quit_interest"])]),
        chosen("quit smoking"))
    add(blank("f3_quit_years", "How long since you gave up cigarettes?", [num("years", "year", "years")],
              conditional=True), number("years", 6, "year"))
    add(multi("f3_quit_aids", "Which aids helped you stop?",
              ["nicotine patches", "nicotine gum", "counselling", "prescribed medication", "none of these"],
              conditional=True, triggers=[when_contains("nicotine patches", ["f3_patch_weeks"])]),
        chosen_many("nicotine patches", "counselling"))
    add(blank("f3_patch_weeks", "For how many weeks did you wear patches?", [num("weeks", "week", "weeks")],
              conditional=True), number("weeks", 10, "week"))
    add(blank("f3_cigs_day", "How many cigarettes do you light per day?",
              [num("count", "cigarette", "cigarettes")], conditional=True), number("count", 12, "cigarette"))
    add(single("f3_quit_interest", "Would you like support to stop?", ["interested", "undecided", "uninterested"],
               conditional=True))

    # Alcohol.
    add(single("f3_alcohol", "Do you consume alcoholic beverages?", ["regularly", "occasionally", "never"],
               triggers=[when_equals("regularly", ["f3_drinks_week"])]), chosen("occasionally"))
    add(blank("f3_drinks_week", "How many standard units do you have weekly?", [num("drinks", "drink", "drinks")],
              conditional=True))

    # Lifestyle.
    add(single("f3_exercise", "How often do you exercise vigorously?", ["daily", "weekly", "rarely"]),
        chosen("weekly"))
    add(blank("f3_steps", "Roughly what step count does your pedometer record?", [num("steps", "step", "steps")]),
        number("steps", 6500, "step"))
    add(blank("f3_sleep_hours", "How long do you typically slumber nightly?", [num("hours", "hour", "hours")]),
        number("hours", 7, "hour"))
    add(blank("f3_water", "How many glasses of water do you drink?", [num("glasses", "glass", "glasses")]),
        number("glasses", 6, "glass"))
    add(single("f3_diet", "How would you characterise your usual eating pattern?",
               ["balanced", "irregular", "processed"]), chosen("balanced"))
    add(multi("f3_foods", "Which items feature on your plate most mornings?",
              ["fruit", "cereal", "eggs", "pastries"]), chosen_many("fruit", "cereal"))
    add(single("f3_caffeine", "Do you take coffee or tea in the evening?", ["often", "sometimes", "seldom"]),
        chosen("sometimes"))
    add(single("f3_stress", "How stressed have you felt lately?", ["calm", "somewhat stressed", "highly stressed"]),
        chosen("somewhat stressed"))
    add(single("f3_mood", "How cheerful is your outlook?", ["upbeat", "neutral", "gloomy"]), chosen("upbeat"))

    # Medical history.
    add(multi("f3_chronic", "Which long-term conditions have you been diagnosed with?",
              ["diabetes", "hypertension", "asthma", "arthritis", "none of these"],
              triggers=[when_contains("diabetes", ["f3_glucose_check", "f3_insulin"]),
                        when_contains("hypertension", ["f3_bp_meds"])]),
        chosen_many("diabetes", "hypertension"))
    add(single("f3_glucose_check", "How frequently do you test your sugar levels?", ["daily", "weekly", "rarely"],
               conditional=True), chosen("daily"))
    add(single("f3_insulin", "Do you inject insulin?", ["yes", "no"], conditional=True), chosen("no"))
    add(single("f3_bp_meds", "Are you on tablets that lower pressure?", ["yes", "no"], conditional=True),
        chosen("yes"))
    add(multi("f3_family", "Which illnesses run among your parents or siblings?",
              ["heart disease", "cancer", "stroke", "dementia", "none of these"]),
        chosen_many("heart disease", "stroke"))
    add(multi("f3_symptoms", "Which complaints have troubled you recently?",
              ["headaches", "chest tightness", "back ache", "cough", "none of these"],
              triggers=[when_contains("chest tightness", ["f3_chest_onset"])]),
        chosen_many("headaches", "back ache"))
    add(single("f3_chest_onset", "Under what circumstances do those episodes begin?", ["at rest", "on exertion", "unpredictably"],
               conditional=True))
    add(multi("f3_screening", "Which screening tests have you completed?",
              ["colonoscopy", "mammogram", "skin check", "none of these"]),
        chosen_many("colonoscopy", "skin check"))
    add(single("f3_vaccination", "Is your influenza vaccination current?", ["yes", "no", "unsure"]), chosen("yes"))
    add(single("f3_falls", "Have you tripped or fallen this year?", ["yes", "no"],
               triggers=[when_equals("yes", ["f3_fall_count"])]), chosen("yes"))
    add(blank("f3_fall_count", "How many tumbles occurred?", [num("times", "time", "times")], conditional=True),
        number("times", 2, "time"))
    add(blank("f3_medications", "How many prescription pills do you swallow each morning?",
              [num("pills", "pill", "pills")]), number("pills", 3, "pill"))
    add(blank("f3_allergy", "Which medicines provoke an allergic reaction?", [free("drug")],
              triggers=[{"when": {"kind": "matches_text", "pattern": "penicillin"}, "then": ["f3_allergy_reaction"]}]),
        text_value("drug", "penicillin"))
    add(single("f3_allergy_reaction", "What happened after that exposure?",
               ["rash", "swelling", "wheezing"], conditional=True), chosen("rash"))
    add(multi("f3_senses", "Which senses have weakened?", ["hearing", "eyesight", "smell", "none of these"]),
        chosen_many("eyesight"))
    add(single("f3_dental", "When did a dentist last examine your teeth?",
               ["within six months", "within two years", "more distant"]), chosen("within two years"))
    add(single("f3_living", "Who lives alongside you?", ["alone", "partner", "extended family"]), chosen("partner"))
    add(blank("f3_occupation", "What occupation do you hold or held?", [free("job")]),
        text_value("job", "retired teacher"))
    add(blank("f3_doctor", "What is the surname of your family physician?", [free("name")]),
        text_value("name", "Patel"))
    add(single("f3_driving", "Do you still drive a car?", ["yes", "no"]), chosen("yes"))
    add(single("f3_memory", "Do you misplace belongings more than before?", ["often", "sometimes", "seldom"]),
        chosen("seldom"))
    add(single("f3_bladder", "Do you leak urine when sneezing?", ["often", "sometimes", "seldom"]),
        chosen("seldom"))
    add(multi("f3_supports", "Which community services do you use?",
              ["meals delivery", "home nursing", "physiotherapy", "none of these"]),
        chosen_many("physiotherapy"))
    add(single("f3_loneliness", "Do you feel isolated from others?", ["often", "sometimes", "seldom"]),
        chosen("sometimes"))
    add(blank("f3_screen_time", "How many minutes per evening do you watch screens?",
              [num("minutes", "minute", "minutes")]), number("minutes", 90, "minute"))
    add(single("f3_sunscreen", "Do you apply sunscreen outdoors?", ["always", "sometimes", "seldom"]),
        chosen("always"))
    add(multi("f3_goals", "Which targets matter most for the coming year?",
              ["lose weight", "sleep better", "move more", "eat well"]), chosen_many("move more", "sleep better"))
    add(blank("f3_contact", "Which relative should we phone in an emergency?", [free("relative")]),
        text_value("relative", "daughter Anna"))
    add(single("f3_volunteer", "Do you volunteer with any clubs or charities?", ["yes", "no"]), chosen("no"))
    add(single("f3_followup", "Would you prefer a telephone or clinic appointment next time?",
               ["telephone", "clinic"]), chosen("telephone"))

    doc = {"form_id": "form-3", "title": "General health follow-up", "version": "1.0", "questions": q}
    return doc, led


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/forms")
    out.mkdir(parents=True, exist_ok=True)
    for make in (form1, form2, form3):
        doc, ledger = make()
        fid = doc["form_id"]
        (out / f"{fid}.json").write_text(json.dumps(doc, indent=2) + "\n")
        (out / f"{fid}.ledger.json").write_text(json.dumps(ledger, indent=2, sort_keys=True) + "\n")
        print(f"{fid}: {len(doc['questions'])} questions, {len(ledger)} ledger entries")


if __name__ == "__main__":
    main()
