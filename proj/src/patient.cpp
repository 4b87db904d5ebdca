#include "followup/patient.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "followup/eval.hpp"
#include "followup/intent.hpp"
#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

bool persona_valid(const PersonaSpec& p) {
  const bool background = !p.name.empty() && p.age > 0 && !p.occupation.empty() && !p.residence.empty();
  const bool shots = !p.few_shots.empty() && std::all_of(p.few_shots.begin(), p.few_shots.end(), [](const auto& s) {
    return !s.question.empty() && !s.answer.empty();
  });
  return background && !p.trait_profile.empty() && shots;
}

std::vector<PersonaSpec> make_personas() {
  std::vector<PersonaSpec> out;
  out.push_back(PersonaSpec{
      "patient-1",
      "Margaret Hale",
      67,
      "retired primary school teacher",
      "a terraced house in a small market town, lives with her husband",
      "Clear and concise. Answers with brevity: short, direct sentences that address exactly what was asked, "
      "no small talk, no elaboration unless asked.",
      {
          {"How would you rate your pain over the last week?", "Mild, mostly in the evenings."},
          {"Are you still taking the tablets twice a day?", "Yes, morning and night."},
          {"Have you had any trouble sleeping?", "No, I sleep fine."},
      }});
  out.push_back(PersonaSpec{
      "patient-2",
      "Daniel Okafor",
      54,
      "bus depot supervisor",
      "a flat on the edge of the city, lives alone, daughter visits on weekends",
      "Clear but verbose. Answers correctly but with verbosity: adds context, explains reasons, mentions how "
      "things affect daily routine, and often runs to several sentences before finishing.",
      {
          {"How would you rate your pain over the last week?",
           "Well, it has been moderate I would say. Mornings are worse, especially when I get up and walk to "
           "the kitchen, but by lunchtime it settles down a bit."},
          {"Are you still taking the tablets twice a day?",
           "Yes, I am. I keep them next to the kettle so I don't forget, one with breakfast and one with my "
           "evening tea."},
          {"Have you had any trouble sleeping?",
           "Not really trouble as such. I wake up once most nights, but I get back to sleep fairly quickly."},
      }});
  out.push_back(PersonaSpec{
      "patient-3",
      "Rosa Delgado",
      78,
      "retired market stall holder",
      "a ground-floor flat near the harbour, lives with a cat",
      "Vague or off-topic. Prone to digression: drifts to unrelated stories, answers loosely or hedges, and "
      "sometimes needs the question repeated before giving a usable answer.",
      {
          {"How would you rate your pain over the last week?",
           "Oh, you know how it is. The weather has been dreadful. It comes and goes, not too bad I suppose."},
          {"Are you still taking the tablets twice a day?",
           "The tablets, yes, the little white ones. My grandson sorts them for me."},
          {"Have you had any trouble sleeping?",
           "The cat wakes me up at five every day, that cat. But otherwise, no, I sleep."},
      }});
  return out;
}

std::string persona_system_prompt(const PersonaSpec& p) {
  std::ostringstream os;
  os << "You are role-playing a patient receiving a follow-up phone call from a nurse.\n"
     << "Background: your name is " << p.name << ", you are " << p.age << " years old, a " << p.occupation
     << ", living in " << p.residence << ".\n"
     << "Speaking style: " << p.trait_profile << "\n"
     << "Stay in character, answer only as the patient, and never mention that you are role-playing.\n"
     << "Examples of how you talk:\n";
  for (const auto& s : p.few_shots) os << "Nurse: " << s.question << "\nYou: " << s.answer << "\n";
  return os.str();
}

void PatientMemory::append(std::string question, std::string answer) {
  turns_.push_back(FewShotExchange{std::move(question), std::move(answer)});
  while (turns_.size() > window_) turns_.pop_front();
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

GroundTruthLedger ledger_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("ledger must be a JSON object keyed by question id");
  GroundTruthLedger out;
  for (const auto& [id, v] : j.items()) out.emplace(id, v.get<AnswerValue>());
  return out;
}

json ledger_to_json(const GroundTruthLedger& ledger) {
  json j = json::object();
  for (const auto& [id, v] : ledger) j[id] = v;
  return j;
}

GroundTruthLedger load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read ledger " + path.string());
  return ledger_from_json(json::parse(in));
}

std::vector<std::string> ledger_violations(const GroundTruthLedger& ledger, const FormSpec& form) {
  std::vector<std::string> bad;
  for (const auto& [id, v] : ledger) {
    const auto* q = form.find(id);
    if (q == nullptr || !answers_match(validate_answer(*q, v), v)) bad.push_back(id);
  }
  return bad;
}

PhrasingTable PhrasingTable::from_json(const json& j) {
  PhrasingTable t;
  if (j.is_null()) return t;
  for (const auto& [k, v] : j.items()) t.entries.emplace(k, v.get<std::string>());
  return t;
}

// ---------------------------------------------------------------------------
// Phrasing
// ---------------------------------------------------------------------------

namespace {

std::string format_number(double v) {
  if (std::fabs(v - std::round(v)) < 1e-9 && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(std::llround(v)));
  }
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string as_sentence(std::string s) {
  s = text::trim(s);
  if (s.empty()) return s;
  const char last = s.back();
  if (last != '.' && last != '!' && last != '?') s.push_back('.');
  return s;
}

std::string default_phrase(const QuestionSpec& q, const AnswerValue& a) {
  if (const auto* c = a.as_chosen()) {
    const auto* o = q.find_option(c->option_id);
    return as_sentence(o != nullptr ? o->label : c->option_id);
  }
  if (const auto* m = a.as_chosen_many()) {
    std::vector<std::string> labels;
    for (const auto& o : q.options) {
      if (m->option_ids.count(o.option_id) != 0) labels.push_back(o.label);
    }
    std::string s;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i > 0) s += (i + 1 == labels.size()) ? " and " : ", ";
      s += labels[i];
    }
    return as_sentence(s);
  }
  if (const auto* b = a.as_blanks()) {
    std::vector<std::string> parts;
    for (const auto& spec : q.blanks) {
      auto it = b->values.find(spec.blank_id);
      if (it == b->values.end()) continue;
      if (const auto* qty = std::get_if<Quantity>(&it->second)) {
        std::string unit = spec.unit.value_or(qty->unit);
        parts.push_back(format_number(qty->value) + (unit.empty() ? "" : " " + unit));
      } else {
        parts.push_back(std::get<std::string>(it->second));
      }
    }
    return as_sentence(text::join(parts, "; "));
  }
  if (a.is_refused()) return "I'd rather not say.";
  return "I don't know.";
}

}  // namespace

std::string phrase_answer(const QuestionSpec& q, const AnswerValue& a, const PhrasingTable& phrasing) {
  const std::string base = default_phrase(q, a);
  std::optional<std::string> tmpl;
  if (const auto* c = a.as_chosen()) {
    if (auto it = phrasing.entries.find(q.question_id + ":" + c->option_id); it != phrasing.entries.end()) {
      tmpl = it->second;
    }
  }
  if (!tmpl) {
    if (auto it = phrasing.entries.find(q.question_id); it != phrasing.entries.end()) tmpl = it->second;
  }
  if (!tmpl) return base;
  std::string out = *tmpl;
  static constexpr std::string_view kSlot = "{answer}";
  if (auto pos = out.find(kSlot); pos != std::string::npos) {
    // The slot takes the bare answer, without the sentence stop.
    std::string bare = base;
    if (!bare.empty() && bare.back() == '.') bare.pop_back();
    out.replace(pos, kSlot.size(), bare);
  }
  return as_sentence(out);
}

std::string scripted_respond(const GroundTruthLedger& ledger, const std::vector<std::string>& covered_ids,
                             const FormSpec& form, const PhrasingTable& phrasing) {
  std::vector<std::string> parts;
  parts.reserve(covered_ids.size());
  for (const auto& id : covered_ids) {
    auto it = ledger.find(id);
    if (it == ledger.end()) throw std::out_of_range("no ledger intent for '" + id + "'");
    parts.push_back(phrase_answer(form.at(id), it->second, phrasing));
  }
  return text::join(parts, " ");
}

// ---------------------------------------------------------------------------
// Persona replies
// ---------------------------------------------------------------------------

std::string respond(const PersonaSpec& persona, std::string_view question_utterance, PatientMemory& memory,
                    Gateway& gateway, const RespondOptions& options) {
  if (text::trim(question_utterance).empty()) throw std::invalid_argument("empty question utterance");
  if (!persona_valid(persona)) throw std::invalid_argument("persona '" + persona.key + "' is incomplete");

  ChatRequest req;
  req.tag = options.tag;
  req.session_id = options.session_id;
  req.temperature = kPatientTemperature;
  req.system_text = persona_system_prompt(persona);
  for (const auto& t : memory.turns()) {
    req.messages.push_back({Role::user, t.question});
    req.messages.push_back({Role::assistant, t.answer});
  }
  std::string user(question_utterance);
  json intents = json::array();
  if (!options.intents.empty()) {
    user += "\n\n[What you want to tell the nurse, in your own words:";
    for (const auto& [question, answer] : options.intents) {
      user += "\n- " + question + " -> " + answer;
      intents.push_back({{"question", question}, {"answer", answer}});
    }
    user += "]";
  }
  req.messages.push_back({Role::user, user});
  req.meta = json{{"op", "patient"}, {"persona", options.persona_index}, {"intents", intents},
                  {"question", std::string(question_utterance)}};

  auto r = gateway.complete(req);
  auto reply = text::trim(r.text);
  if (reply.empty()) throw GatewayError(GatewayError::Kind::rejected, "patient model returned an empty reply");
  memory.append(std::string(question_utterance), reply);
  return reply;
}

// ---------------------------------------------------------------------------
// Session-level patients
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> asked_items(const Turn& question, const FormSpec& form) {
  if (question.covered_ids) return *question.covered_ids;
  std::vector<std::string> ids;
  for (const auto& id : map_utterance_to_items(question.text, form)) ids.push_back(id);
  std::sort(ids.begin(), ids.end(),
            [&](const std::string& a, const std::string& b) { return form.at(a).ordinal < form.at(b).ordinal; });
  return ids;
}

}  // namespace

ScriptedPatient::ScriptedPatient(const FormSpec& form, GroundTruthLedger ledger, PhrasingTable phrasing,
                                 std::size_t digression_every)
    : form_(form), ledger_(std::move(ledger)), phrasing_(std::move(phrasing)), digression_every_(digression_every) {}

std::string ScriptedPatient::reply(const Turn& question) {
  std::vector<std::string> ids;
  for (auto& id : asked_items(question, form_)) {
    if (ledger_.count(id) != 0) ids.push_back(std::move(id));
  }
  if (ids.empty()) return std::string(kUnclear);

  for (const auto& id : ids) seen_.insert(id);
  if (digression_every_ > 0 && seen_.size() / digression_every_ > digressions_) {
    ++digressions_;
    return std::string(kDigression);
  }
  return scripted_respond(ledger_, ids, form_, phrasing_);
}

PersonaPatient::PersonaPatient(const FormSpec& form, PersonaSpec persona, std::size_t persona_index,
                               Gateway& gateway, std::string session_id, std::optional<GroundTruthLedger> ledger)
    : form_(form),
      persona_(std::move(persona)),
      persona_index_(persona_index),
      gateway_(gateway),
      session_id_(std::move(session_id)),
      ledger_(std::move(ledger)) {}

std::string PersonaPatient::reply(const Turn& question) {
  RespondOptions opts;
  opts.session_id = session_id_;
  opts.persona_index = persona_index_;
  if (ledger_) {
    for (const auto& id : asked_items(question, form_)) {
      auto it = ledger_->find(id);
      if (it == ledger_->end()) continue;
      const auto& q = form_.at(id);
      opts.intents.emplace_back(q.text, phrase_answer(q, it->second));
    }
  }
  return respond(persona_, question.text, memory_, gateway_, opts);
}

}  // namespace followup
