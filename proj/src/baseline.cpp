#include "followup/baseline.hpp"

#include <sstream>
#include <stdexcept>

#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

namespace {

std::string describe_condition(const QuestionSpec& q, const TriggerCondition& c) {
  auto label = [&](const std::string& id) {
    const auto* o = q.find_option(id);
    return "\"" + (o != nullptr ? o->label : id) + "\" (" + id + ")";
  };
  switch (c.kind) {
    case ConditionKind::equals: return "if the answer is " + label(c.option_id);
    case ConditionKind::contains: return "if the answers include " + label(c.option_id);
    case ConditionKind::matches_text: return "if the answer mentions \"" + c.pattern + "\"";
    default: return "once answered";
  }
}

}  // namespace

std::string render_form_text(const FormSpec& form) {
  std::ostringstream os;
  os << "Form: " << (form.title.empty() ? form.form_id : form.title) << " [" << form.form_id << "]\n";
  for (const auto& q : form.questions) {
    os << q.ordinal << ". [" << q.question_id << "] " << q.text << " ("
       << (q.qtype == QuestionType::single_choice  ? "choose one"
           : q.qtype == QuestionType::multi_choice ? "choose all that apply"
                                                   : "fill in")
       << (q.conditional ? "; conditional, ask only when triggered" : "") << ")\n";
    if (!q.options.empty()) {
      os << "   options:";
      for (const auto& o : q.options) os << " " << o.option_id << " = " << o.label << ";";
      os << "\n";
    }
    for (const auto& b : q.blanks) {
      os << "   blank " << b.blank_id << ": "
         << (b.value_kind == ValueKind::number ? "number" + (b.unit ? " in " + *b.unit : std::string{}) : "free text");
      if (!b.suffix.empty()) os << ", followed by \"" << b.suffix << "\"";
      os << "\n";
    }
    for (const auto& rule : q.triggers) {
      os << "   skip logic: " << describe_condition(q, rule.when) << ", then ask " << text::join(rule.then, ", ")
         << "\n";
    }
  }
  return os.str();
}

ChatRequest build_baseline_prompt(const FormSpec& form, const Transcript& history, std::string_view instructions) {
  std::ostringstream user;
  user << "FOLLOW-UP FORM\n" << render_form_text(form) << "\nDIALOGUE SO FAR\n";
  if (history.empty()) user << "(none yet; start the conversation)\n";
  json turns = json::array();
  for (const auto& t : history) {
    user << (t.speaker == Speaker::system ? "Assistant: " : "Patient: ") << t.text << "\n";
    turns.push_back({{"speaker", t.speaker == Speaker::system ? "system" : "patient"}, {"text", t.text}});
  }
  user << "\nReply with the JSON block only.";

  ChatRequest req;
  req.tag = std::string(tags::baseline);
  req.temperature = 0.2;
  req.max_output_tokens = 1024;
  req.system_text = std::string(instructions);
  req.messages.push_back({Role::user, user.str()});
  req.meta = json{{"op", "baseline"}, {"form", json::parse(serialize_form(form, -1))}, {"history", turns}};
  return req;
}

namespace {

std::optional<json> find_block(std::string_view raw) {
  auto try_parse = [](std::string_view s) -> std::optional<json> {
    const auto open = s.find('{');
    const auto close = s.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
    try {
      auto j = json::parse(s.substr(open, close - open + 1));
      if (j.is_object()) return j;
    } catch (const json::exception&) {
    }
    return std::nullopt;
  };
  if (auto fence = raw.find("```"); fence != std::string_view::npos) {
    auto body = raw.find('\n', fence);
    auto end = body == std::string_view::npos ? std::string_view::npos : raw.find("```", body);
    if (end != std::string_view::npos) {
      if (auto j = try_parse(raw.substr(body, end - body))) return j;
    }
  }
  return try_parse(raw);
}

}  // namespace

BaselineTurnOutput parse_baseline_output(std::string_view raw_text, const FormSpec* form) {
  BaselineTurnOutput out;
  out.raw_text = std::string(raw_text);
  const auto block = find_block(raw_text);
  if (!block || !block->contains("next_question") || !(*block)["next_question"].is_string()) {
    out.malformed = true;
    return out;
  }
  out.next_question = text::trim((*block)["next_question"].get<std::string>());
  if (block->contains("done") && (*block)["done"].is_boolean()) out.done = (*block)["done"].get<bool>();
  if (block->contains("extracted") && (*block)["extracted"].is_object()) {
    for (const auto& [id, v] : (*block)["extracted"].items()) {
      if (form != nullptr && form->find(id) == nullptr) continue;
      try {
        out.extracted.emplace(id, v.get<AnswerValue>());
      } catch (const std::exception&) {
        // An item the model wrote in some other shape is simply not recorded.
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Session loop
// ---------------------------------------------------------------------------

namespace {

SessionEvent put(SessionState& s, BaselineEnv& env, EventKind kind, json payload) {
  return emit(s, env.log, env.sink, kind, std::move(payload), env.gateway.clock().now());
}

void model_turn(SessionState& s, BaselineEnv& env) {
  if (s.turn_count >= s.caps.max_turns) {
    put(s, env, EventKind::aborted,
        json{{"reason", "turn_cap"}, {"detail", "reached " + std::to_string(s.caps.max_turns) + " system turns"}});
    return;
  }
  auto req = build_baseline_prompt(env.form, s.transcript);
  req.session_id = s.session_id;
  ChatResponse r;
  try {
    r = env.gateway.complete(req);
  } catch (const GatewayError& e) {
    put(s, env, EventKind::aborted, json{{"reason", "gateway"}, {"detail", e.what()}});
    return;
  }
  const auto out = parse_baseline_output(r.text, &env.form);

  Turn t;
  t.speaker = Speaker::system;
  t.latency_s = r.latency_s;
  json payload;
  if (!out.malformed) {
    json extracted = json::object();
    for (const auto& [id, v] : out.extracted) extracted[id] = v;
    payload["extracted"] = std::move(extracted);
  }
  if (!out.malformed && out.done) {
    t.text = out.next_question.empty() ? std::string(kBaselineFallbackClosing) : out.next_question;
    t.closing = true;
    payload["closing"] = t;
    put(s, env, EventKind::completed, std::move(payload));
    return;
  }
  // A malformed output is still shown to the patient as is.
  t.text = out.malformed ? text::trim(out.raw_text) : out.next_question;
  payload["turn"] = t;
  payload["malformed"] = out.malformed;
  put(s, env, EventKind::system_utterance, std::move(payload));
}

}  // namespace

SessionState start_baseline(const std::string& session_id, BaselineEnv& env) {
  if (env.caps.max_turns == 0) throw std::invalid_argument("max_turns must be positive");
  if (session_id.empty()) throw std::invalid_argument("session id is empty");
  SessionState s;
  put(s, env, EventKind::created,
      json{{"session_id", session_id},
           {"form_id", env.form.form_id},
           {"mode", "baseline"},
           {"caps", {{"max_turns", env.caps.max_turns}, {"max_reasks", env.caps.max_reasks}}}});
  baseline_advance(s, env);
  return s;
}

void baseline_advance(SessionState& s, BaselineEnv& env) {
  if (s.mode != Mode::baseline) throw std::logic_error("not a baseline session");
  while (!s.terminal() && s.phase == Phase::composing) model_turn(s, env);
}

void baseline_step(SessionState& s, std::string_view patient_utterance, BaselineEnv& env) {
  if (s.terminal() || s.phase != Phase::awaiting_reply) {
    throw std::logic_error("session " + s.session_id + " is not awaiting a reply");
  }
  put(s, env, EventKind::patient_utterance, json{{"text", std::string(patient_utterance)}});
  baseline_advance(s, env);
}

BaselineRun run_baseline_session(const FormSpec& form, Patient& patient, Gateway& gateway, const Caps& caps,
                                 const std::string& session_id) {
  BaselineRun run;
  BaselineEnv env{form, gateway, caps, {}, &run.events};
  run.state = start_baseline(session_id, env);
  while (!run.state.terminal()) {
    const Turn question = run.state.transcript.back();
    baseline_step(run.state, patient.reply(question), env);
  }
  return run;
}

}  // namespace followup
