#include "followup/session.hpp"

#include <algorithm>
#include <stdexcept>

namespace followup {

using nlohmann::json;

void to_json(json& j, const QuestionGroup& g) {
  j = json{{"group_id", g.group_id}, {"member_ids", g.member_ids}, {"qtype", to_string(g.qtype)}};
}

void from_json(const json& j, QuestionGroup& g) {
  g.group_id = j.at("group_id").get<std::string>();
  g.member_ids = j.at("member_ids").get<std::vector<std::string>>();
  const auto t = question_type_from(j.at("qtype").get<std::string>());
  if (!t) throw std::invalid_argument("bad qtype in group");
  g.qtype = *t;
}

std::string_view to_string(Mode m) { return m == Mode::modular ? "modular" : "baseline"; }

Mode mode_from(std::string_view s) {
  if (s == "modular") return Mode::modular;
  if (s == "baseline") return Mode::baseline;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::active: return "active";
    case SessionStatus::completed: return "completed";
    default: return "aborted";
  }
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::deciding: return "deciding";
    case Phase::composing: return "composing";
    case Phase::awaiting_reply: return "awaiting_reply";
    case Phase::extracting: return "extracting";
    default: return "terminal";
  }
}

namespace {

constexpr EventKind kAllKinds[] = {EventKind::created,   EventKind::system_utterance, EventKind::patient_utterance,
                                   EventKind::decision,  EventKind::answer_recorded,  EventKind::completed,
                                   EventKind::aborted};

constexpr DecisionKind kAllDecisions[] = {DecisionKind::reask, DecisionKind::followup, DecisionKind::next,
                                          DecisionKind::done};

[[noreturn]] void illegal(const SessionState& s, EventKind k) {
  throw std::logic_error("event '" + std::string(to_string(k)) + "' not legal in phase '" +
                         std::string(to_string(s.phase)) + "' (session " + s.session_id + ")");
}

void require(const SessionState& s, EventKind k, bool ok) {
  if (!ok) illegal(s, k);
}

Turn* last_patient_turn(SessionState& s) {
  for (auto it = s.transcript.rbegin(); it != s.transcript.rend(); ++it) {
    if (it->speaker == Speaker::patient) return &*it;
    if (it->is_question()) break;
  }
  return nullptr;
}

// Baseline outputs carry the model's cumulative view of the answers, which
// replaces the previous one. Items new or changed in it were recorded from the
// latest patient reply.
void apply_reported_answers(SessionState& s, const json& extracted) {
  AnswerMap next;
  std::vector<std::string> recorded;
  for (const auto& [id, v] : extracted.items()) {
    auto value = v.get<AnswerValue>();
    if (!value.has_intent()) continue;
    auto it = s.answers.find(id);
    if (it == s.answers.end() || !(it->second == value)) recorded.push_back(id);
    next.emplace(id, std::move(value));
  }
  s.answers = std::move(next);
  if (auto* t = last_patient_turn(s)) t->recorded = std::move(recorded);
}

}  // namespace

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::created: return "created";
    case EventKind::system_utterance: return "system_utterance";
    case EventKind::patient_utterance: return "patient_utterance";
    case EventKind::decision: return "decision";
    case EventKind::answer_recorded: return "answer_recorded";
    case EventKind::completed: return "completed";
    default: return "aborted";
  }
}

std::string_view to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::reask: return "REASK";
    case DecisionKind::followup: return "FOLLOWUP";
    case DecisionKind::next: return "NEXT";
    default: return "DONE";
  }
}

json event_to_json(const SessionEvent& e) {
  return json{{"seq", e.seq}, {"kind", to_string(e.kind)}, {"payload", e.payload}, {"ts", e.ts}};
}

SessionEvent event_from_json(const json& j) {
  SessionEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  const auto kind = j.at("kind").get<std::string>();
  const auto* it = std::find_if(std::begin(kAllKinds), std::end(kAllKinds),
                                [&](EventKind k) { return to_string(k) == kind; });
  if (it == std::end(kAllKinds)) throw std::invalid_argument("unknown event kind '" + kind + "'");
  e.kind = *it;
  e.payload = j.at("payload");
  e.ts = j.at("ts").get<double>();
  return e;
}

json decision_to_json(const FlowDecision& d) {
  json j{{"kind", to_string(d.kind)}, {"item_ids", d.item_ids}};
  j["group"] = d.group ? json(*d.group) : json(nullptr);
  j["followup_groups"] = d.followup_groups;
  j["exhausted"] = d.exhausted;
  j["consumed_triggers"] = d.consumed_triggers;
  return j;
}

FlowDecision decision_from_json(const json& j) {
  FlowDecision d;
  const auto kind = j.at("kind").get<std::string>();
  const auto* it = std::find_if(std::begin(kAllDecisions), std::end(kAllDecisions),
                                [&](DecisionKind k) { return to_string(k) == kind; });
  if (it == std::end(kAllDecisions)) throw std::invalid_argument("unknown decision '" + kind + "'");
  d.kind = *it;
  d.item_ids = j.value("item_ids", std::vector<std::string>{});
  if (j.contains("group") && !j["group"].is_null()) d.group = j["group"].get<QuestionGroup>();
  d.followup_groups = j.value("followup_groups", std::vector<QuestionGroup>{});
  d.exhausted = j.value("exhausted", std::vector<std::string>{});
  d.consumed_triggers = j.value("consumed_triggers", std::vector<std::string>{});
  return d;
}

void apply_event(SessionState& s, const SessionEvent& e) {
  if (e.seq != s.next_seq) {
    throw std::logic_error("event seq " + std::to_string(e.seq) + " does not follow " +
                           std::to_string(s.next_seq - 1));
  }
  if (e.kind != EventKind::created && (s.next_seq == 1 || s.terminal())) illegal(s, e.kind);
  const auto& p = e.payload;

  switch (e.kind) {
    case EventKind::created: {
      require(s, e.kind, s.next_seq == 1);
      s.session_id = p.at("session_id").get<std::string>();
      s.form_id = p.at("form_id").get<std::string>();
      s.mode = mode_from(p.at("mode").get<std::string>());
      s.caps.max_turns = p.at("caps").at("max_turns").get<std::size_t>();
      s.caps.max_reasks = p.at("caps").at("max_reasks").get<std::size_t>();
      s.plan = p.value("plan", std::vector<QuestionGroup>{});
      s.pending.assign(s.plan.begin(), s.plan.end());
      s.phase = s.mode == Mode::modular ? Phase::deciding : Phase::composing;
      break;
    }
    case EventKind::decision: {
      require(s, e.kind, s.mode == Mode::modular && s.phase == Phase::deciding);
      const auto d = decision_from_json(p);
      s.exhausted.insert(d.exhausted.begin(), d.exhausted.end());
      s.consumed_triggers.insert(d.consumed_triggers.begin(), d.consumed_triggers.end());
      s.last_results.clear();
      switch (d.kind) {
        case DecisionKind::reask:
          require(s, e.kind, d.group.has_value());
          ++s.ask_counts[d.group->group_id];
          s.current = d.group;
          break;
        case DecisionKind::followup:
          s.pending.insert(s.pending.begin(), d.followup_groups.begin(), d.followup_groups.end());
          [[fallthrough]];
        case DecisionKind::next:
          require(s, e.kind, d.group.has_value() && !s.pending.empty() && s.pending.front() == *d.group);
          s.current = s.pending.front();
          s.pending.pop_front();
          s.ask_counts[s.current->group_id] = 0;
          break;
        case DecisionKind::done:
          s.current.reset();
          break;
      }
      s.phase = Phase::composing;
      break;
    }
    case EventKind::system_utterance: {
      require(s, e.kind, s.phase == Phase::composing);
      if (p.contains("extracted")) apply_reported_answers(s, p["extracted"]);
      Turn t = p.at("turn").get<Turn>();
      t.ts = e.ts;
      if (t.covered_ids) s.asked.insert(t.covered_ids->begin(), t.covered_ids->end());
      if (t.is_question()) ++s.turn_count;
      if (p.value("malformed", false)) ++s.malformed_turns;
      s.transcript.push_back(std::move(t));
      s.phase = Phase::awaiting_reply;
      break;
    }
    case EventKind::patient_utterance: {
      require(s, e.kind, s.phase == Phase::awaiting_reply);
      Turn t;
      t.speaker = Speaker::patient;
      t.text = p.at("text").get<std::string>();
      t.ts = e.ts;
      s.transcript.push_back(std::move(t));
      s.phase = s.mode == Mode::modular ? Phase::extracting : Phase::composing;
      break;
    }
    case EventKind::answer_recorded: {
      require(s, e.kind, s.mode == Mode::modular && s.phase == Phase::extracting);
      AnswerMap results;
      for (const auto& [id, v] : p.at("results").items()) results.emplace(id, v.get<AnswerValue>());
      std::vector<std::string> recorded;
      for (const auto& [id, v] : results) {
        if (!v.has_intent()) continue;
        s.answers[id] = v;  // latest valid answer wins
        recorded.push_back(id);
      }
      s.last_results = std::move(results);
      s.phase = Phase::deciding;
      if (auto* t = last_patient_turn(s)) t->recorded = std::move(recorded);
      break;
    }
    case EventKind::completed: {
      require(s, e.kind, s.phase == Phase::composing);
      if (p.contains("extracted")) apply_reported_answers(s, p["extracted"]);
      if (p.contains("closing") && !p["closing"].is_null()) {
        Turn t = p["closing"].get<Turn>();
        t.closing = true;
        t.ts = e.ts;
        s.transcript.push_back(std::move(t));
      }
      s.status = SessionStatus::completed;
      s.current.reset();
      s.phase = Phase::terminal;
      break;
    }
    case EventKind::aborted: {
      s.status = SessionStatus::aborted;
      s.abort_reason = p.value("reason", std::string("unknown"));
      s.phase = Phase::terminal;
      break;
    }
  }
  ++s.next_seq;
}

SessionState replay(const std::vector<SessionEvent>& events) {
  SessionState s;
  for (const auto& e : events) apply_event(s, e);
  return s;
}

json state_to_json(const SessionState& s) {
  json answers = json::object();
  for (const auto& [id, v] : s.answers) answers[id] = v;
  json last = json::object();
  for (const auto& [id, v] : s.last_results) last[id] = v;
  json asks = json::object();
  for (const auto& [id, n] : s.ask_counts) asks[id] = n;
  return json{{"session_id", s.session_id},
              {"form_id", s.form_id},
              {"mode", to_string(s.mode)},
              {"caps", {{"max_turns", s.caps.max_turns}, {"max_reasks", s.caps.max_reasks}}},
              {"plan", s.plan},
              {"pending", std::vector<QuestionGroup>(s.pending.begin(), s.pending.end())},
              {"current", s.current ? json(*s.current) : json(nullptr)},
              {"answers", answers},
              {"last_results", last},
              {"ask_counts", asks},
              {"exhausted", s.exhausted},
              {"consumed_triggers", s.consumed_triggers},
              {"asked", s.asked},
              {"transcript", s.transcript},
              {"turn_count", s.turn_count},
              {"status", to_string(s.status)},
              {"abort_reason", s.abort_reason},
              {"phase", to_string(s.phase)},
              {"malformed_turns", s.malformed_turns},
              {"next_seq", s.next_seq}};
}

SessionEvent emit(SessionState& state, std::vector<SessionEvent>* log, const EventSink& sink, EventKind kind,
                  json payload, double ts) {
  SessionEvent e{state.next_seq, kind, std::move(payload), ts};
  apply_event(state, e);
  if (sink) sink(e, state);
  if (log != nullptr) log->push_back(e);
  return e;
}

// ---------------------------------------------------------------------------
// Completion record
// ---------------------------------------------------------------------------

CompletionRecord finalize(const SessionState& state, const FormSpec& form, const MeterTotals& tokens,
                          bool allow_active) {
  if (!state.terminal() && !allow_active) throw std::logic_error("session " + state.session_id + " is still active");
  CompletionRecord r;
  r.session_id = state.session_id;
  r.form_id = state.form_id;
  r.mode = state.mode;
  r.status = state.terminal() ? std::string(to_string(state.status)) : "in_progress";
  r.abort_reason = state.abort_reason;
  r.turns = state.turn_count;
  r.tokens = tokens;
  for (const auto& id : reachable_in_order(form, state.answers)) {
    if (auto it = state.answers.find(id); it != state.answers.end()) {
      r.answers.emplace(id, it->second);
    } else {
      r.unanswered.push_back(id);
      if (state.exhausted.count(id) != 0) r.exhausted.push_back(id);
    }
  }
  return r;
}

json record_to_json(const CompletionRecord& r) {
  json answers = json::object();
  for (const auto& [id, v] : r.answers) answers[id] = v;
  json j{{"session_id", r.session_id},
         {"form_id", r.form_id},
         {"mode", to_string(r.mode)},
         {"status", r.status},
         {"answers", answers},
         {"unanswered", r.unanswered},
         {"exhausted", r.exhausted},
         {"turns", r.turns},
         {"tokens",
          {{"prompt", r.tokens.prompt_tokens},
           {"completion", r.tokens.completion_tokens},
           {"total", r.tokens.tokens()},
           {"requests", r.tokens.requests}}}};
  if (!r.abort_reason.empty()) j["abort_reason"] = r.abort_reason;
  if (r.status == "in_progress") j["in_progress"] = true;
  return j;
}

Progress progress(const SessionState& state, const FormSpec& form) {
  Progress p;
  for (const auto& id : reachable_set(form, state.answers)) {
    ++p.reachable;
    if (state.answers.count(id) != 0) ++p.answered;
  }
  return p;
}

}  // namespace followup
