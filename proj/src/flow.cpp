#include "followup/flow.hpp"

#include <algorithm>
#include <stdexcept>

#include "followup/question_gen.hpp"

namespace followup {

using nlohmann::json;

namespace {

double now(FlowEnv& env) { return env.gateway.clock().now(); }

SessionEvent put(SessionState& s, FlowEnv& env, EventKind kind, json payload) {
  return emit(s, env.log, env.sink, kind, std::move(payload), now(env));
}

void abort_session(SessionState& s, FlowEnv& env, const std::string& reason, const std::string& detail) {
  put(s, env, EventKind::aborted, json{{"reason", reason}, {"detail", detail}});
}

void check_grouping(const FormSpec& form, const Grouping& grouping) {
  if (grouping.groups.empty()) throw std::invalid_argument("grouping is empty");
  if (!grouping.source_form_id.empty() && grouping.source_form_id != form.form_id) {
    throw std::invalid_argument("grouping was built for form '" + grouping.source_form_id + "', not '" +
                                form.form_id + "'");
  }
  std::set<std::string> seen;
  for (const auto& g : grouping.groups) {
    if (g.member_ids.empty()) throw std::invalid_argument("group " + g.group_id + " is empty");
    for (const auto& id : g.member_ids) {
      const auto* q = form.find(id);
      if (q == nullptr) throw std::invalid_argument("group " + g.group_id + " names unknown question '" + id + "'");
      if (q->conditional) throw std::invalid_argument("group " + g.group_id + " contains conditional '" + id + "'");
      if (!seen.insert(id).second) throw std::invalid_argument("question '" + id + "' appears in two groups");
    }
  }
  for (const auto* q : form.top_level()) {
    if (seen.count(q->question_id) == 0) {
      throw std::invalid_argument("question '" + q->question_id + "' is not covered by the grouping");
    }
  }
}

Transcript recent_context(const SessionState& s, std::size_t n) {
  const auto& t = s.transcript;
  const std::size_t from = t.size() > n ? t.size() - n : 0;
  return Transcript(t.begin() + static_cast<std::ptrdiff_t>(from), t.end());
}

void run_decision(SessionState& s, FlowEnv& env) {
  auto d = select_next(s, env.form);
  if (d.kind == DecisionKind::followup) {
    ClusterConfig cc = env.config.cluster;
    cc.session_id = s.session_id;
    try {
      d.followup_groups = cluster_followups(env.form, d.item_ids, env.gateway, cc, "f" + std::to_string(s.next_seq));
    } catch (const GatewayError& e) {
      abort_session(s, env, "gateway", e.what());
      return;
    }
    d.group = d.followup_groups.front();
  }
  put(s, env, EventKind::decision, decision_to_json(d));
}

void run_compose(SessionState& s, FlowEnv& env) {
  if (!s.current) {
    Turn closing;
    closing.text = std::string(kClosing);
    closing.closing = true;
    put(s, env, EventKind::completed, json{{"closing", closing}});
    return;
  }
  if (s.turn_count >= s.caps.max_turns) {
    abort_session(s, env, "turn_cap", "reached " + std::to_string(s.caps.max_turns) + " system turns");
    return;
  }
  ComposeConfig cfg;
  cfg.locale = env.config.locale;
  cfg.session_id = s.session_id;
  const auto asks = s.ask_counts.find(s.current->group_id);
  const bool reask = asks != s.ask_counts.end() && asks->second > 0;
  ComposedQuestion q;
  try {
    q = reask ? compose_reask(*s.current, env.form, recent_context(s, 4), env.gateway, cfg)
              : compose_question(*s.current, env.form, env.gateway, cfg);
  } catch (const GatewayError& e) {
    abort_session(s, env, "gateway", e.what());
    return;
  }
  Turn t;
  t.speaker = Speaker::system;
  t.text = q.utterance;
  t.latency_s = q.latency_s;
  t.covered_ids = q.covered_ids;
  t.reask = reask;
  json payload{{"turn", t}, {"group_id", q.group_id}};
  if (q.audit_warning) payload["audit_warning"] = true;
  put(s, env, EventKind::system_utterance, std::move(payload));
}

void run_extract(SessionState& s, FlowEnv& env) {
  const Turn* question = last_question(s);
  if (question == nullptr || !s.current) throw std::logic_error("nothing to extract against");
  DialogueContext dialogue{question->text, s.transcript.back().text};
  std::vector<ExtractionExample> examples;
  if (env.kb != nullptr && !env.kb->empty() && env.config.few_shot > 0) {
    examples = retrieve_similar(*env.kb, dialogue.question_utterance + "\n" + dialogue.patient_response,
                                env.config.few_shot);
  }
  ExtractConfig cfg;
  cfg.session_id = s.session_id;
  std::map<std::string, AnswerValue> results;
  try {
    results = extract(*s.current, env.form, dialogue, examples, env.gateway, cfg);
  } catch (const GatewayError& e) {
    abort_session(s, env, "gateway", e.what());
    return;
  }
  json r = json::object();
  for (const auto& [id, v] : results) r[id] = v;
  put(s, env, EventKind::answer_recorded, json{{"results", r}});
}

}  // namespace

const Turn* last_question(const SessionState& s) {
  for (auto it = s.transcript.rbegin(); it != s.transcript.rend(); ++it) {
    if (it->is_question()) return &*it;
  }
  return nullptr;
}

FlowDecision select_next(const SessionState& s, const FormSpec& form) {
  FlowDecision d;
  std::set<std::string> exhausted = s.exhausted;

  // Rule 1: re-ask items of the current group that still lack a valid answer.
  if (s.current) {
    std::vector<std::string> missing;
    for (const auto& id : s.current->member_ids) {
      if (s.answers.count(id) == 0) missing.push_back(id);
    }
    if (!missing.empty()) {
      auto it = s.ask_counts.find(s.current->group_id);
      const std::size_t reasks = it == s.ask_counts.end() ? 0 : it->second;
      if (reasks < s.caps.max_reasks) {
        d.kind = DecisionKind::reask;
        d.item_ids = missing;
        d.group = QuestionGroup{s.current->group_id, missing, s.current->qtype};
        return d;
      }
      d.exhausted = missing;
      exhausted.insert(missing.begin(), missing.end());
    }
  }

  // Rule 2: follow up on triggers fired by recorded answers.
  std::set<std::string> queued;
  for (const auto& g : s.pending) queued.insert(g.member_ids.begin(), g.member_ids.end());
  for (const auto& q : form.questions) {
    auto ans = s.answers.find(q.question_id);
    if (ans == s.answers.end()) continue;
    for (std::size_t i = 0; i < q.triggers.size(); ++i) {
      const std::string key = q.question_id + "#" + std::to_string(i);
      if (s.consumed_triggers.count(key) != 0 || !condition_holds(q.triggers[i].when, ans->second)) continue;
      d.consumed_triggers.push_back(key);
      for (const auto& child : q.triggers[i].then) {
        const bool settled = s.answers.count(child) != 0 || exhausted.count(child) != 0 ||
                             s.asked.count(child) != 0 || queued.count(child) != 0;
        if (!settled && std::find(d.item_ids.begin(), d.item_ids.end(), child) == d.item_ids.end()) {
          d.item_ids.push_back(child);
        }
      }
    }
  }
  if (!d.item_ids.empty()) {
    std::sort(d.item_ids.begin(), d.item_ids.end(),
              [&](const std::string& a, const std::string& b) { return form.at(a).ordinal < form.at(b).ordinal; });
    d.kind = DecisionKind::followup;
    return d;
  }

  // Rule 3: the next predefined group, or done.
  if (!s.pending.empty()) {
    d.kind = DecisionKind::next;
    d.group = s.pending.front();
    d.item_ids = d.group->member_ids;
    return d;
  }
  d.kind = DecisionKind::done;
  return d;
}

SessionState start_session(const FormSpec& form, const Grouping& grouping, const std::string& session_id,
                           FlowEnv& env) {
  check_grouping(form, grouping);
  if (env.config.caps.max_turns == 0) throw std::invalid_argument("max_turns must be positive");
  if (session_id.empty()) throw std::invalid_argument("session id is empty");
  SessionState s;
  put(s, env, EventKind::created,
      json{{"session_id", session_id},
           {"form_id", form.form_id},
           {"mode", "modular"},
           {"caps", {{"max_turns", env.config.caps.max_turns}, {"max_reasks", env.config.caps.max_reasks}}},
           {"plan", grouping.groups}});
  advance(s, env);
  return s;
}

void advance(SessionState& s, FlowEnv& env) {
  if (s.mode != Mode::modular) throw std::logic_error("not a modular session");
  while (!s.terminal()) {
    switch (s.phase) {
      case Phase::deciding: run_decision(s, env); break;
      case Phase::composing: run_compose(s, env); break;
      case Phase::extracting: run_extract(s, env); break;
      case Phase::awaiting_reply:
      case Phase::terminal: return;
    }
  }
}

void step(SessionState& s, std::string_view patient_utterance, FlowEnv& env) {
  if (s.terminal() || s.phase != Phase::awaiting_reply) {
    throw std::logic_error("session " + s.session_id + " is not awaiting a reply");
  }
  put(s, env, EventKind::patient_utterance, json{{"text", std::string(patient_utterance)}});
  advance(s, env);
}

}  // namespace followup
