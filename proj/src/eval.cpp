#include "followup/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

json eval_config_json(const EvalConfig& c) {
  return json{{"map_threshold", c.map_threshold},
              {"alter_upper", c.alter_upper},
              {"latency_limit_s", c.latency_limit_s}};
}

double item_similarity(std::string_view utterance, const QuestionSpec& q) {
  const auto want = text::content_words(q.text);
  if (want.empty()) return 0.0;
  const auto said = text::content_words(utterance);
  std::size_t hit = 0;
  for (const auto& w : want) hit += said.count(w);
  return static_cast<double>(hit) / static_cast<double>(want.size());
}

std::map<std::string, double> item_scores(std::string_view utterance, const FormSpec& form, double threshold) {
  std::map<std::string, double> out;
  for (const auto& q : form.questions) {
    const double s = item_similarity(utterance, q);
    if (s >= threshold && s > 0.0) out.emplace(q.question_id, s);
  }
  return out;
}

std::set<std::string> map_utterance_to_items(std::string_view utterance, const FormSpec& form, double threshold) {
  std::set<std::string> out;
  for (const auto& [id, s] : item_scores(utterance, form, threshold)) out.insert(id);
  return out;
}

AccuracyResult score_accuracy(const CompletionRecord& record, const GroundTruthLedger& ledger) {
  AccuracyResult r;
  auto score = [&](const std::string& id, const AnswerValue* got) {
    auto it = ledger.find(id);
    if (it == ledger.end()) {
      r.warnings.push_back("no ground truth for '" + id + "'; item not scored");
      return;
    }
    ++r.scored;
    if (got != nullptr && answers_match(*got, it->second)) {
      ++r.correct;
    } else {
      r.wrong.push_back(id);
    }
  };
  for (const auto& [id, v] : record.answers) score(id, &v);
  for (const auto& id : record.unanswered) score(id, nullptr);
  return r;
}

// ---------------------------------------------------------------------------
// Detectors
// ---------------------------------------------------------------------------

std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::starting_from_middle: return "starting_from_middle";
    case ErrorCategory::ending_prematurely: return "ending_prematurely";
    case ErrorCategory::excessive_response_time: return "excessive_response_time";
    case ErrorCategory::altering_questions: return "altering_questions";
    case ErrorCategory::repetitive_questioning: return "repetitive_questioning";
    case ErrorCategory::logical_jump_error: return "logical_jump_error";
    default: return "skipping_missing";
  }
}

std::optional<ErrorCategory> error_category_from(std::string_view s) {
  for (auto c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::size_t ErrorCounts::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

namespace {

AnswerMap ledger_view(const GroundTruthLedger& ledger, const std::set<std::string>& ids) {
  AnswerMap view;
  for (const auto& id : ids) {
    if (auto it = ledger.find(id); it != ledger.end()) view.emplace(id, it->second);
  }
  return view;
}

}  // namespace

ErrorCounts detect_errors(const Transcript& transcript, const FormSpec& form, const GroundTruthLedger& ledger,
                          const RunContext& context, const EvalConfig& config) {
  ErrorCounts out;
  std::set<std::string> asked;
  std::set<std::string> recorded;
  bool started = false;

  for (const auto& turn : transcript) {
    if (turn.speaker == Speaker::patient) {
      recorded.insert(turn.recorded.begin(), turn.recorded.end());
      continue;
    }
    if (!turn.is_question()) continue;
    if (turn.latency_s > config.latency_limit_s) ++out[ErrorCategory::excessive_response_time];

    std::vector<std::string> items;
    std::map<std::string, double> scores;
    if (turn.covered_ids) {
      items = *turn.covered_ids;
    } else {
      scores = item_scores(turn.text, form, config.map_threshold);
      for (const auto& [id, s] : scores) items.push_back(id);
    }
    std::erase_if(items, [&](const std::string& id) { return form.find(id) == nullptr; });
    if (items.empty()) continue;

    if (!started) {
      started = true;
      if (context.mode == Mode::modular) {
        if (!context.first_group.empty()) {
          const bool inside = std::all_of(items.begin(), items.end(), [&](const std::string& id) {
            return std::find(context.first_group.begin(), context.first_group.end(), id) != context.first_group.end();
          });
          if (!inside) ++out[ErrorCategory::starting_from_middle];
        }
      } else {
        const auto top = form.top_level();
        const auto first = *std::min_element(items.begin(), items.end(), [&](const auto& a, const auto& b) {
          return form.at(a).ordinal < form.at(b).ordinal;
        });
        if (top.empty() || top.front()->question_id != first) ++out[ErrorCategory::starting_from_middle];
      }
    }

    if (context.mode == Mode::baseline) {
      for (const auto& [id, s] : scores) {
        if (s < config.alter_upper) ++out[ErrorCategory::altering_questions];
      }
    }

    const auto reach = reachable_set(form, ledger_view(ledger, asked));
    for (const auto& id : items) {
      if (recorded.count(id) != 0) ++out[ErrorCategory::repetitive_questioning];
      if (reach.count(id) == 0) ++out[ErrorCategory::logical_jump_error];
    }
    asked.insert(items.begin(), items.end());
  }

  // Fired triggers whose children were never asked are logical jumps; those
  // children are not counted again as skipped.
  const auto view = ledger_view(ledger, asked);
  std::set<std::string> jumped_over;
  for (const auto& [id, value] : view) {
    const auto& q = form.at(id);
    for (const auto& rule : q.triggers) {
      if (!condition_holds(rule.when, value)) continue;
      bool missed = false;
      for (const auto& child : rule.then) {
        if (asked.count(child) == 0) {
          missed = true;
          jumped_over.insert(child);
        }
      }
      if (missed) ++out[ErrorCategory::logical_jump_error];
    }
  }

  if (context.completed) {
    const auto ordered = reachable_in_order(form, view);
    for (const auto& id : ordered) {
      if (asked.count(id) == 0 && jumped_over.count(id) == 0) ++out[ErrorCategory::skipping_missing];
    }
    if (!ordered.empty()) {
      const auto& last = ordered.back();
      if (recorded.count(last) == 0 && context.exhausted.count(last) == 0) ++out[ErrorCategory::ending_prematurely];
    }
  }
  return out;
}

json error_counts_json(const ErrorCounts& c, Mode mode) {
  json j = json::object();
  for (auto cat : kAllCategories) {
    if (cat == ErrorCategory::altering_questions && mode == Mode::modular) {
      j[std::string(to_string(cat))] = "N/A";
    } else {
      j[std::string(to_string(cat))] = c[cat];
    }
  }
  return j;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

json metrics_to_json(const RunMetrics& m) {
  json errors = json::object();
  for (auto cat : kAllCategories) errors[std::string(to_string(cat))] = m.errors[cat];
  return json{{"form_id", m.form_id},
              {"mode", to_string(m.mode)},
              {"patient", m.patient},
              {"system_turns", m.system_turns},
              {"prompt_tokens", m.prompt_tokens},
              {"completion_tokens", m.completion_tokens},
              {"requests", m.requests},
              {"mean_latency_s", m.mean_latency_s},
              {"accuracy", m.accuracy},
              {"errors", errors},
              {"completed", m.completed}};
}

RunMetrics metrics_from_json(const json& j) {
  RunMetrics m;
  m.form_id = j.at("form_id").get<std::string>();
  m.mode = mode_from(j.at("mode").get<std::string>());
  m.patient = j.value("patient", std::string{});
  m.system_turns = j.at("system_turns").get<std::size_t>();
  m.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  m.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
  m.requests = j.value("requests", std::int64_t{0});
  m.mean_latency_s = j.value("mean_latency_s", 0.0);
  m.accuracy = j.value("accuracy", 0.0);
  if (j.contains("errors")) {
    for (const auto& [k, v] : j["errors"].items()) {
      if (auto c = error_category_from(k); c && v.is_number()) m.errors[*c] = v.get<std::size_t>();
    }
  }
  m.completed = j.value("completed", false);
  return m;
}

RunMetrics compute_metrics(const SessionState& state, const FormSpec& form, const GroundTruthLedger& ledger,
                           const MeterTotals& tokens, const RunContext& context, const std::string& patient,
                           const EvalConfig& config) {
  RunMetrics m;
  m.form_id = form.form_id;
  m.mode = state.mode;
  m.patient = patient;
  m.system_turns = state.turn_count;
  m.prompt_tokens = tokens.prompt_tokens;
  m.completion_tokens = tokens.completion_tokens;
  m.requests = tokens.requests;
  double latency = 0.0;
  std::size_t n = 0;
  for (const auto& t : state.transcript) {
    if (!t.is_question()) continue;
    latency += t.latency_s;
    ++n;
  }
  m.mean_latency_s = n == 0 ? 0.0 : latency / static_cast<double>(n);
  m.accuracy = score_accuracy(finalize(state, form, tokens, true), ledger).accuracy();
  m.errors = detect_errors(state.transcript, form, ledger, context, config);
  m.completed = state.status == SessionStatus::completed;
  return m;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

const std::map<std::string, double>& reference_turn_reductions() {
  static const std::map<std::string, double> ref = {{"form-1", 64.0}, {"form-2", 48.1}, {"form-3", 28.1}};
  return ref;
}

namespace {

struct Agg {
  std::size_t runs = 0;
  std::size_t incomplete = 0;
  double turns = 0.0;
  std::size_t turn_n = 0;
  double tokens = 0.0;
  double prompt = 0.0;
  double accuracy = 0.0;
  ErrorCounts errors;

  void add(const RunMetrics& m) {
    ++runs;
    if (m.completed) {
      turns += static_cast<double>(m.system_turns);
      ++turn_n;
    } else {
      ++incomplete;
    }
    tokens += static_cast<double>(m.tokens());
    prompt += static_cast<double>(m.prompt_tokens);
    accuracy += m.accuracy;
    for (auto c : kAllCategories) errors[c] += m.errors[c];
  }
  std::optional<double> mean_turns() const {
    if (turn_n == 0) return std::nullopt;
    return turns / static_cast<double>(turn_n);
  }
};

}  // namespace

ComparisonReport compare_runs(const std::vector<RunMetrics>& modular, const std::vector<RunMetrics>& baseline,
                              const EvalConfig& config) {
  std::map<std::string, Agg> mod;
  std::map<std::string, Agg> base;
  for (const auto& m : modular) mod[m.form_id].add(m);
  for (const auto& m : baseline) base[m.form_id].add(m);
  std::set<std::string> a, b;
  for (const auto& [k, v] : mod) a.insert(k);
  for (const auto& [k, v] : base) b.insert(k);
  if (a != b || a.empty()) throw std::invalid_argument("run sets cover different forms (or none)");

  ComparisonReport r;
  r.config = config;
  double reduction_sum = 0.0;
  std::size_t reduction_n = 0;
  for (const auto& id : a) {
    const auto& m = mod[id];
    const auto& bl = base[id];
    FormComparison f;
    f.form_id = id;
    f.modular_runs = m.runs;
    f.baseline_runs = bl.runs;
    f.modular_incomplete = m.incomplete;
    f.baseline_incomplete = bl.incomplete;
    f.modular_turns = m.mean_turns();
    f.baseline_turns = bl.mean_turns();
    if (f.modular_turns && f.baseline_turns && *f.baseline_turns > 0.0) {
      f.turn_reduction_pct = (*f.baseline_turns - *f.modular_turns) / *f.baseline_turns * 100.0;
      reduction_sum += *f.turn_reduction_pct;
      ++reduction_n;
    }
    const double mt = m.tokens / static_cast<double>(m.runs);
    const double bt = bl.tokens / static_cast<double>(bl.runs);
    if (mt > 0.0) f.token_ratio = bt / mt;
    const double mp = m.prompt / static_cast<double>(m.runs);
    const double bp = bl.prompt / static_cast<double>(bl.runs);
    if (mp > 0.0) f.prompt_token_ratio = bp / mp;
    f.modular_accuracy = m.accuracy / static_cast<double>(m.runs);
    f.baseline_accuracy = bl.accuracy / static_cast<double>(bl.runs);
    f.accuracy_delta = f.modular_accuracy - f.baseline_accuracy;
    f.modular_errors = m.errors;
    f.baseline_errors = bl.errors;
    if (bl.incomplete > 0) {
      r.footnotes.push_back(id + ": " + std::to_string(bl.incomplete) + " of " + std::to_string(bl.runs) +
                            " baseline runs did not complete (turn cap or failure) and are excluded from the turn "
                            "average.");
    }
    if (m.incomplete > 0) {
      r.footnotes.push_back(id + ": " + std::to_string(m.incomplete) + " of " + std::to_string(m.runs) +
                            " modular runs did not complete and are excluded from the turn average.");
    }
    r.forms.push_back(std::move(f));
  }
  if (reduction_n > 0) r.mean_turn_reduction_pct = reduction_sum / static_cast<double>(reduction_n);
  return r;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt(const std::optional<double>& v, int precision = 1, std::string_view suffix = "") {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v << suffix;
  return os.str();
}

}  // namespace

json report_to_json(const ComparisonReport& r) {
  json forms = json::array();
  for (const auto& f : r.forms) {
    json jf{{"form_id", f.form_id},
            {"modular_runs", f.modular_runs},
            {"baseline_runs", f.baseline_runs},
            {"modular_incomplete", f.modular_incomplete},
            {"baseline_incomplete", f.baseline_incomplete},
            {"modular_turns", opt(f.modular_turns)},
            {"baseline_turns", opt(f.baseline_turns)},
            {"turn_reduction_pct", opt(f.turn_reduction_pct)},
            {"token_ratio", opt(f.token_ratio)},
            {"prompt_token_ratio", opt(f.prompt_token_ratio)},
            {"modular_accuracy", f.modular_accuracy},
            {"baseline_accuracy", f.baseline_accuracy},
            {"accuracy_delta", f.accuracy_delta},
            {"modular_errors", error_counts_json(f.modular_errors, Mode::modular)},
            {"baseline_errors", error_counts_json(f.baseline_errors, Mode::baseline)}};
    const auto& ref = reference_turn_reductions();
    if (auto it = ref.find(f.form_id); it != ref.end()) jf["reference_turn_reduction_pct"] = it->second;
    forms.push_back(std::move(jf));
  }
  return json{{"forms", forms},
              {"mean_turn_reduction_pct", opt(r.mean_turn_reduction_pct)},
              {"footnotes", r.footnotes},
              {"thresholds", eval_config_json(r.config)}};
}

std::string report_table(const ComparisonReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "form" << std::right << std::setw(10) << "mod.turns" << std::setw(11)
     << "base.turns" << std::setw(11) << "reduction" << std::setw(12) << "token.ratio" << std::setw(10) << "mod.acc"
     << std::setw(10) << "base.acc" << std::setw(10) << "mod.err" << std::setw(10) << "base.err" << "\n";
  for (const auto& f : r.forms) {
    os << std::left << std::setw(10) << f.form_id << std::right << std::setw(10) << fmt(f.modular_turns)
       << std::setw(11) << fmt(f.baseline_turns) << std::setw(11) << fmt(f.turn_reduction_pct, 1, "%")
       << std::setw(12) << fmt(f.token_ratio, 2, "x") << std::setw(10) << fmt(f.modular_accuracy, 3)
       << std::setw(10) << fmt(f.baseline_accuracy, 3) << std::setw(10) << f.modular_errors.total() << std::setw(10)
       << f.baseline_errors.total() << "\n";
  }
  os << "mean turn reduction: " << fmt(r.mean_turn_reduction_pct, 1, "%") << "\n";
  os << "error counts exclude altering_questions for modular runs (N/A: rephrasing is intended there)\n";
  os << "thresholds: mention similarity >= " << r.config.map_threshold << ", rewritten below " << r.config.alter_upper
     << ", excessive latency > " << r.config.latency_limit_s << " s\n";
  os << "reference turn reductions:";
  for (const auto& [id, v] : reference_turn_reductions()) os << " " << id << " " << fmt(v, 1, "%");
  os << "\n";
  for (std::size_t i = 0; i < r.footnotes.size(); ++i) os << "[" << (i + 1) << "] " << r.footnotes[i] << "\n";
  return os.str();
}

}  // namespace followup
