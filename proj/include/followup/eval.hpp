/**
 * @file eval.hpp
 * @brief Run scoring: extraction accuracy, transcript error detectors, mode comparison.
 */
#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/form.hpp"
#include "followup/patient.hpp"
#include "followup/session.hpp"
#include "followup/transcript.hpp"

namespace followup {

/// Thresholds of the transcript predicates; printed with every report.
struct EvalConfig {
  double map_threshold = 0.35;   // utterance mentions an item
  double alter_upper = 0.70;     // below this a mention counts as rewritten
  double latency_limit_s = 30.0; // slower turns are excessive
};

nlohmann::json eval_config_json(const EvalConfig& c);

/// Share of the question's stemmed content words that occur in the utterance.
/// Option labels are not scored: answer scales are shared across many items
/// and would make every item of a scale match any utterance that lists it.
double item_similarity(std::string_view utterance, const QuestionSpec& q);

/// Items whose similarity reaches the threshold, with their scores.
std::map<std::string, double> item_scores(std::string_view utterance, const FormSpec& form,
                                          double threshold = EvalConfig{}.map_threshold);

std::set<std::string> map_utterance_to_items(std::string_view utterance, const FormSpec& form,
                                             double threshold = EvalConfig{}.map_threshold);

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

struct AccuracyResult {
  std::size_t correct = 0;
  std::size_t scored = 0;
  std::vector<std::string> wrong;
  std::vector<std::string> warnings;  // ledger gaps
  double accuracy() const { return scored == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(scored); }
};

/// Every item of the record (answered or not) with a ledger entry is scored;
/// unanswered items count as wrong; items missing from the ledger are skipped with a warning.
AccuracyResult score_accuracy(const CompletionRecord& record, const GroundTruthLedger& ledger);

// ---------------------------------------------------------------------------
// Error detectors
// ---------------------------------------------------------------------------

enum class ErrorCategory {
  starting_from_middle,
  ending_prematurely,
  excessive_response_time,
  altering_questions,
  repetitive_questioning,
  logical_jump_error,
  skipping_missing,
};

inline constexpr std::array<ErrorCategory, 7> kAllCategories = {
    ErrorCategory::starting_from_middle,   ErrorCategory::ending_prematurely, ErrorCategory::excessive_response_time,
    ErrorCategory::altering_questions,     ErrorCategory::repetitive_questioning,
    ErrorCategory::logical_jump_error,     ErrorCategory::skipping_missing,
};

std::string_view to_string(ErrorCategory c);
std::optional<ErrorCategory> error_category_from(std::string_view s);

struct ErrorCounts {
  std::array<std::size_t, 7> counts{};
  std::size_t& operator[](ErrorCategory c) { return counts[static_cast<std::size_t>(c)]; }
  std::size_t operator[](ErrorCategory c) const { return counts[static_cast<std::size_t>(c)]; }
  std::size_t total() const;
  friend bool operator==(const ErrorCounts&, const ErrorCounts&) = default;
};

/// What the detectors need besides the transcript.
struct RunContext {
  Mode mode = Mode::baseline;
  bool completed = false;                // the system ended the run itself (not a cap or failure)
  std::vector<std::string> first_group;  // modular: members of plan group 1
  std::set<std::string> exhausted;       // modular: items given up after re-asks
};

/// Deterministic transcript predicates for the seven categories. Items asked
/// are covered_ids when present, otherwise the mapped items of the utterance.
/// Reachability is evaluated on the ground-truth values of items asked so far.
ErrorCounts detect_errors(const Transcript& transcript, const FormSpec& form, const GroundTruthLedger& ledger,
                          const RunContext& context, const EvalConfig& config = {});

nlohmann::json error_counts_json(const ErrorCounts& c, Mode mode);

// ---------------------------------------------------------------------------
// Metrics and comparison
// ---------------------------------------------------------------------------

struct RunMetrics {
  std::string form_id;
  Mode mode = Mode::modular;
  std::string patient;
  std::size_t system_turns = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t requests = 0;
  double mean_latency_s = 0.0;
  double accuracy = 0.0;
  ErrorCounts errors;
  bool completed = false;

  std::int64_t tokens() const { return prompt_tokens + completion_tokens; }
};

nlohmann::json metrics_to_json(const RunMetrics& m);
RunMetrics metrics_from_json(const nlohmann::json& j);

/// Builds metrics for one finished session. `tokens` is the session-scoped ledger total.
RunMetrics compute_metrics(const SessionState& state, const FormSpec& form, const GroundTruthLedger& ledger,
                           const MeterTotals& tokens, const RunContext& context, const std::string& patient,
                           const EvalConfig& config = {});

struct FormComparison {
  std::string form_id;
  std::size_t modular_runs = 0;
  std::size_t baseline_runs = 0;
  std::size_t modular_incomplete = 0;
  std::size_t baseline_incomplete = 0;
  std::optional<double> modular_turns;   // mean over completed runs
  std::optional<double> baseline_turns;  // mean over completed runs
  std::optional<double> turn_reduction_pct;
  std::optional<double> token_ratio;         // baseline mean tokens / modular mean tokens
  std::optional<double> prompt_token_ratio;  // same, prompt tokens only
  double modular_accuracy = 0.0;
  double baseline_accuracy = 0.0;
  double accuracy_delta = 0.0;  // modular - baseline
  ErrorCounts modular_errors;   // summed over runs
  ErrorCounts baseline_errors;
};

struct ComparisonReport {
  std::vector<FormComparison> forms;
  std::optional<double> mean_turn_reduction_pct;
  std::vector<std::string> footnotes;
  EvalConfig config;
};

/// Reference turn reductions per replica form, shown in the report footer.
const std::map<std::string, double>& reference_turn_reductions();

/// Throws std::invalid_argument when the two run sets do not cover the same forms.
ComparisonReport compare_runs(const std::vector<RunMetrics>& modular, const std::vector<RunMetrics>& baseline,
                              const EvalConfig& config = {});

nlohmann::json report_to_json(const ComparisonReport& r);
std::string report_table(const ComparisonReport& r);

}  // namespace followup
