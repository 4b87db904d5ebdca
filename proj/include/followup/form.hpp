/**
 * @file form.hpp
 * @brief Conditional follow-up form model: parsing, validation, reachability.
 *
 * A form is an ordered list of typed questions. Trigger rules on a parent
 * question activate conditional child questions once a recorded answer meets
 * the rule's condition. Conditional questions never appear in the default
 * top-level order.
 */
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/answer.hpp"

namespace followup {

enum class QuestionType { single_choice, multi_choice, fill_blank };

std::string_view to_string(QuestionType t);
std::optional<QuestionType> question_type_from(std::string_view s);

struct OptionSpec {
  std::string option_id;
  std::string label;
  friend bool operator==(const OptionSpec&, const OptionSpec&) = default;
};

enum class ValueKind { free_text, number };

struct BlankSpec {
  std::string blank_id;
  std::string suffix;
  ValueKind value_kind = ValueKind::free_text;
  std::optional<std::string> unit;
  friend bool operator==(const BlankSpec&, const BlankSpec&) = default;
};

enum class ConditionKind { equals, contains, answered, matches_text };

std::string_view to_string(ConditionKind k);

struct TriggerCondition {
  ConditionKind kind = ConditionKind::answered;
  std::string option_id;  // equals / contains
  std::string pattern;    // matches_text (case-folded substring)
  friend bool operator==(const TriggerCondition&, const TriggerCondition&) = default;
};

struct TriggerRule {
  TriggerCondition when;
  std::vector<std::string> then;
  friend bool operator==(const TriggerRule&, const TriggerRule&) = default;
};

/// True if a recorded answer satisfies the condition. Markers never fire.
bool condition_holds(const TriggerCondition& when, const AnswerValue& answer);

struct QuestionSpec {
  std::string question_id;
  std::size_t ordinal = 0;
  std::string text;
  QuestionType qtype = QuestionType::single_choice;
  std::vector<OptionSpec> options;
  std::vector<BlankSpec> blanks;
  std::vector<TriggerRule> triggers;
  bool conditional = false;
  bool required = true;

  const OptionSpec* find_option(std::string_view option_id) const;
  const BlankSpec* find_blank(std::string_view blank_id) const;

  friend bool operator==(const QuestionSpec&, const QuestionSpec&) = default;
};

/// Immutable after parse; share freely across threads.
class FormSpec {
 public:
  std::string form_id;
  std::string title;
  std::string version;
  std::vector<QuestionSpec> questions;

  const QuestionSpec* find(std::string_view question_id) const;
  const QuestionSpec& at(std::string_view question_id) const;
  /// Non-conditional questions in authored order.
  std::vector<const QuestionSpec*> top_level() const;

  friend bool operator==(const FormSpec&, const FormSpec&) = default;
};

inline constexpr std::size_t kMaxQuestions = 146;
inline constexpr std::size_t kMaxTriggerDepth = 5;
inline constexpr std::size_t kMaxIdLength = 64;

bool valid_identifier(std::string_view id);

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Finding {
  std::string question_id;  // empty for form-level findings
  std::string rule;
  std::string detail;
  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
  bool has(std::string_view rule) const;
};

class FormError : public std::runtime_error {
 public:
  enum class Kind { syntax, schema, semantic };

  FormError(Kind kind, const std::string& what, std::vector<Finding> findings = {})
      : std::runtime_error(what), kind_(kind), findings_(std::move(findings)) {}

  Kind kind() const { return kind_; }
  const std::vector<Finding>& findings() const { return findings_; }

 private:
  Kind kind_;
  std::vector<Finding> findings_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Schema-level decode only. Semantic invariants are left to validate_form.
FormSpec decode_form(const nlohmann::json& doc);

/// Parse + validate. Throws FormError (syntax with byte offset, schema, or semantic with findings).
FormSpec parse_form(std::string_view document);
FormSpec parse_form_json(const nlohmann::json& doc);

nlohmann::ordered_json form_to_json(const FormSpec& form);
std::string serialize_form(const FormSpec& form, int indent = 2);

ValidationReport validate_form(const FormSpec& form);

using AnswerMap = std::map<std::string, AnswerValue>;

/// All non-conditional questions plus every conditional question whose
/// trigger fires from a reachable parent's recorded answer, transitively.
/// Throws std::out_of_range on an answer for an unknown question id.
std::set<std::string> reachable_set(const FormSpec& form, const AnswerMap& answers);

/// reachable_set ordered by authored ordinal.
std::vector<std::string> reachable_in_order(const FormSpec& form, const AnswerMap& answers);

struct StatsRecord {
  std::size_t total = 0;
  std::size_t single_choice = 0;
  std::size_t multi_choice = 0;
  std::size_t fill_blank = 0;
  std::size_t conditional = 0;
  std::size_t trigger_rules = 0;
  bool branching = false;
  std::size_t max_depth = 0;  // longest trigger chain; 0 without branching
};

StatsRecord form_stats(const FormSpec& form);

nlohmann::json stats_to_json(const StatsRecord& s);

}  // namespace followup
