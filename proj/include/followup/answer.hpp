/**
 * @file answer.hpp
 * @brief Structured per-question answers produced by extraction.
 */
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>

#include <nlohmann/json.hpp>

namespace followup {

struct Quantity {
  double value = 0.0;
  std::string unit;  // canonical unit, empty when unitless

  friend bool operator==(const Quantity&, const Quantity&) = default;
};

using BlankValue = std::variant<std::string, Quantity>;

struct Chosen {
  std::string option_id;
  friend bool operator==(const Chosen&, const Chosen&) = default;
};

struct ChosenMany {
  std::set<std::string> option_ids;
  friend bool operator==(const ChosenMany&, const ChosenMany&) = default;
};

struct Blanks {
  std::map<std::string, BlankValue> values;
  friend bool operator==(const Blanks&, const Blanks&) = default;
};

struct NoIntent {
  friend bool operator==(const NoIntent&, const NoIntent&) = default;
};

struct Refused {
  friend bool operator==(const Refused&, const Refused&) = default;
};

/// Extraction result for one question. `no_intent` and `refused` are markers,
/// everything else is a usable intent.
class AnswerValue {
 public:
  using Variant = std::variant<NoIntent, Refused, Chosen, ChosenMany, Blanks>;

  AnswerValue() = default;
  template <class T>
    requires std::is_constructible_v<Variant, T&&> && (!std::is_same_v<std::remove_cvref_t<T>, AnswerValue>)
  AnswerValue(T&& v) : value_(std::forward<T>(v)) {}  // NOLINT(google-explicit-constructor)

  static AnswerValue chosen(std::string option_id) { return Chosen{std::move(option_id)}; }
  static AnswerValue chosen_many(std::set<std::string> ids) { return ChosenMany{std::move(ids)}; }
  static AnswerValue blanks(std::map<std::string, BlankValue> values) { return Blanks{std::move(values)}; }
  static AnswerValue no_intent() { return NoIntent{}; }
  static AnswerValue refused() { return Refused{}; }

  const Variant& get() const { return value_; }

  bool is_no_intent() const { return std::holds_alternative<NoIntent>(value_); }
  bool is_refused() const { return std::holds_alternative<Refused>(value_); }
  /// A chosen / chosen_many / blanks value; the flow treats anything else as unanswered.
  bool has_intent() const { return !is_no_intent() && !is_refused(); }

  const Chosen* as_chosen() const { return std::get_if<Chosen>(&value_); }
  const ChosenMany* as_chosen_many() const { return std::get_if<ChosenMany>(&value_); }
  const Blanks* as_blanks() const { return std::get_if<Blanks>(&value_); }

  std::string kind() const;

  friend bool operator==(const AnswerValue&, const AnswerValue&) = default;

 private:
  Variant value_;
};

/// Maps unit spellings ("kilos", "Kilograms", "kg") to one canonical token.
/// Unknown units are case-folded and stripped of a plural 's'.
std::string canonical_unit(std::string_view unit);

/// True if the spelling is in the unit synonyms table.
bool is_known_unit(std::string_view unit);

/// Numeric equality with canonical units (and 1e-9 relative tolerance).
bool same_quantity(const Quantity& a, const Quantity& b);

/// Scoring equality: set semantics for multi-choice, unit-normalized numbers, case-folded text.
bool answers_match(const AnswerValue& got, const AnswerValue& want);

std::string render_answer(const AnswerValue& a);

void to_json(nlohmann::json& j, const AnswerValue& a);
void from_json(const nlohmann::json& j, AnswerValue& a);
void to_json(nlohmann::json& j, const BlankValue& v);
void from_json(const nlohmann::json& j, BlankValue& v);

}  // namespace followup
