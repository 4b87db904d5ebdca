#include "followup/answer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "followup/text.hpp"

namespace followup {

namespace {

const std::unordered_map<std::string, std::string>& unit_synonyms() {
  static const std::unordered_map<std::string, std::string> table = {
      {"kg", "kg"},          {"kgs", "kg"},          {"kilo", "kg"},        {"kilos", "kg"},
      {"kilogram", "kg"},    {"kilograms", "kg"},    {"kilogramme", "kg"},  {"kilogrammes", "kg"},
      {"g", "g"},            {"gram", "g"},          {"grams", "g"},        {"lb", "lb"},
      {"lbs", "lb"},         {"pound", "lb"},        {"pounds", "lb"},      {"cm", "cm"},
      {"centimeter", "cm"},  {"centimeters", "cm"},  {"centimetre", "cm"},  {"centimetres", "cm"},
      {"m", "m"},            {"meter", "m"},         {"meters", "m"},       {"metre", "m"},
      {"metres", "m"},       {"mmhg", "mmhg"},       {"bpm", "bpm"},        {"beats", "bpm"},
      {"c", "c"},            {"celsius", "c"},       {"degrees", "c"},      {"ml", "ml"},
      {"millilitre", "ml"},  {"milliliter", "ml"},   {"millilitres", "ml"}, {"milliliters", "ml"},
      {"l", "l"},            {"liter", "l"},         {"liters", "l"},       {"litre", "l"},
      {"litres", "l"},       {"h", "hour"},          {"hr", "hour"},        {"hrs", "hour"},
      {"hour", "hour"},      {"hours", "hour"},      {"min", "minute"},     {"mins", "minute"},
      {"minute", "minute"},  {"minutes", "minute"},  {"day", "day"},        {"days", "day"},
      {"week", "week"},      {"weeks", "week"},      {"month", "month"},    {"months", "month"},
      {"year", "year"},      {"years", "year"},      {"yr", "year"},        {"yrs", "year"},
      {"cigarette", "cigarette"}, {"cigarettes", "cigarette"}, {"cigs", "cigarette"},
      {"time", "time"},      {"times", "time"},      {"glass", "glass"},    {"glasses", "glass"},
      {"cup", "cup"},        {"cups", "cup"},        {"drink", "drink"},    {"drinks", "drink"},
      {"step", "step"},      {"steps", "step"},      {"pill", "pill"},      {"pills", "pill"},
      {"tablet", "tablet"},  {"tablets", "tablet"},  {"point", "point"},    {"points", "point"},
  };
  return table;
}

}  // namespace

std::string AnswerValue::kind() const {
  switch (value_.index()) {
    case 0: return "no_intent";
    case 1: return "refused";
    case 2: return "chosen";
    case 3: return "chosen_many";
    default: return "blanks";
  }
}

std::string canonical_unit(std::string_view unit) {
  std::string u = text::casefold(text::trim(unit));
  if (u.empty()) return u;
  const auto& table = unit_synonyms();
  if (auto it = table.find(u); it != table.end()) return it->second;
  if (u.size() > 2 && u.back() == 's') {
    u.pop_back();
    if (auto it = table.find(u); it != table.end()) return it->second;
  }
  return u;
}

bool is_known_unit(std::string_view unit) {
  const auto& table = unit_synonyms();
  std::string u = text::casefold(text::trim(unit));
  if (table.count(u) != 0) return true;
  if (u.size() > 2 && u.back() == 's') u.pop_back();
  return table.count(u) != 0;
}

bool same_quantity(const Quantity& a, const Quantity& b) {
  if (canonical_unit(a.unit) != canonical_unit(b.unit)) return false;
  const double scale = std::max({1.0, std::fabs(a.value), std::fabs(b.value)});
  return std::fabs(a.value - b.value) <= 1e-9 * scale;
}

bool answers_match(const AnswerValue& got, const AnswerValue& want) {
  if (got.kind() != want.kind()) return false;
  if (const auto* w = want.as_blanks()) {
    const auto* g = got.as_blanks();
    if (g->values.size() != w->values.size()) return false;
    for (const auto& [id, wv] : w->values) {
      auto it = g->values.find(id);
      if (it == g->values.end()) return false;
      const auto& gv = it->second;
      if (gv.index() != wv.index()) return false;
      if (const auto* wq = std::get_if<Quantity>(&wv)) {
        if (!same_quantity(std::get<Quantity>(gv), *wq)) return false;
      } else if (text::casefold(text::trim(std::get<std::string>(gv))) !=
                 text::casefold(text::trim(std::get<std::string>(wv)))) {
        return false;
      }
    }
    return true;
  }
  // chosen_many uses std::set, so equality is already order-free.
  return got == want;
}

std::string render_answer(const AnswerValue& a) {
  std::ostringstream os;
  if (const auto* c = a.as_chosen()) {
    os << c->option_id;
  } else if (const auto* m = a.as_chosen_many()) {
    bool first = true;
    for (const auto& id : m->option_ids) {
      os << (first ? "" : ", ") << id;
      first = false;
    }
  } else if (const auto* b = a.as_blanks()) {
    bool first = true;
    for (const auto& [id, v] : b->values) {
      os << (first ? "" : "; ") << id << "=";
      if (const auto* q = std::get_if<Quantity>(&v)) {
        os << q->value << (q->unit.empty() ? "" : " ") << q->unit;
      } else {
        os << std::get<std::string>(v);
      }
      first = false;
    }
  } else {
    os << "<" << a.kind() << ">";
  }
  return os.str();
}

void to_json(nlohmann::json& j, const BlankValue& v) {
  if (const auto* q = std::get_if<Quantity>(&v)) {
    j = nlohmann::json{{"number", q->value}, {"unit", q->unit}};
  } else {
    j = nlohmann::json{{"text", std::get<std::string>(v)}};
  }
}

void from_json(const nlohmann::json& j, BlankValue& v) {
  if (j.contains("number")) {
    v = Quantity{j.at("number").get<double>(), canonical_unit(j.value("unit", std::string{}))};
  } else if (j.contains("text")) {
    v = j.at("text").get<std::string>();
  } else {
    throw std::invalid_argument("blank value needs 'number' or 'text'");
  }
}

void to_json(nlohmann::json& j, const AnswerValue& a) {
  j = nlohmann::json{{"kind", a.kind()}};
  if (const auto* c = a.as_chosen()) {
    j["option"] = c->option_id;
  } else if (const auto* m = a.as_chosen_many()) {
    j["options"] = m->option_ids;
  } else if (const auto* b = a.as_blanks()) {
    auto values = nlohmann::json::object();
    for (const auto& [id, v] : b->values) values[id] = v;
    j["values"] = std::move(values);
  }
}

void from_json(const nlohmann::json& j, AnswerValue& a) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "chosen") {
    a = AnswerValue::chosen(j.at("option").get<std::string>());
  } else if (kind == "chosen_many") {
    a = AnswerValue::chosen_many(j.at("options").get<std::set<std::string>>());
  } else if (kind == "blanks") {
    std::map<std::string, BlankValue> values;
    for (const auto& [id, v] : j.at("values").items()) values.emplace(id, v.get<BlankValue>());
    a = AnswerValue::blanks(std::move(values));
  } else if (kind == "no_intent") {
    a = AnswerValue::no_intent();
  } else if (kind == "refused") {
    a = AnswerValue::refused();
  } else {
    throw std::invalid_argument("unknown answer kind '" + kind + "'");
  }
}

}  // namespace followup
