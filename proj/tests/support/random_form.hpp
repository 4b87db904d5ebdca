/**
 * @file random_form.hpp
 * @brief Seeded random forms and ledgers for property tests, plus an
 *        independent reachability oracle.
 */
#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "followup/form.hpp"
#include "followup/patient.hpp"

namespace followup::fixtures {

struct RandomFormOptions {
  std::size_t max_questions = 12;
  std::size_t max_depth = 2;
  double conditional_rate = 0.35;
  double unanswerable_rate = 0.1;  // ledger says no_intent or refused
};

struct RandomFixture {
  FormSpec form;
  GroundTruthLedger ledger;
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline bool chance(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

inline RandomFixture random_fixture(std::uint64_t seed, const RandomFormOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  RandomFixture fx;
  auto& form = fx.form;
  form.form_id = "rand-" + std::to_string(seed);
  form.title = "Random form " + std::to_string(seed);
  form.version = "1";
  const std::size_t n = pick(rng, 1, opt.max_questions);
  std::vector<std::size_t> depth(n, 0);
  static const char* kUnits[] = {"kg", "cm", "year", "hour"};

  for (std::size_t i = 0; i < n; ++i) {
    QuestionSpec q;
    q.ordinal = i;
    q.question_id = "q" + std::to_string(i);
    q.text = "Question number " + std::to_string(i) + " about topic" + std::to_string(i) + "?";
    q.qtype = static_cast<QuestionType>(pick(rng, 0, 2));
    if (q.qtype == QuestionType::fill_blank) {
      const std::size_t nb = pick(rng, 1, 2);
      for (std::size_t b = 0; b < nb; ++b) {
        BlankSpec blank;
        blank.blank_id = "b" + std::to_string(b);
        if (chance(rng, 0.6)) {
          blank.value_kind = ValueKind::number;
          blank.unit = kUnits[pick(rng, 0, 3)];
          blank.suffix = *blank.unit;
        }
        q.blanks.push_back(std::move(blank));
      }
    } else {
      const std::size_t no = pick(rng, 2, 4);
      for (std::size_t k = 0; k < no; ++k) {
        const std::string label = "choice" + std::to_string(i) + static_cast<char>('a' + k);
        q.options.push_back({label, label});
      }
    }
    form.questions.push_back(std::move(q));
  }

  // Conditional children hang off earlier questions, keeping trigger depth bounded.
  for (std::size_t i = 1; i < n; ++i) {
    if (!chance(rng, opt.conditional_rate)) continue;
    std::vector<std::size_t> parents;
    for (std::size_t p = 0; p < i; ++p) {
      if (depth[p] < opt.max_depth) parents.push_back(p);
    }
    if (parents.empty()) continue;
    const std::size_t p = parents[pick(rng, 0, parents.size() - 1)];
    auto& parent = form.questions[p];
    TriggerRule rule;
    switch (parent.qtype) {
      case QuestionType::single_choice:
        rule.when.kind = ConditionKind::equals;
        rule.when.option_id = parent.options[pick(rng, 0, parent.options.size() - 1)].option_id;
        break;
      case QuestionType::multi_choice:
        rule.when.kind = ConditionKind::contains;
        rule.when.option_id = parent.options[pick(rng, 0, parent.options.size() - 1)].option_id;
        break;
      case QuestionType::fill_blank: {
        const bool has_text = std::any_of(parent.blanks.begin(), parent.blanks.end(),
                                          [](const BlankSpec& b) { return b.value_kind == ValueKind::free_text; });
        if (has_text && chance(rng, 0.5)) {
          rule.when.kind = ConditionKind::matches_text;
          rule.when.pattern = "urgent";
        } else {
          rule.when.kind = ConditionKind::answered;
        }
        break;
      }
    }
    rule.then.push_back(form.questions[i].question_id);
    parent.triggers.push_back(std::move(rule));
    form.questions[i].conditional = true;
    depth[i] = depth[p] + 1;
  }

  for (const auto& q : form.questions) {
    if (chance(rng, opt.unanswerable_rate)) {
      fx.ledger.emplace(q.question_id, chance(rng, 0.5) ? AnswerValue::no_intent() : AnswerValue::refused());
      continue;
    }
    switch (q.qtype) {
      case QuestionType::single_choice:
        fx.ledger.emplace(q.question_id, AnswerValue::chosen(q.options[pick(rng, 0, q.options.size() - 1)].option_id));
        break;
      case QuestionType::multi_choice: {
        std::set<std::string> ids;
        for (const auto& o : q.options) {
          if (chance(rng, 0.5)) ids.insert(o.option_id);
        }
        if (ids.empty()) ids.insert(q.options.front().option_id);
        fx.ledger.emplace(q.question_id, AnswerValue::chosen_many(std::move(ids)));
        break;
      }
      case QuestionType::fill_blank: {
        std::map<std::string, BlankValue> values;
        for (const auto& b : q.blanks) {
          if (b.value_kind == ValueKind::number) {
            values.emplace(b.blank_id, Quantity{static_cast<double>(pick(rng, 1, 250)), *b.unit});
          } else {
            values.emplace(b.blank_id, std::string(chance(rng, 0.5) ? "urgent matter" : "routine note"));
          }
        }
        fx.ledger.emplace(q.question_id, AnswerValue::blanks(std::move(values)));
        break;
      }
    }
  }
  return fx;
}

/// Reachability computed from first principles: top-level questions, plus the
/// children of any reachable question whose ledger answer satisfies a rule.
inline std::set<std::string> oracle_reachable(const FormSpec& form, const GroundTruthLedger& ledger) {
  auto holds = [](const TriggerCondition& c, const AnswerValue& a) {
    if (!a.has_intent()) return false;
    if (c.kind == ConditionKind::answered) return true;
    if (c.kind == ConditionKind::equals) return a.as_chosen() != nullptr && a.as_chosen()->option_id == c.option_id;
    if (c.kind == ConditionKind::contains) {
      return a.as_chosen_many() != nullptr && a.as_chosen_many()->option_ids.count(c.option_id) != 0;
    }
    const auto* b = a.as_blanks();
    if (b == nullptr) return false;
    for (const auto& [id, v] : b->values) {
      if (const auto* s = std::get_if<std::string>(&v); s != nullptr && s->find(c.pattern) != std::string::npos) {
        return true;
      }
    }
    return false;
  };
  std::set<std::string> reach;
  std::vector<std::string> work;
  for (const auto& q : form.questions) {
    if (!q.conditional) work.push_back(q.question_id);
  }
  while (!work.empty()) {
    const auto id = work.back();
    work.pop_back();
    if (!reach.insert(id).second) continue;
    auto it = ledger.find(id);
    if (it == ledger.end()) continue;
    for (const auto& rule : form.at(id).triggers) {
      if (holds(rule.when, it->second)) work.insert(work.end(), rule.then.begin(), rule.then.end());
    }
  }
  return reach;
}

}  // namespace followup::fixtures
