#include <gtest/gtest.h>

#include "../support/test_util.hpp"
#include "followup/eval.hpp"

using namespace followup;
using nlohmann::json;

namespace {

class FaultFixture : public ::testing::TestWithParam<std::string> {};

RunMetrics metrics(const std::string& form, Mode mode, std::size_t turns, std::int64_t tokens, bool completed) {
  RunMetrics m;
  m.form_id = form;
  m.mode = mode;
  m.system_turns = turns;
  m.prompt_tokens = tokens;
  m.completed = completed;
  m.accuracy = 1.0;
  return m;
}

}  // namespace

TEST_P(FaultFixture, DetectsExactlyTheExpectedCounts) {
  const auto dir = fixtures::faults_dir();
  const auto fx = fixtures::small_fixture();
  const auto doc = json::parse(fixtures::slurp(dir / (GetParam() + ".json")));
  RunContext ctx;
  ctx.mode = mode_from(doc["context"].value("mode", std::string("baseline")));
  ctx.completed = doc["context"].value("completed", true);
  ErrorCounts want;
  for (const auto& [cat, n] : doc.at("expected").items()) want[*error_category_from(cat)] = n.get<std::size_t>();
  const auto got = detect_errors(doc.at("transcript").get<Transcript>(), fx.form, fx.ledger, ctx);
  EXPECT_EQ(got, want) << error_counts_json(got, ctx.mode).dump();
}

INSTANTIATE_TEST_SUITE_P(Faults, FaultFixture,
                         ::testing::Values("clean", "starting_from_middle", "ending_prematurely",
                                           "excessive_response_time", "altering_questions", "repetitive_questioning",
                                           "logical_jump_error", "skipping_missing"));

TEST(Eval, SimilarityUsesQuestionContentWords) {
  const auto fx = fixtures::small_fixture();
  const auto& sleep = fx.form.at("fa_sleep");
  EXPECT_DOUBLE_EQ(item_similarity("Is your sleep restful?", sleep), 1.0);
  EXPECT_LT(item_similarity("How has your sleep been?", sleep), EvalConfig{}.alter_upper);
  EXPECT_EQ(item_similarity("What is your weight?", sleep), 0.0);
  EXPECT_EQ(map_utterance_to_items("Is your sleep restful and how would you rate your mood today?", fx.form),
            (std::set<std::string>{"fa_sleep", "fa_mood"}));
}

TEST(Eval, AccuracyCountsUnansweredAsWrong) {
  const auto fx = fixtures::small_fixture();
  CompletionRecord r;
  r.answers["fa_smoke"] = AnswerValue::chosen("former");
  r.answers["fa_mood"] = AnswerValue::chosen("poor");
  r.unanswered = {"fa_sleep", "fa_extra"};
  const auto a = score_accuracy(r, fx.ledger);
  EXPECT_EQ(a.scored, 3u);
  EXPECT_EQ(a.correct, 1u);
  EXPECT_EQ(a.warnings.size(), 1u);
  EXPECT_NEAR(a.accuracy(), 1.0 / 3.0, 1e-12);
}

TEST(Eval, CategoryNamesRoundTrip) {
  for (const auto c : kAllCategories) EXPECT_EQ(error_category_from(to_string(c)), c);
  EXPECT_FALSE(error_category_from("bogus").has_value());
}

TEST(Eval, CompareExcludesIncompleteBaselineRuns) {
  const auto report = compare_runs({metrics("f", Mode::modular, 4, 100, true)},
                                   {metrics("f", Mode::baseline, 10, 400, true),
                                    metrics("f", Mode::baseline, 80, 9000, false)});
  ASSERT_EQ(report.forms.size(), 1u);
  const auto& f = report.forms[0];
  EXPECT_EQ(f.baseline_incomplete, 1u);
  EXPECT_DOUBLE_EQ(*f.baseline_turns, 10.0);
  EXPECT_DOUBLE_EQ(*f.turn_reduction_pct, 60.0);
  ASSERT_EQ(report.footnotes.size(), 1u);
  EXPECT_EQ(report.footnotes[0],
            "f: 1 of 2 baseline runs did not complete (turn cap or failure) and are excluded from the turn average.");
  EXPECT_NE(report_table(report).find("[1]"), std::string::npos);
}

TEST(Eval, CompareRequiresSameForms) {
  EXPECT_THROW(compare_runs({metrics("a", Mode::modular, 1, 1, true)}, {metrics("b", Mode::baseline, 1, 1, true)}),
               std::invalid_argument);
}

TEST(Eval, MetricsJsonRoundTrip) {
  auto m = metrics("f", Mode::baseline, 7, 123, true);
  m.errors[ErrorCategory::logical_jump_error] = 2;
  m.patient = "persona-2";
  const auto back = metrics_from_json(metrics_to_json(m));
  EXPECT_EQ(back.errors, m.errors);
  EXPECT_EQ(back.system_turns, 7u);
  EXPECT_EQ(back.patient, "persona-2");
}
