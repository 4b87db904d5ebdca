#include <gtest/gtest.h>

#include "../support/test_util.hpp"
#include "followup/flow.hpp"

using namespace followup;

namespace {

struct Harness {
  FormFixture fx = fixtures::small_fixture();
  std::shared_ptr<Gateway> gw = fixtures::sim_gateway();
  ModularAssets assets = prepare_modular(fx.form, *gw);
};

SessionState with_current(const FormSpec& form, QuestionGroup g) {
  SessionState s;
  s.form_id = form.form_id;
  s.current = std::move(g);
  return s;
}

}  // namespace

TEST(SelectNext, ReasksTwoOfThreeUnanswered) {
  const auto fx = fixtures::small_fixture();
  auto s = with_current(fx.form, {"g1", {"fa_smoke", "fa_sleep", "fa_mood"}, QuestionType::single_choice});
  s.answers["fa_sleep"] = AnswerValue::chosen("yes");
  const auto d = select_next(s, fx.form);
  EXPECT_EQ(d.kind, DecisionKind::reask);
  EXPECT_EQ(d.item_ids, (std::vector<std::string>{"fa_smoke", "fa_mood"}));
  ASSERT_TRUE(d.group.has_value());
  EXPECT_EQ(d.group->group_id, "g1");
}

TEST(SelectNext, ExhaustsAfterReaskCap) {
  const auto fx = fixtures::small_fixture();
  auto s = with_current(fx.form, {"g1", {"fa_sleep", "fa_mood"}, QuestionType::single_choice});
  s.ask_counts["g1"] = s.caps.max_reasks;
  s.pending.push_back({"g2", {"fa_weight"}, QuestionType::fill_blank});
  const auto d = select_next(s, fx.form);
  EXPECT_EQ(d.kind, DecisionKind::next);
  EXPECT_EQ(d.exhausted, (std::vector<std::string>{"fa_sleep", "fa_mood"}));
  EXPECT_EQ(d.item_ids, std::vector<std::string>{"fa_weight"});
}

TEST(SelectNext, FollowsUpOnFiredTriggerBeforeAdvancing) {
  const auto fx = fixtures::small_fixture();
  auto s = with_current(fx.form, {"g1", {"fa_smoke"}, QuestionType::single_choice});
  s.answers["fa_smoke"] = AnswerValue::chosen("former");
  s.pending.push_back({"g2", {"fa_weight"}, QuestionType::fill_blank});
  auto d = select_next(s, fx.form);
  EXPECT_EQ(d.kind, DecisionKind::followup);
  EXPECT_EQ(d.item_ids, std::vector<std::string>{"fa_stopped"});
  EXPECT_EQ(d.consumed_triggers, std::vector<std::string>{"fa_smoke#0"});
  s.consumed_triggers.insert("fa_smoke#0");
  d = select_next(s, fx.form);
  EXPECT_EQ(d.kind, DecisionKind::next);
}

TEST(SelectNext, DoneWhenNothingPending) {
  const auto fx = fixtures::small_fixture();
  auto s = with_current(fx.form, {"g1", {"fa_mood"}, QuestionType::single_choice});
  s.answers["fa_mood"] = AnswerValue::chosen("good");
  EXPECT_EQ(select_next(s, fx.form).kind, DecisionKind::done);
}

TEST(Flow, ScriptedRunAnswersEverything) {
  Harness h;
  ScriptedPatient patient(h.fx.form, h.fx.ledger);
  const auto out = run_modular(h.fx, h.assets, patient, *h.gw, FlowConfig{}, "s1", "scripted");
  EXPECT_EQ(out.state.status, SessionStatus::completed);
  EXPECT_EQ(out.record.answers.size(), 6u);
  EXPECT_TRUE(out.record.unanswered.empty());
  EXPECT_EQ(out.metrics.accuracy, 1.0);
  EXPECT_EQ(out.metrics.errors.total(), 0u);
}

TEST(Flow, GibberishExhaustsEveryItemAfterReasks) {
  Harness h;
  std::vector<SessionEvent> events;
  FlowEnv env{h.fx.form, *h.gw, &h.assets.kb, FlowConfig{}, {}, &events};
  auto state = start_session(h.fx.form, h.assets.grouping, "s2", env);
  std::size_t replies = 0;
  while (!state.terminal()) {
    step(state, "blorp fizzle wug", env);
    ++replies;
  }
  EXPECT_EQ(state.status, SessionStatus::completed);
  EXPECT_TRUE(state.answers.empty());
  // Top-level questions only: the follow-up never fires without an answer.
  EXPECT_EQ(state.exhausted.size(), h.fx.form.top_level().size());
  EXPECT_EQ(replies, h.assets.grouping.groups.size() * (1 + state.caps.max_reasks));
}

TEST(Flow, ReplayEqualsLiveState) {
  Harness h;
  ScriptedPatient patient(h.fx.form, h.fx.ledger);
  const auto out = run_modular(h.fx, h.assets, patient, *h.gw, FlowConfig{}, "s3", "scripted");
  EXPECT_EQ(state_to_json(replay(out.events)).dump(), state_to_json(out.state).dump());
}

TEST(Flow, TurnCapAborts) {
  Harness h;
  FlowConfig cfg;
  cfg.caps.max_turns = 2;
  FlowEnv env{h.fx.form, *h.gw, &h.assets.kb, cfg, {}, nullptr};
  auto state = start_session(h.fx.form, h.assets.grouping, "s4", env);
  while (!state.terminal()) step(state, "hmm", env);
  EXPECT_EQ(state.status, SessionStatus::aborted);
  EXPECT_EQ(state.abort_reason, "turn_cap");
  EXPECT_LE(state.turn_count, 2u);
}

TEST(Flow, StepRequiresAwaitingReply) {
  Harness h;
  ScriptedPatient patient(h.fx.form, h.fx.ledger);
  auto out = run_modular(h.fx, h.assets, patient, *h.gw, FlowConfig{}, "s5", "scripted");
  FlowEnv env{h.fx.form, *h.gw, &h.assets.kb, FlowConfig{}, {}, nullptr};
  EXPECT_THROW(step(out.state, "again", env), std::logic_error);
}

TEST(Flow, RejectsForeignGrouping) {
  Harness h;
  Grouping bad = h.assets.grouping;
  bad.groups.pop_back();
  FlowEnv env{h.fx.form, *h.gw, &h.assets.kb, FlowConfig{}, {}, nullptr};
  EXPECT_THROW(start_session(h.fx.form, bad, "s6", env), std::invalid_argument);
}

TEST(Flow, ModularTurnsCoverOnlyGroupMembers) {
  Harness h;
  ScriptedPatient patient(h.fx.form, h.fx.ledger);
  const auto out = run_modular(h.fx, h.assets, patient, *h.gw, FlowConfig{}, "s7", "scripted");
  for (const auto& t : out.state.transcript) {
    if (!t.is_question()) continue;
    ASSERT_TRUE(t.covered_ids.has_value());
    EXPECT_FALSE(t.covered_ids->empty());
  }
}
