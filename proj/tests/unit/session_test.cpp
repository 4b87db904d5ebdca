#include <gtest/gtest.h>

#include "../support/test_util.hpp"
#include "followup/flow.hpp"
#include "followup/session.hpp"

using namespace followup;
using nlohmann::json;

namespace {

std::vector<SessionEvent> scripted_events() {
  auto fx = fixtures::small_fixture();
  auto gw = fixtures::sim_gateway();
  const auto assets = prepare_modular(fx.form, *gw);
  ScriptedPatient p(fx.form, fx.ledger);
  return run_modular(fx, assets, p, *gw, FlowConfig{}, "ev", "scripted").events;
}

}  // namespace

TEST(Session, EventJsonRoundTrip) {
  for (const auto& e : scripted_events()) {
    const auto back = event_from_json(event_to_json(e));
    EXPECT_EQ(event_to_json(back).dump(), event_to_json(e).dump());
  }
}

TEST(Session, SequenceGapIsRejected) {
  auto events = scripted_events();
  ASSERT_GT(events.size(), 3u);
  events.erase(events.begin() + 2);
  EXPECT_THROW(replay(events), std::logic_error);
}

TEST(Session, EventsAfterTerminalAreRejected) {
  auto events = scripted_events();
  auto extra = events.back();
  extra.seq += 1;
  events.push_back(extra);
  EXPECT_THROW(replay(events), std::logic_error);
}

TEST(Session, EveryPrefixReplays) {
  const auto events = scripted_events();
  for (std::size_t n = 1; n <= events.size(); ++n) {
    const std::vector<SessionEvent> prefix(events.begin(), events.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_NO_THROW(replay(prefix)) << n;
  }
}

TEST(Session, UnknownPayloadKeysAreIgnored) {
  auto events = scripted_events();
  for (auto& e : events) e.payload["client_note"] = "x";
  EXPECT_EQ(state_to_json(replay(events)).dump(), state_to_json(replay(scripted_events())).dump());
}

TEST(Session, FinalizeCoversReachableItemsOnce) {
  const auto fx = fixtures::small_fixture();
  const auto state = replay(scripted_events());
  const auto r = finalize(state, fx.form, MeterTotals{});
  std::set<std::string> seen;
  for (const auto& [id, a] : r.answers) EXPECT_TRUE(seen.insert(id).second);
  for (const auto& id : r.unanswered) EXPECT_TRUE(seen.insert(id).second);
  AnswerMap answers(state.answers.begin(), state.answers.end());
  EXPECT_EQ(seen, reachable_set(fx.form, answers));
  EXPECT_EQ(r.status, "completed");
}

TEST(Session, FinalizeOfActiveSessionNeedsOptIn) {
  const auto fx = fixtures::small_fixture();
  auto events = scripted_events();
  events.resize(3);
  const auto state = replay(events);
  ASSERT_FALSE(state.terminal());
  EXPECT_THROW(finalize(state, fx.form, MeterTotals{}), std::logic_error);
  EXPECT_EQ(finalize(state, fx.form, MeterTotals{}, true).status, "in_progress");
}
