#include <gtest/gtest.h>

#include <thread>

#include "../support/test_util.hpp"
#include "followup/gateway.hpp"

using namespace followup;

namespace {

ChatRequest request(std::string tag, std::string session = "s", std::string user = "hello") {
  ChatRequest r;
  r.system_text = "sys";
  r.messages = {{Role::user, std::move(user)}};
  r.tag = std::move(tag);
  r.session_id = std::move(session);
  return r;
}

class FlakyBackend final : public ChatBackend {
 public:
  explicit FlakyBackend(int failures) : failures_(failures) {}
  ChatResponse send(const ChatRequest&, std::chrono::milliseconds) override {
    if (calls_++ < failures_) throw GatewayError(GatewayError::Kind::transport, "connection reset");
    ChatResponse r;
    r.text = "ok";
    r.prompt_tokens = 3;
    r.completion_tokens = 1;
    return r;
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  int calls_ = 0;
};

}  // namespace

TEST(Gateway, LedgerTotalsAreSumsOfRecords) {
  auto gw = fixtures::queued_gateway({{"a", 10, 2, 0.5}, {"b", 20, 3, 0.5}, {"c", std::nullopt, std::nullopt, 0.1}});
  gw->complete(request("extraction", "s1"));
  gw->complete(request("baseline", "s1"));
  gw->complete(request("baseline", "s2"));
  const auto& ledger = gw->ledger();
  EXPECT_EQ(ledger.totals().requests, 3);
  EXPECT_EQ(ledger.by_tag("baseline").prompt_tokens, 20 + ledger.records().back().prompt_tokens);
  EXPECT_EQ(ledger.by_session("s1").prompt_tokens, 30);
  EXPECT_EQ(ledger.by_session_tag("s1", "extraction").completion_tokens, 2);
  EXPECT_TRUE(ledger.any_estimated());
  std::int64_t sum = 0;
  for (const auto& r : ledger.records()) sum += r.prompt_tokens + r.completion_tokens;
  EXPECT_EQ(sum, ledger.totals().tokens());
}

TEST(Gateway, EstimatesTokensWhenBackendGivesNone) {
  auto gw = fixtures::queued_gateway({{"12345678", std::nullopt, std::nullopt, 0.0}});
  const auto r = gw->complete(request("x"));
  EXPECT_TRUE(r.estimated);
  EXPECT_EQ(r.completion_tokens, 2);
  EXPECT_GT(r.prompt_tokens, 0);
}

TEST(Gateway, RetriesTransportErrors) {
  auto backend = std::make_shared<FlakyBackend>(2);
  GatewayConfig cfg;
  cfg.backoff_base = std::chrono::milliseconds(1);
  Gateway gw(backend, cfg, std::make_shared<SimClock>());
  EXPECT_EQ(gw.complete(request("x")).text, "ok");
  EXPECT_EQ(backend->calls(), 3);
  EXPECT_EQ(gw.ledger().totals().requests, 1);
}

TEST(Gateway, GivesUpAfterMaxAttempts) {
  auto backend = std::make_shared<FlakyBackend>(10);
  GatewayConfig cfg;
  cfg.backoff_base = std::chrono::milliseconds(1);
  Gateway gw(backend, cfg, std::make_shared<SimClock>());
  try {
    gw.complete(request("x"));
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
  EXPECT_EQ(gw.ledger().totals().requests, 0);
}

TEST(Gateway, ScriptMissIsNotRetried) {
  auto gw = fixtures::queued_gateway({{"only", 1, 1, 0.0}});
  gw->complete(request("x"));
  try {
    gw->complete(request("x"));
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), GatewayError::Kind::script_miss);
    EXPECT_EQ(e.attempts(), 1);
  }
}

TEST(Gateway, RejectsMalformedRequests) {
  ChatRequest r;
  r.tag = "x";
  EXPECT_THROW(check_request(r), GatewayError);
  r.messages = {{Role::user, "a"}, {Role::user, "b"}};
  EXPECT_THROW(check_request(r), GatewayError);
  r.messages = {{Role::user, "a"}, {Role::assistant, "b"}, {Role::user, "c"}};
  EXPECT_NO_THROW(check_request(r));
}

TEST(Gateway, KeyedScriptResolvesByFingerprint) {
  auto backend = ScriptedBackend::keyed({{ScriptedBackend::fingerprint("t", "hello"), {"hi", 1, 1, 0.0}}});
  Gateway gw(backend, GatewayConfig{}, std::make_shared<SimClock>());
  EXPECT_EQ(gw.complete(request("t")).text, "hi");
  EXPECT_THROW(gw.complete(request("t", "s", "bye")), GatewayError);
}

TEST(Gateway, ConcurrentCallsKeepLedgerExact) {
  auto gw = fixtures::sim_gateway();
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        ChatRequest r = request("patient", "s" + std::to_string(t));
        r.meta = {{"op", "summary"}, {"questions", nlohmann::json::array()}};
        try {
          gw->complete(r);
        } catch (const GatewayError&) {
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  MeterTotals sum;
  for (const auto& r : gw->ledger().records()) sum.add(r);
  EXPECT_EQ(sum.requests, gw->ledger().totals().requests);
  EXPECT_EQ(sum.prompt_tokens, gw->ledger().totals().prompt_tokens);
}

TEST(Gateway, LedgerExportsJsonLines) {
  auto gw = fixtures::queued_gateway({{"a", 1, 1, 0.0}, {"b", 2, 2, 0.0}});
  gw->complete(request("x"));
  gw->complete(request("y"));
  const auto text = gw->ledger().export_jsonl();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}
