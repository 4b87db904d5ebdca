#include <gtest/gtest.h>

#include <httplib.h>

#include "../support/test_util.hpp"
#include "followup/service.hpp"

using namespace followup;
using nlohmann::json;

namespace {

struct ServiceHarness {
  fixtures::TempDir dir{"svc"};
  std::shared_ptr<Gateway> gw = fixtures::sim_gateway();
  std::unique_ptr<SessionService> svc;
  FormFixture fx = fixtures::small_fixture();

  ServiceHarness() {
    reopen();
    svc->put_form(json{{"form", form_to_json(fx.form)}, {"ledger", ledger_to_json(fx.ledger)}});
  }

  void reopen() {
    svc.reset();
    ServiceConfig cfg;
    cfg.data_dir = dir.path();
    svc = std::make_unique<SessionService>(cfg, gw);
  }

  json create(const std::string& mode, const std::string& sid, const std::string& patient = "live") {
    return svc->create_session(json{{"form_id", fx.form.form_id}, {"mode", mode}, {"patient", patient}, {"session_id", sid}});
  }

  json say(const std::string& sid, const std::string& id, const std::string& text) {
    return svc->post_message(sid, json{{"client_msg_id", id}, {"text", text}});
  }

  /// Answers with the scripted patient until the session ends.
  void finish(const std::string& sid) {
    ScriptedPatient p(fx.form, fx.ledger);
    for (int i = 0; i < 100; ++i) {
      const auto st = svc->snapshot(sid);
      if (st.terminal()) return;
      say(sid, "auto-" + std::to_string(i), p.reply(*last_question(st)));
    }
    FAIL() << "session did not finish";
  }
};

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

}  // namespace

TEST(Service, UnknownFormIs404) {
  ServiceHarness h;
  EXPECT_EQ(status_of([&] { h.svc->get_form("nope"); }), 404);
  EXPECT_EQ(status_of([&] { h.svc->create_session(json{{"form_id", "nope"}}); }), 404);
  EXPECT_EQ(status_of([&] { h.svc->result("nope"); }), 404);
}

TEST(Service, BadRequestsAre400) {
  ServiceHarness h;
  EXPECT_EQ(status_of([&] { h.svc->create_session(json{{"form_id", "fault-form"}, {"mode", "hybrid"}}); }), 400);
  EXPECT_EQ(status_of([&] { h.svc->create_session(json{{"form_id", "fault-form"}, {"patient", "robot"}}); }), 400);
  h.create("modular", "s1");
  EXPECT_EQ(status_of([&] { h.svc->post_message("s1", json{{"client_msg_id", "a"}, {"text", "   "}}); }), 400);
  EXPECT_EQ(status_of([&] { h.create("modular", "s1"); }), 409);
}

TEST(Service, ModularWithoutKnowledgeBaseIs409) {
  ServiceHarness h;
  auto doc = form_to_json(h.fx.form);
  doc["form_id"] = "no-kb";
  h.svc->put_form(json{{"form", doc}, {"build_kb", false}});
  EXPECT_EQ(status_of([&] { h.svc->create_session(json{{"form_id", "no-kb"}, {"mode", "modular"}}); }), 409);
  EXPECT_EQ(status_of([&] { h.svc->create_session(json{{"form_id", "no-kb"}, {"mode", "baseline"}}); }), 200);
}

TEST(Service, BaselineFirstQuestionIsOneCall) {
  ServiceHarness h;
  const auto out = h.create("baseline", "b1");
  EXPECT_EQ(out["status"], "active");
  EXPECT_FALSE(out["reply"]["text"].get<std::string>().empty());
  EXPECT_EQ(h.gw->ledger().by_session_tag("b1", tags::baseline).requests, 1);
}

TEST(Service, GibberishIsReasked) {
  ServiceHarness h;
  const auto first = h.create("modular", "m1");
  const auto out = h.say("m1", "x1", "blorp fizzle wug");
  EXPECT_EQ(out["status"], "active");
  EXPECT_TRUE(out["reply"].value("reask", false));
  EXPECT_EQ(out["progress"]["answered"], 0);
}

TEST(Service, DuplicateMessageIdDoesNotStep) {
  ServiceHarness h;
  h.create("modular", "m2");
  const auto a = h.say("m2", "same", "blorp");
  const auto events = h.svc->snapshot("m2").next_seq;
  const auto b = h.say("m2", "same", "something else entirely");
  EXPECT_TRUE(b.value("duplicate", false));
  EXPECT_EQ(b["reply"], a["reply"]);
  EXPECT_EQ(h.svc->snapshot("m2").next_seq, events);
}

TEST(Service, CompletedSessionRejectsMessages) {
  ServiceHarness h;
  h.create("modular", "m3");
  h.finish("m3");
  EXPECT_EQ(h.svc->snapshot("m3").status, SessionStatus::completed);
  EXPECT_EQ(status_of([&] { h.say("m3", "late", "hello?"); }), 409);
  const auto r = h.svc->result("m3");
  EXPECT_EQ(r["status"], "completed");
  EXPECT_EQ(r["answers"].size(), 6u);
}

TEST(Service, ActiveSessionHasPartialRecord) {
  ServiceHarness h;
  h.create("modular", "m4");
  const auto r = h.svc->result("m4");
  EXPECT_EQ(r["status"], "in_progress");
  EXPECT_TRUE(h.svc->metrics("m4")["in_progress"].get<bool>());
}

TEST(Service, MetricsTokensEqualLedger) {
  ServiceHarness h;
  h.create("modular", "m5");
  h.finish("m5");
  const auto m = h.svc->metrics("m5");
  const auto t = system_tokens(h.gw->ledger(), "m5");
  EXPECT_EQ(m["prompt_tokens"].get<std::int64_t>(), t.prompt_tokens);
  EXPECT_EQ(m["completion_tokens"].get<std::int64_t>(), t.completion_tokens);
  EXPECT_EQ(m["errors"].is_object(), true);
}

TEST(Service, ScriptedPatientRunsToCompletionOnCreate) {
  ServiceHarness h;
  const auto out = h.create("baseline", "b2", "scripted");
  EXPECT_EQ(out["status"], "completed");
  EXPECT_TRUE(out.contains("completion"));
}

TEST(Service, RecoverWithNoLogsFindsNothing) {
  ServiceHarness h;
  h.reopen();
  EXPECT_EQ(h.svc->recover(), 0u);
  EXPECT_TRUE(h.svc->session_ids().empty());
}

TEST(Service, RecoverRestoresActiveAndKeepsTerminalSessionsClosed) {
  ServiceHarness h;
  h.create("modular", "live1");
  h.say("live1", "a", "blorp");
  const auto before = state_to_json(h.svc->snapshot("live1")).dump();
  h.create("modular", "done1");
  h.finish("done1");
  h.reopen();
  EXPECT_EQ(h.svc->recover(), 1u);
  EXPECT_EQ(state_to_json(h.svc->snapshot("live1")).dump(), before);
  EXPECT_EQ(h.svc->snapshot("done1").status, SessionStatus::completed);
  EXPECT_EQ(status_of([&] { h.say("done1", "z", "hi"); }), 409);
  h.finish("live1");
  EXPECT_EQ(h.svc->snapshot("live1").status, SessionStatus::completed);
}

TEST(Service, RecoverCutsCorruptTail) {
  ServiceHarness h;
  h.create("modular", "c1");
  h.say("c1", "a", "blorp");
  const auto good = state_to_json(h.svc->snapshot("c1")).dump();
  const auto log = h.dir.path() / "sessions" / "c1.jsonl";
  h.reopen();
  {
    std::ofstream out(log, std::ios::app);
    out << "{\"seq\": 99, \"kind\": \"trunc";
  }
  EXPECT_EQ(h.svc->recover(), 1u);
  EXPECT_EQ(state_to_json(h.svc->snapshot("c1")).dump(), good);
  ASSERT_EQ(h.svc->recovery_log().size(), 1u);
  EXPECT_EQ(fixtures::slurp(log).find("trunc"), std::string::npos);
}

TEST(Service, DuplicateIdSurvivesRecovery) {
  ServiceHarness h;
  h.create("modular", "d1");
  const auto a = h.say("d1", "once", "blorp");
  h.reopen();
  h.svc->recover();
  const auto b = h.say("d1", "once", "blorp");
  EXPECT_TRUE(b.value("duplicate", false));
  EXPECT_EQ(b["reply"], a["reply"]);
}

TEST(Service, HttpRoundTrip) {
  ServiceHarness h;
  HttpServer server(*h.svc);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["status"], "ok");

  auto missing = cli.Get("/forms/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  auto created = cli.Post("/sessions", json{{"form_id", "fault-form"}, {"session_id", "h1"}}.dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 200);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");

  auto msg = cli.Post("/sessions/h1/messages", json{{"client_msg_id", "1"}, {"text", "blorp"}}.dump(),
                      "application/json");
  ASSERT_TRUE(msg);
  EXPECT_EQ(msg->status, 200);

  auto bad = cli.Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  auto invalid = cli.Post("/forms", json{{"form_id", "x"}, {"questions", json::array()}}.dump(), "application/json");
  ASSERT_TRUE(invalid);
  EXPECT_EQ(invalid->status, 422);

  auto transcript = cli.Get("/sessions/h1/transcript");
  ASSERT_TRUE(transcript);
  EXPECT_EQ(transcript->status, 200);
  server.stop();
}

TEST(Service, TokenGuardsMutations) {
  ServiceHarness h;
  ServiceConfig cfg;
  cfg.data_dir = h.dir.path();
  cfg.auth_token = "secret";
  SessionService guarded(cfg, h.gw);
  HttpServer server(guarded);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  const auto body = json{{"form_id", "fault-form"}}.dump();
  auto denied = cli.Post("/sessions", body, "application/json");
  ASSERT_TRUE(denied);
  EXPECT_EQ(denied->status, 401);
  auto allowed = cli.Post("/sessions", httplib::Headers{{"X-Followup-Token", "secret"}}, body, "application/json");
  ASSERT_TRUE(allowed);
  EXPECT_EQ(allowed->status, 200);
  EXPECT_EQ(cli.Get("/forms/fault-form")->status, 200);
  server.stop();
}
