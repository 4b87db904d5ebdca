#include "followup/service.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "followup/baseline.hpp"
#include "followup/text.hpp"

namespace followup {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  fs::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
  }
  fs::rename(tmp, p);
}

/// Appends one line and forces it to disk.
void append_durable(std::FILE* f, const std::string& line) {
  if (std::fputs(line.c_str(), f) < 0 || std::fputc('\n', f) == EOF || std::fflush(f) != 0) {
    throw std::runtime_error("event log write failed");
  }
  ::fsync(::fileno(f));
}

json call_to_json(const CallRecord& r) {
  return json{{"tag", r.tag},
              {"session_id", r.session_id},
              {"prompt_tokens", r.prompt_tokens},
              {"completion_tokens", r.completion_tokens},
              {"latency_s", r.latency_s},
              {"ts", r.ts},
              {"estimated", r.estimated}};
}

CallRecord call_from_json(const json& j) {
  CallRecord r;
  r.tag = j.at("tag").get<std::string>();
  r.session_id = j.at("session_id").get<std::string>();
  r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  r.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
  r.latency_s = j.value("latency_s", 0.0);
  r.ts = j.value("ts", 0.0);
  r.estimated = j.value("estimated", false);
  return r;
}

const json& required(const json& body, const char* key, json::value_t type) {
  if (!body.is_object() || !body.contains(key) || body[key].type() != type) {
    throw ServiceError(400, std::string("field '") + key + "' is missing or has the wrong type");
  }
  return body[key];
}

}  // namespace

struct SessionService::FormAssets {
  FormFixture fixture;
  Grouping grouping;
  KnowledgeBase kb;
  bool has_grouping = false;
  bool has_kb = false;
};

struct SessionService::Session {
  std::mutex mu;  // serialises steps
  SessionState state;
  std::shared_ptr<const FormAssets> assets;
  std::string patient = "live";
  std::FILE* log = nullptr;
  fs::path calls_path;
  std::size_t ledger_seen = 0;  // this process's ledger records already persisted

  mutable std::mutex view_mu;  // guards everything below; reads use only these
  SessionState view;
  std::vector<SessionEvent> events;
  std::map<std::string, std::uint64_t> msg_seq;  // client_msg_id -> patient event seq
  std::vector<CallRecord> calls;

  ~Session() {
    if (log != nullptr) std::fclose(log);
  }

  EventSink hook;

  void on_event(const SessionEvent& e, const SessionState& live) {
    append_durable(log, event_to_json(e).dump());
    std::lock_guard lock(view_mu);
    apply_event(view, e);
    events.push_back(e);
    if (e.kind == EventKind::patient_utterance && e.payload.contains("client_msg_id")) {
      msg_seq[e.payload["client_msg_id"].get<std::string>()] = e.seq;
    }
    if (hook) hook(e, live);
  }
};

SessionService::SessionService(ServiceConfig config, std::shared_ptr<Gateway> gateway)
    : config_(std::move(config)), gateway_(std::move(gateway)) {
  fs::create_directories(config_.data_dir / "forms");
  fs::create_directories(config_.data_dir / "kb");
  fs::create_directories(config_.data_dir / "sessions");
}

SessionService::~SessionService() = default;

// ---------------------------------------------------------------------------
// Forms
// ---------------------------------------------------------------------------

json SessionService::put_form(const json& body) {
  const bool wrapped = body.is_object() && body.contains("form") && body["form"].is_object();
  const json& doc = wrapped ? body["form"] : body;
  auto assets = std::make_shared<FormAssets>();
  assets->fixture.form = parse_form_json(doc);
  const auto& form = assets->fixture.form;
  if (wrapped && body.contains("ledger")) {
    assets->fixture.ledger = ledger_from_json(body["ledger"]);
    auto bad = ledger_violations(assets->fixture.ledger, form);
    if (!bad.empty()) throw ServiceError(422, "ledger does not fit the form: " + bad.front());
  }
  const bool build = !wrapped || body.value("build_kb", true);
  if (build) {
    auto built = prepare_modular(form, *gateway_, config_.cluster, config_.kb);
    assets->grouping = std::move(built.grouping);
    assets->kb = std::move(built.kb);
    assets->has_grouping = assets->has_kb = true;
  }

  const auto dir = config_.data_dir;
  write_file(dir / "forms" / (form.form_id + ".json"), serialize_form(form));
  if (!assets->fixture.ledger.empty()) {
    write_file(dir / "forms" / (form.form_id + ".ledger.json"), ledger_to_json(assets->fixture.ledger).dump(2));
  }
  if (assets->has_grouping) {
    write_file(dir / "forms" / (form.form_id + ".grouping.json"), json(assets->grouping).dump(2));
    assets->kb.save(dir / "kb" / (form.form_id + ".examples.jsonl"), dir / "kb" / (form.form_id + ".manifest.json"));
  }
  {
    std::lock_guard lock(mu_);
    forms_[form.form_id] = assets;
  }
  json out{{"form_id", form.form_id},
           {"questions", form.questions.size()},
           {"kb_examples", assets->kb.size()},
           {"groups", assets->grouping.groups.size()}};
  return out;
}

std::shared_ptr<const SessionService::FormAssets> SessionService::assets(const std::string& form_id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = forms_.find(form_id); it != forms_.end()) return it->second;
  }
  if (!valid_identifier(form_id)) throw ServiceError(404, "unknown form '" + form_id + "'");
  const auto dir = config_.data_dir;
  const auto form_path = dir / "forms" / (form_id + ".json");
  if (!fs::exists(form_path)) throw ServiceError(404, "unknown form '" + form_id + "'");
  auto a = std::make_shared<FormAssets>();
  a->fixture = load_fixture(form_path);
  const auto grouping_path = dir / "forms" / (form_id + ".grouping.json");
  if (fs::exists(grouping_path)) {
    a->grouping = json::parse(read_file(grouping_path)).get<Grouping>();
    a->has_grouping = true;
  }
  const auto examples = dir / "kb" / (form_id + ".examples.jsonl");
  const auto manifest = dir / "kb" / (form_id + ".manifest.json");
  if (fs::exists(examples) && fs::exists(manifest)) {
    a->kb = KnowledgeBase::load(examples, manifest);
    a->has_kb = true;
  }
  std::lock_guard lock(mu_);
  return forms_.emplace(form_id, a).first->second;
}

json SessionService::get_form(const std::string& form_id) const {
  const auto a = assets(form_id);
  json out = json::parse(serialize_form(a->fixture.form));
  if (a->has_grouping) out["grouping"] = a->grouping;
  out["kb_examples"] = a->kb.size();
  return out;
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

std::shared_ptr<SessionService::Session> SessionService::find_session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + session_id + "'");
  return it->second;
}

void SessionService::continue_session(Session& s) {
  if (s.state.terminal() || s.state.phase == Phase::awaiting_reply) return;
  const auto& form = s.assets->fixture.form;
  auto sink = [&s](const SessionEvent& e, const SessionState& live) { s.on_event(e, live); };
  if (s.state.mode == Mode::modular) {
    FlowEnv env{form, *gateway_, s.assets->has_kb ? &s.assets->kb : nullptr, config_.flow, sink, nullptr};
    advance(s.state, env);
  } else {
    BaselineEnv env{form, *gateway_, s.state.caps, sink, nullptr};
    baseline_advance(s.state, env);
  }
}

void SessionService::persist_calls(Session& s) {
  std::vector<CallRecord> mine;
  for (auto& r : gateway_->ledger().records()) {
    if (r.session_id == s.state.session_id) mine.push_back(std::move(r));
  }
  if (mine.size() <= s.ledger_seen) return;
  std::ofstream out(s.calls_path, std::ios::app);
  std::lock_guard lock(s.view_mu);
  for (std::size_t i = s.ledger_seen; i < mine.size(); ++i) {
    out << call_to_json(mine[i]).dump() << '\n';
    s.calls.push_back(mine[i]);
  }
  s.ledger_seen = mine.size();
}

json SessionService::record_of(const Session& s) const {
  MeterTotals tokens;
  for (const auto& r : s.calls) {
    if (r.tag != tags::patient) tokens.add(r);
  }
  return record_to_json(finalize(s.view, s.assets->fixture.form, tokens, true));
}

json SessionService::reply_view(const Session& s, std::uint64_t after_seq) const {
  std::lock_guard lock(s.view_mu);
  const auto& form = s.assets->fixture.form;
  json out{{"session_id", s.view.session_id},
           {"status", std::string(to_string(s.view.status))},
           {"phase", std::string(to_string(s.view.phase))}};
  for (const auto& e : s.events) {
    if (e.seq <= after_seq) continue;
    if (e.kind == EventKind::system_utterance) {
      out["reply"] = e.payload.at("turn");
      break;
    }
    if (e.kind == EventKind::completed) {
      if (e.payload.contains("closing") && !e.payload["closing"].is_null()) out["reply"] = e.payload["closing"];
      break;
    }
    if (e.kind == EventKind::aborted) break;
  }
  if (s.view.terminal()) {
    out["completion"] = record_of(s);
    if (!s.view.abort_reason.empty()) out["abort_reason"] = s.view.abort_reason;
  }
  const auto p = progress(s.view, form);
  out["progress"] = {{"answered", p.answered}, {"reachable", p.reachable}};
  out["turns"] = s.view.turn_count;
  return out;
}

json SessionService::create_session(const json& body) {
  const auto form_id = required(body, "form_id", json::value_t::string).get<std::string>();
  const auto mode_text = body.is_object() ? body.value("mode", std::string("modular")) : std::string("modular");
  if (mode_text != "modular" && mode_text != "baseline") throw ServiceError(400, "mode must be modular or baseline");
  const Mode mode = mode_from(mode_text);
  const auto patient = body.value("patient", std::string("live"));
  std::optional<PatientSelector> selector;
  if (patient != "live") {
    try {
      selector = parse_patient(patient);
    } catch (const std::invalid_argument& e) {
      throw ServiceError(400, e.what());
    }
  }

  const auto a = assets(form_id);
  if (mode == Mode::modular && (!a->has_grouping || !a->has_kb)) {
    throw ServiceError(409, "form '" + form_id + "' has no knowledge base; build it first");
  }
  if (selector && selector->kind == PatientSelector::Kind::scripted && a->fixture.ledger.empty()) {
    throw ServiceError(409, "scripted patients need a ground-truth ledger for form '" + form_id + "'");
  }

  auto s = std::make_shared<Session>();
  s->assets = a;
  s->patient = patient;
  s->hook = config_.on_event;
  std::string sid;
  {
    std::lock_guard lock(mu_);
    if (body.contains("session_id")) {
      sid = required(body, "session_id", json::value_t::string).get<std::string>();
      if (!valid_identifier(sid)) throw ServiceError(400, "invalid session id");
      if (sessions_.count(sid) != 0 || fs::exists(config_.data_dir / "sessions" / (sid + ".jsonl"))) {
        throw ServiceError(409, "session '" + sid + "' already exists");
      }
    } else {
      std::random_device rd;
      do {
        sid = "s-" + text::hex64((static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ ++id_counter_).substr(0, 12);
      } while (sessions_.count(sid) != 0);
    }
    sessions_[sid] = s;
  }

  std::lock_guard step_lock(s->mu);
  const auto dir = config_.data_dir / "sessions";
  write_file(dir / (sid + ".meta.json"), json{{"patient", patient}}.dump());
  s->calls_path = dir / (sid + ".calls.jsonl");
  s->log = std::fopen((dir / (sid + ".jsonl")).c_str(), "a");
  if (s->log == nullptr) throw ServiceError(500, "cannot open event log for " + sid);

  auto sink = [raw = s.get()](const SessionEvent& e, const SessionState& live) { raw->on_event(e, live); };
  const auto& form = a->fixture.form;
  try {
    if (mode == Mode::modular) {
      FlowEnv env{form, *gateway_, &a->kb, config_.flow, sink, nullptr};
      s->state = start_session(form, a->grouping, sid, env);
    } else {
      BaselineEnv env{form, *gateway_, config_.baseline_caps, sink, nullptr};
      s->state = start_baseline(sid, env);
    }
    if (selector) {
      auto p = make_patient(*selector, a->fixture, *gateway_, sid);
      while (!s->state.terminal()) {
        const Turn question = s->state.mode == Mode::modular ? *last_question(s->state) : s->state.transcript.back();
        const auto reply = p->reply(question);
        const auto ts = gateway_->clock().now();
        emit(s->state, nullptr, sink, EventKind::patient_utterance, json{{"text", reply}}, ts);
        continue_session(*s);
      }
    }
  } catch (...) {
    persist_calls(*s);
    throw;
  }
  persist_calls(*s);
  auto out = reply_view(*s, 0);
  out["mode"] = std::string(to_string(mode));
  out["patient"] = patient;
  return out;
}

json SessionService::post_message(const std::string& session_id, const json& body) {
  const auto msg_id = required(body, "client_msg_id", json::value_t::string).get<std::string>();
  const auto text_in = required(body, "text", json::value_t::string).get<std::string>();
  if (msg_id.empty()) throw ServiceError(400, "client_msg_id is empty");
  if (text::trim(text_in).empty()) throw ServiceError(400, "text is empty");

  auto s = find_session(session_id);
  std::unique_lock step_lock(s->mu, std::try_to_lock);
  if (!step_lock.owns_lock()) {
    throw ServiceError(409, "another message for this session is being processed; retry shortly", 1);
  }
  std::optional<std::uint64_t> seen;
  {
    std::lock_guard lock(s->view_mu);
    if (auto it = s->msg_seq.find(msg_id); it != s->msg_seq.end()) seen = it->second;
  }
  continue_session(*s);  // finishes a step a crash interrupted
  if (seen) {
    persist_calls(*s);
    auto out = reply_view(*s, *seen);
    out["duplicate"] = true;
    return out;
  }
  if (s->state.terminal()) {
    persist_calls(*s);
    throw ServiceError(409, "session is " + std::string(to_string(s->state.status)));
  }
  auto sink = [raw = s.get()](const SessionEvent& e, const SessionState& live) { raw->on_event(e, live); };
  const auto seq = emit(s->state, nullptr, sink, EventKind::patient_utterance,
                        json{{"text", text_in}, {"client_msg_id", msg_id}}, gateway_->clock().now())
                       .seq;
  continue_session(*s);
  persist_calls(*s);
  return reply_view(*s, seq);
}

json SessionService::resume(const std::string& session_id) {
  auto s = find_session(session_id);
  std::unique_lock step_lock(s->mu, std::try_to_lock);
  if (!step_lock.owns_lock()) throw ServiceError(409, "session is busy; retry shortly", 1);
  continue_session(*s);
  persist_calls(*s);
  std::uint64_t last_patient = 0;
  {
    std::lock_guard lock(s->view_mu);
    for (const auto& e : s->events) {
      if (e.kind == EventKind::patient_utterance) last_patient = e.seq;
    }
  }
  return reply_view(*s, last_patient);
}

json SessionService::result(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->view_mu);
  return record_of(*s);
}

json SessionService::transcript(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->view_mu);
  return json{{"session_id", session_id},
              {"status", std::string(to_string(s->view.status))},
              {"turns", s->view.transcript}};
}

json SessionService::metrics(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->view_mu);
  MeterTotals tokens;
  for (const auto& r : s->calls) {
    if (r.tag != tags::patient) tokens.add(r);
  }
  const auto m = compute_metrics(s->view, s->assets->fixture.form, s->assets->fixture.ledger, tokens,
                                 run_context(s->view), s->patient);
  auto out = metrics_to_json(m);
  out["session_id"] = session_id;
  out["in_progress"] = !s->view.terminal();
  return out;
}

SessionState SessionService::snapshot(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->view_mu);
  return s->view;
}

std::vector<std::string> SessionService::session_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

// ---------------------------------------------------------------------------
// Recovery
// ---------------------------------------------------------------------------

std::size_t SessionService::recover() {
  std::size_t active = 0;
  const auto dir = config_.data_dir / "sessions";
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (p.extension() == ".jsonl" && p.stem().extension().empty()) logs.push_back(p);
  }
  std::sort(logs.begin(), logs.end());

  for (const auto& path : logs) {
    const auto sid = path.stem().string();
    {
      std::lock_guard lock(mu_);
      if (sessions_.count(sid) != 0) continue;
    }
    std::ifstream in(path, std::ios::binary);
    std::vector<SessionEvent> events;
    SessionState state;
    std::string line;
    std::size_t line_no = 0;
    bool corrupt = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        auto e = event_from_json(json::parse(line));
        SessionState next = state;
        apply_event(next, e);
        state = std::move(next);
        events.push_back(std::move(e));
      } catch (const std::exception& ex) {
        corrupt = true;
        recovery_log_.push_back("session " + sid + ": corrupt event at line " + std::to_string(line_no) + " (" +
                                ex.what() + "); restored to seq " + std::to_string(events.size()));
        break;
      }
    }
    in.close();
    if (events.empty()) {
      recovery_log_.push_back("session " + sid + ": no intact events; skipped");
      continue;
    }
    if (corrupt) {
      std::string intact;
      for (const auto& e : events) intact += event_to_json(e).dump() + "\n";
      write_file(path, intact);
    }

    std::shared_ptr<const FormAssets> a;
    try {
      a = assets(state.form_id);
    } catch (const std::exception& ex) {
      recovery_log_.push_back("session " + sid + ": form '" + state.form_id + "' unavailable (" + ex.what() + ")");
      continue;
    }

    auto s = std::make_shared<Session>();
    s->assets = a;
    s->hook = config_.on_event;
    s->state = state;
    s->view = state;
    for (const auto& e : events) {
      if (e.kind == EventKind::patient_utterance && e.payload.contains("client_msg_id")) {
        s->msg_seq[e.payload["client_msg_id"].get<std::string>()] = e.seq;
      }
    }
    s->events = std::move(events);
    const auto meta = dir / (sid + ".meta.json");
    if (fs::exists(meta)) s->patient = json::parse(read_file(meta)).value("patient", std::string("live"));
    s->calls_path = dir / (sid + ".calls.jsonl");
    if (fs::exists(s->calls_path)) {
      std::ifstream calls(s->calls_path);
      while (std::getline(calls, line)) {
        if (line.empty()) continue;
        try {
          s->calls.push_back(call_from_json(json::parse(line)));
        } catch (const std::exception&) {
          break;
        }
      }
    }
    s->log = std::fopen(path.c_str(), "a");
    if (s->log == nullptr) throw std::runtime_error("cannot reopen " + path.string());
    if (!state.terminal()) ++active;
    std::lock_guard lock(mu_);
    sessions_[sid] = std::move(s);
  }
  return active;
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  SessionService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(SessionService& s) : service(s) { routes(); }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  void guarded(const httplib::Request& req, httplib::Response& res, bool mutating, F&& f) {
    try {
      const auto& token = service.config().auth_token;
      if (mutating && !token.empty() && req.get_header_value("X-Followup-Token") != token) {
        throw ServiceError(401, "missing or wrong X-Followup-Token");
      }
      send_json(res, 200, f());
    } catch (const ServiceError& e) {
      if (e.retry_after_s() > 0) res.set_header("Retry-After", std::to_string(e.retry_after_s()));
      send_json(res, e.status(), json{{"error", e.what()}, {"retry", e.retry_after_s() > 0}});
    } catch (const FormError& e) {
      json findings = json::array();
      for (const auto& f : e.findings()) {
        findings.push_back({{"question_id", f.question_id}, {"rule", f.rule}, {"detail", f.detail}});
      }
      send_json(res, 422, json{{"error", e.what()}, {"findings", findings}});
    } catch (const json::exception& e) {
      send_json(res, 400, json{{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const GatewayError& e) {
      send_json(res, 502, json{{"error", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, json{{"error", e.what()}});
    }
  }

  static json body_of(const httplib::Request& req) { return json::parse(req.body); }

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"status", "ok"}});
    });
    server.Post("/forms", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, true, [&] { return service.put_form(body_of(req)); });
    });
    server.Get(R"(/forms/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, false, [&] { return service.get_form(req.matches[1]); });
    });
    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, true, [&] { return service.create_session(body_of(req)); });
    });
    server.Post(R"(/sessions/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, true, [&] { return service.post_message(req.matches[1], body_of(req)); });
    });
    server.Get(R"(/sessions/([^/]+)/(result|transcript|metrics))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(req, res, false, [&] {
                   const std::string id = req.matches[1];
                   const std::string what = req.matches[2];
                   if (what == "result") return service.result(id);
                   if (what == "transcript") return service.transcript(id);
                   return service.metrics(id);
                 });
               });
    // The browser client is served from another origin during development.
    server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Followup-Token");
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }
};

HttpServer::HttpServer(SessionService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace followup
