#include "followup/gateway.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::assistant: return "assistant";
    case Role::user: return "user";
  }
  return "?";
}

std::string ChatRequest::last_user() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::user) return it->text;
  }
  return {};
}

std::string ChatRequest::rendered_prompt() const {
  std::string out = system_text;
  for (const auto& m : messages) {
    out += '\n';
    out += m.text;
  }
  return out;
}

double SystemClock::now() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

double SimClock::now() {
  std::lock_guard lock(mu_);
  return t_;
}

void SimClock::elapse(double seconds) {
  std::lock_guard lock(mu_);
  t_ += seconds;
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

void MeterTotals::add(const CallRecord& r) {
  ++requests;
  prompt_tokens += r.prompt_tokens;
  completion_tokens += r.completion_tokens;
  total_latency += r.latency_s;
}

void MeterLedger::record(CallRecord r) {
  std::lock_guard lock(mu_);
  totals_.add(r);
  by_tag_[r.tag].add(r);
  by_session_[r.session_id].add(r);
  records_.push_back(std::move(r));
}

std::vector<CallRecord> MeterLedger::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

MeterTotals MeterLedger::totals() const {
  std::lock_guard lock(mu_);
  return totals_;
}

MeterTotals MeterLedger::by_tag(std::string_view tag) const {
  std::lock_guard lock(mu_);
  auto it = by_tag_.find(tag);
  return it == by_tag_.end() ? MeterTotals{} : it->second;
}

MeterTotals MeterLedger::by_session(std::string_view session_id) const {
  std::lock_guard lock(mu_);
  auto it = by_session_.find(session_id);
  return it == by_session_.end() ? MeterTotals{} : it->second;
}

MeterTotals MeterLedger::by_session_tag(std::string_view session_id, std::string_view tag) const {
  std::lock_guard lock(mu_);
  MeterTotals t;
  for (const auto& r : records_) {
    if (r.session_id == session_id && r.tag == tag) t.add(r);
  }
  return t;
}

bool MeterLedger::any_estimated() const {
  std::lock_guard lock(mu_);
  for (const auto& r : records_) {
    if (r.estimated) return true;
  }
  return false;
}

std::string MeterLedger::export_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& r : records_) {
    nlohmann::ordered_json j;
    j["tag"] = r.tag;
    j["session_id"] = r.session_id;
    j["prompt_tokens"] = r.prompt_tokens;
    j["completion_tokens"] = r.completion_tokens;
    j["latency_s"] = r.latency_s;
    j["ts"] = r.ts;
    if (r.estimated) j["estimated"] = true;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void MeterLedger::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  f << export_jsonl();
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

void from_json(const json& j, ScriptedReply& r) {
  if (j.is_string()) {
    r = ScriptedReply{};
    r.text = j.get<std::string>();
    return;
  }
  r.text = j.at("text").get<std::string>();
  if (j.contains("prompt_tokens")) r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  if (j.contains("completion_tokens")) r.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
  r.latency_s = j.value("latency_s", 0.0);
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::queue(std::vector<ScriptedReply> replies) {
  if (replies.empty()) throw std::invalid_argument("scripted queue must be non-empty");
  std::shared_ptr<ScriptedBackend> b(new ScriptedBackend());
  b->queue_ = std::move(replies);
  return b;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::keyed(std::map<std::string, ScriptedReply> by_fingerprint) {
  if (by_fingerprint.empty()) throw std::invalid_argument("scripted key table must be non-empty");
  std::shared_ptr<ScriptedBackend> b(new ScriptedBackend());
  b->keyed_ = true;
  b->keyed_replies_ = std::move(by_fingerprint);
  return b;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& script) {
  const auto mode = script.value("mode", std::string("queue"));
  if (mode == "queue") {
    return queue(script.at("replies").get<std::vector<ScriptedReply>>());
  }
  if (mode == "keyed") {
    std::map<std::string, ScriptedReply> table;
    for (const auto& e : script.at("entries")) {
      std::string fp = e.contains("fingerprint")
                           ? e.at("fingerprint").get<std::string>()
                           : fingerprint(e.at("tag").get<std::string>(), e.at("user").get<std::string>());
      table[fp] = e.get<ScriptedReply>();
    }
    return keyed(std::move(table));
  }
  throw std::invalid_argument("unknown script mode '" + mode + "'");
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read script " + path.string());
  return from_json(json::parse(f));
}

std::string ScriptedBackend::fingerprint(std::string_view tag, std::string_view last_user) {
  std::string key(tag);
  key += '\x1f';
  key += last_user;
  return text::hex64(text::fnv1a(key));
}

std::string ScriptedBackend::fingerprint(const ChatRequest& request) {
  return fingerprint(request.tag, request.last_user());
}

ChatResponse ScriptedBackend::send(const ChatRequest& request, std::chrono::milliseconds deadline) {
  ScriptedReply reply;
  {
    std::lock_guard lock(mu_);
    if (keyed_) {
      const auto fp = fingerprint(request);
      auto it = keyed_replies_.find(fp);
      if (it == keyed_replies_.end()) {
        throw GatewayError(GatewayError::Kind::script_miss, "no scripted reply for fingerprint " + fp);
      }
      reply = it->second;
    } else {
      if (next_ >= queue_.size()) {
        throw GatewayError(GatewayError::Kind::script_miss,
                           "scripted queue exhausted after " + std::to_string(queue_.size()) + " replies");
      }
      reply = queue_[next_++];
    }
  }
  if (reply.latency_s * 1000.0 > static_cast<double>(deadline.count())) {
    throw GatewayError(GatewayError::Kind::timeout, "scripted reply exceeds deadline");
  }
  ChatResponse r;
  r.text = reply.text;
  r.latency_s = reply.latency_s;
  r.estimated = !reply.prompt_tokens || !reply.completion_tokens;
  r.prompt_tokens = reply.prompt_tokens.value_or(text::estimate_tokens(request.rendered_prompt()));
  r.completion_tokens = reply.completion_tokens.value_or(text::estimate_tokens(reply.text));
  return r;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return keyed_ ? keyed_replies_.size() : queue_.size() - next_;
}

ChatResponse RecordingBackend::send(const ChatRequest& request, std::chrono::milliseconds deadline) {
  auto r = inner_->send(request, deadline);
  std::lock_guard lock(mu_);
  recorded_[ScriptedBackend::fingerprint(request)] =
      ScriptedReply{r.text, r.prompt_tokens, r.completion_tokens, r.latency_s};
  return r;
}

std::map<std::string, ScriptedReply> RecordingBackend::recorded() const {
  std::lock_guard lock(mu_);
  return recorded_;
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

void check_request(const ChatRequest& request) {
  if (request.messages.empty()) throw GatewayError(GatewayError::Kind::bad_request, "request has no messages");
  if (request.temperature < 0.0) throw GatewayError(GatewayError::Kind::bad_request, "negative temperature");
  if (request.max_output_tokens <= 0) throw GatewayError(GatewayError::Kind::bad_request, "max_output_tokens must be positive");
  std::size_t i = 0;
  if (request.messages.front().role == Role::system) ++i;
  for (std::size_t k = i + 1; k < request.messages.size(); ++k) {
    const Role prev = request.messages[k - 1].role;
    const Role cur = request.messages[k].role;
    if (cur == Role::system || cur == prev) {
      throw GatewayError(GatewayError::Kind::bad_request, "message roles must alternate");
    }
  }
  if (i < request.messages.size() && request.messages[i].role == Role::system) {
    throw GatewayError(GatewayError::Kind::bad_request, "only one leading system message allowed");
  }
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config, std::shared_ptr<Clock> clock)
    : backend_(std::move(backend)), config_(config), clock_(std::move(clock)) {
  if (!backend_) throw std::invalid_argument("gateway needs a backend");
  if (config_.max_attempts < 1) config_.max_attempts = 1;
  if (config_.max_in_flight < 1) config_.max_in_flight = 1;
}

void Gateway::acquire() {
  std::unique_lock lock(slot_mu_);
  slot_cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
  ++in_flight_;
}

void Gateway::release() {
  {
    std::lock_guard lock(slot_mu_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  check_request(request);
  acquire();
  struct SlotGuard {
    Gateway* g;
    ~SlotGuard() { g->release(); }
  } guard{this};

  auto delay = config_.backoff_base;
  for (int attempt = 1;; ++attempt) {
    try {
      ChatResponse r = backend_->send(request, config_.timeout);
      clock_->elapse(r.latency_s);
      ledger_.record(CallRecord{request.tag, request.session_id, r.prompt_tokens, r.completion_tokens,
                                r.latency_s, clock_->now(), r.estimated});
      return r;
    } catch (const GatewayError& e) {
      if (!e.retryable()) throw;
      if (attempt >= config_.max_attempts) {
        throw GatewayError(e.kind(), std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)",
                           attempt);
      }
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
}

}  // namespace followup
