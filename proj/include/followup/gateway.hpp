/**
 * @file gateway.hpp
 * @brief Single choke point for every model call: retries, timeout, in-flight cap, token metering.
 */
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace followup {

// Caller tags used in the ledger.
namespace tags {
inline constexpr std::string_view clustering = "clustering";
inline constexpr std::string_view question_gen = "question_gen";
inline constexpr std::string_view extraction = "extraction";
inline constexpr std::string_view baseline = "baseline";
inline constexpr std::string_view patient = "patient";
inline constexpr std::string_view kb_build = "kb_build";
}  // namespace tags

enum class Role { system, assistant, user };

std::string_view to_string(Role r);

struct ChatMessage {
  Role role = Role::user;
  std::string text;
};

struct ChatRequest {
  std::string system_text;
  std::vector<ChatMessage> messages;
  double temperature = 0.2;
  int max_output_tokens = 512;
  std::string tag;
  std::string session_id;
  /// Structured context for deterministic backends. Never sent to a remote endpoint.
  nlohmann::json meta;

  /// Text of the last user message, or empty.
  std::string last_user() const;
  /// Full prompt as sent (system text + every message), used for token estimates.
  std::string rendered_prompt() const;
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double latency_s = 0.0;
  bool estimated = false;  // token counts were estimated as ceil(chars/4)
};

class GatewayError : public std::runtime_error {
 public:
  enum class Kind { timeout, transport, rejected, script_miss, bad_request };

  GatewayError(Kind kind, const std::string& what, int attempts = 1)
      : std::runtime_error(what), kind_(kind), attempts_(attempts) {}

  Kind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  bool retryable() const { return kind_ == Kind::transport; }

 private:
  Kind kind_;
  int attempts_;
};

/// Time source for ledger and transcript timestamps. A simulated clock makes
/// scripted runs byte-reproducible.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;
  /// Called with each model latency; simulated clocks advance, the wall clock ignores it.
  virtual void elapse(double /*seconds*/) {}
};

class SystemClock final : public Clock {
 public:
  double now() override;
};

class SimClock final : public Clock {
 public:
  explicit SimClock(double start = 0.0) : t_(start) {}
  double now() override;
  void elapse(double seconds) override;

 private:
  std::mutex mu_;
  double t_;
};

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

struct CallRecord {
  std::string tag;
  std::string session_id;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double latency_s = 0.0;
  double ts = 0.0;
  bool estimated = false;
};

struct MeterTotals {
  std::int64_t requests = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double total_latency = 0.0;

  void add(const CallRecord& r);
  std::int64_t tokens() const { return prompt_tokens + completion_tokens; }
};

/// Thread-safe cumulative accounting. Totals are always the exact sum of records.
class MeterLedger {
 public:
  void record(CallRecord r);

  std::vector<CallRecord> records() const;
  MeterTotals totals() const;
  MeterTotals by_tag(std::string_view tag) const;
  MeterTotals by_session(std::string_view session_id) const;
  MeterTotals by_session_tag(std::string_view session_id, std::string_view tag) const;
  bool any_estimated() const;

  /// One JSON object per line: {tag, session_id, prompt_tokens, completion_tokens, latency_s, ts}.
  std::string export_jsonl() const;
  void write_jsonl(const std::filesystem::path& path) const;

 private:
  mutable std::mutex mu_;
  std::vector<CallRecord> records_;
  MeterTotals totals_;
  std::map<std::string, MeterTotals, std::less<>> by_tag_;
  std::map<std::string, MeterTotals, std::less<>> by_session_;
};

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Throws GatewayError. `deadline` bounds the wait for one attempt.
  virtual ChatResponse send(const ChatRequest& request, std::chrono::milliseconds deadline) = 0;
};

struct ScriptedReply {
  std::string text;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
  double latency_s = 0.0;
};

void from_json(const nlohmann::json& j, ScriptedReply& r);

/// Deterministic replies, either consumed FIFO or resolved by request fingerprint.
class ScriptedBackend final : public ChatBackend {
 public:
  static std::shared_ptr<ScriptedBackend> queue(std::vector<ScriptedReply> replies);
  static std::shared_ptr<ScriptedBackend> keyed(std::map<std::string, ScriptedReply> by_fingerprint);
  /// Script file: {"mode":"queue","replies":[...]} or {"mode":"keyed","entries":[{"tag","user"|"fingerprint",...}]}.
  static std::shared_ptr<ScriptedBackend> load(const std::filesystem::path& path);
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& script);

  /// Hash of tag + last user message.
  static std::string fingerprint(const ChatRequest& request);
  static std::string fingerprint(std::string_view tag, std::string_view last_user);

  ChatResponse send(const ChatRequest& request, std::chrono::milliseconds deadline) override;

  std::size_t remaining() const;

 private:
  ScriptedBackend() = default;

  mutable std::mutex mu_;
  bool keyed_ = false;
  std::vector<ScriptedReply> queue_;
  std::size_t next_ = 0;
  std::map<std::string, ScriptedReply> keyed_replies_;
};

/// Wraps a backend and remembers every reply keyed by fingerprint, so a run
/// can be replayed through ScriptedBackend::keyed.
class RecordingBackend final : public ChatBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}
  ChatResponse send(const ChatRequest& request, std::chrono::milliseconds deadline) override;
  std::map<std::string, ScriptedReply> recorded() const;

 private:
  std::shared_ptr<ChatBackend> inner_;
  mutable std::mutex mu_;
  std::map<std::string, ScriptedReply> recorded_;
};

struct RemoteConfig {
  std::string base_url;  // e.g. https://host/v1
  std::string api_key;
  std::string model;

  /// Reads LLM_BASE_URL, LLM_API_KEY, LLM_MODEL. Throws if LLM_BASE_URL is unset.
  static RemoteConfig from_env();
};

/// OpenAI-style chat-completions endpoint with bearer auth.
class RemoteBackend final : public ChatBackend {
 public:
  explicit RemoteBackend(RemoteConfig config) : config_(std::move(config)) {}
  ChatResponse send(const ChatRequest& request, std::chrono::milliseconds deadline) override;

 private:
  RemoteConfig config_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct GatewayConfig {
  std::chrono::milliseconds timeout{60'000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{200};
  int max_in_flight = 4;
};

inline constexpr double kExtractionTemperature = 0.2;
inline constexpr double kPatientTemperature = 0.7;

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config = {},
                   std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

  /// Validates the request, calls the backend with retry on transport errors,
  /// and records the response in the ledger before returning it.
  ChatResponse complete(const ChatRequest& request);

  MeterLedger& ledger() { return ledger_; }
  const MeterLedger& ledger() const { return ledger_; }
  Clock& clock() { return *clock_; }
  std::shared_ptr<Clock> clock_ptr() const { return clock_; }
  const GatewayConfig& config() const { return config_; }

 private:
  void acquire();
  void release();

  std::shared_ptr<ChatBackend> backend_;
  GatewayConfig config_;
  std::shared_ptr<Clock> clock_;
  MeterLedger ledger_;

  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
};

/// Throws GatewayError(bad_request) unless messages are non-empty and roles
/// alternate after an optional leading system message.
void check_request(const ChatRequest& request);

}  // namespace followup
