/**
 * @file service.hpp
 * @brief Live follow-up sessions over HTTP with an append-only event log per session.
 *
 * Layout under the data directory:
 *   forms/{id}.json, forms/{id}.ledger.json, forms/{id}.grouping.json
 *   kb/{id}.examples.jsonl, kb/{id}.manifest.json
 *   sessions/{id}.jsonl        one SessionEvent per line, flushed before any reply
 *   sessions/{id}.meta.json    patient selector
 *   sessions/{id}.calls.jsonl  model calls attributed to the session
 */
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/flow.hpp"
#include "followup/pipeline.hpp"

namespace followup {

/// An error with an HTTP status; `retry_after_s` > 0 asks the client to retry.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what, int retry_after_s = 0)
      : std::runtime_error(what), status_(status), retry_after_s_(retry_after_s) {}
  int status() const { return status_; }
  int retry_after_s() const { return retry_after_s_; }

 private:
  int status_;
  int retry_after_s_;
};

struct ServiceConfig {
  std::filesystem::path data_dir = "data/service";
  FlowConfig flow;
  Caps baseline_caps;
  ClusterConfig cluster;
  KbConfig kb;
  /// When non-empty, mutating requests must carry it in the X-Followup-Token header.
  std::string auth_token;
  /// Called after each event is durably appended, with the engine's live state.
  EventSink on_event;
};

class SessionService {
 public:
  SessionService(ServiceConfig config, std::shared_ptr<Gateway> gateway);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Validates and stores a form, then builds its grouping and KB.
  /// Body: a form document, or {"form": ..., "ledger": ...}.
  nlohmann::json put_form(const nlohmann::json& body);
  nlohmann::json get_form(const std::string& form_id) const;

  /// Body: {form_id, mode: modular|baseline, patient: live|scripted|scripted-vague|persona-k, session_id?}.
  /// Non-live patients are driven to the end before the response.
  nlohmann::json create_session(const nlohmann::json& body);

  /// Body: {client_msg_id, text}. A repeated client_msg_id returns the original reply without stepping.
  nlohmann::json post_message(const std::string& session_id, const nlohmann::json& body);

  /// Finishes a step that a crash interrupted and returns the pending reply.
  nlohmann::json resume(const std::string& session_id);

  nlohmann::json result(const std::string& session_id) const;
  nlohmann::json transcript(const std::string& session_id) const;
  nlohmann::json metrics(const std::string& session_id) const;

  /// Loads every session log. Returns the number of sessions left active.
  /// A corrupt tail is cut back to the last intact event.
  std::size_t recover();

  /// Replayed state of a session (for inspection and tests).
  SessionState snapshot(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  const std::vector<std::string>& recovery_log() const { return recovery_log_; }

  const ServiceConfig& config() const { return config_; }
  Gateway& gateway() { return *gateway_; }

 private:
  struct FormAssets;
  struct Session;

  std::shared_ptr<const FormAssets> assets(const std::string& form_id) const;
  std::shared_ptr<Session> find_session(const std::string& session_id) const;
  void continue_session(Session& s);
  void persist_calls(Session& s);
  nlohmann::json reply_view(const Session& s, std::uint64_t after_seq) const;
  nlohmann::json record_of(const Session& s) const;

  ServiceConfig config_;
  std::shared_ptr<Gateway> gateway_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const FormAssets>> forms_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<std::string> recovery_log_;
  std::uint64_t id_counter_ = 0;
};

/// Runs the HTTP API on a background thread.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();

  /// Binds and starts serving; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace followup
