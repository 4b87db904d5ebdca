#include <chrono>
#include <cstdlib>

#include "followup/gateway.hpp"
#include "followup/text.hpp"
#include "httplib.h"

namespace followup {

using nlohmann::json;

RemoteConfig RemoteConfig::from_env() {
  auto get = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v != nullptr ? std::string(v) : std::string{};
  };
  RemoteConfig c{get("LLM_BASE_URL"), get("LLM_API_KEY"), get("LLM_MODEL")};
  if (c.base_url.empty()) throw std::runtime_error("LLM_BASE_URL is not set");
  if (c.model.empty()) c.model = "default";
  return c;
}

namespace {

// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

}  // namespace

ChatResponse RemoteBackend::send(const ChatRequest& request, std::chrono::milliseconds deadline) {
  const auto [origin, prefix] = split_base(config_.base_url);
  httplib::Client client(origin);
  const auto secs = deadline.count() / 1000;
  const auto usecs = (deadline.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);

  json messages = json::array();
  if (!request.system_text.empty()) messages.push_back({{"role", "system"}, {"content", request.system_text}});
  for (const auto& m : request.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  const json body = {{"model", config_.model},
                     {"messages", messages},
                     {"temperature", request.temperature},
                     {"max_tokens", request.max_output_tokens}};

  const auto t0 = std::chrono::steady_clock::now();
  auto res = client.Post(prefix + "/chat/completions", body.dump(), "application/json");
  const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw GatewayError(GatewayError::Kind::timeout, "remote call timed out: " + httplib::to_string(err));
    }
    throw GatewayError(GatewayError::Kind::transport, "remote call failed: " + httplib::to_string(err));
  }
  if (res->status >= 500) {
    throw GatewayError(GatewayError::Kind::transport, "remote returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw GatewayError(GatewayError::Kind::rejected, "remote returned HTTP " + std::to_string(res->status));
  }

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::exception& e) {
    throw GatewayError(GatewayError::Kind::rejected, std::string("unparseable completion body: ") + e.what());
  }
  ChatResponse r;
  r.latency_s = latency;
  try {
    r.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw GatewayError(GatewayError::Kind::rejected, "completion body lacks choices[0].message.content");
  }
  if (doc.contains("usage") && doc["usage"].is_object() && doc["usage"].contains("prompt_tokens")) {
    r.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
    r.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
  } else {
    r.estimated = true;
    r.prompt_tokens = text::estimate_tokens(request.rendered_prompt());
    r.completion_tokens = text::estimate_tokens(r.text);
  }
  return r;
}

}  // namespace followup
