/**
 * @file sim_model.hpp
 * @brief A deterministic stand-in for the chat model.
 *
 * Answers every request from its structured `meta` (never from prose), so large
 * scripted runs need no per-call script. Behaviour per operation:
 *  - summary:  lists the question texts.
 *  - propose:  chunks consecutive questions sharing type and option labels, up to the cap.
 *  - compose:  the member questions verbatim, with their options.
 *  - extract:  walks the reply sentence by sentence, matching option labels on word
 *              boundaries (longest first) and quantities for number blanks.
 *  - patient:  the intended answers, wrapped in the persona's habits.
 *  - baseline: one form question per turn in form order, replaying its own
 *              decisions from the dialogue history.
 */
#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "followup/gateway.hpp"

namespace followup {

struct SimModelConfig {
  double latency_s = 1.0;
  /// Baseline never declares completion (exercises the turn cap).
  bool baseline_never_done = false;
  /// Baseline asks an unanswered item at most this many extra times.
  std::size_t baseline_reask_limit = 2;
};

class SimulatedModel final : public ChatBackend {
 public:
  explicit SimulatedModel(SimModelConfig config = {}) : config_(config) {}
  ChatResponse send(const ChatRequest& request, std::chrono::milliseconds deadline) override;

  /// The reply text alone; throws GatewayError(script_miss) for an unknown op.
  static std::string reply_text(const ChatRequest& request, const SimModelConfig& config);

 private:
  SimModelConfig config_;
};

/// Filler sentences the simulated personas add; the simulated extractor ignores them.
bool sim_is_filler(std::string_view sentence);

/// Extraction over group_meta-shaped questions; returns {question_id: AnswerValue json}.
nlohmann::json sim_extract(const nlohmann::json& questions, std::string_view response);

/// "[[a,b],[c]]" chunking of consecutive same-type, same-label questions.
std::string sim_propose(const nlohmann::json& questions, std::size_t cap);

inline constexpr std::string_view kSimHoldLine = "Please hold the line for a moment.";

}  // namespace followup
