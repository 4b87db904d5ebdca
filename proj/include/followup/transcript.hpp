#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace followup {

enum class Speaker { system, patient };

struct Turn {
  Speaker speaker = Speaker::system;
  std::string text;
  double ts = 0.0;
  double latency_s = 0.0;  // model latency behind a system turn
  /// Items the utterance asks about. Known for modular turns, absent for baseline turns.
  std::optional<std::vector<std::string>> covered_ids;
  bool closing = false;  // farewell after completion; not a question turn
  bool reask = false;
  /// On patient turns: items whose valid answer was recorded from this reply.
  std::vector<std::string> recorded;

  bool is_question() const { return speaker == Speaker::system && !closing; }
  friend bool operator==(const Turn&, const Turn&) = default;
};

using Transcript = std::vector<Turn>;

void to_json(nlohmann::json& j, const Turn& t);
void from_json(const nlohmann::json& j, Turn& t);

std::size_t question_turns(const Transcript& t);

}  // namespace followup
