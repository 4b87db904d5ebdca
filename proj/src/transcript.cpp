#include "followup/transcript.hpp"

#include <algorithm>

namespace followup {

void to_json(nlohmann::json& j, const Turn& t) {
  j = nlohmann::json{{"speaker", t.speaker == Speaker::system ? "system" : "patient"},
                     {"text", t.text},
                     {"ts", t.ts}};
  if (t.speaker == Speaker::system) j["latency_s"] = t.latency_s;
  if (t.covered_ids) j["covered_ids"] = *t.covered_ids;
  if (t.closing) j["closing"] = true;
  if (t.reask) j["reask"] = true;
  if (!t.recorded.empty()) j["recorded"] = t.recorded;
}

void from_json(const nlohmann::json& j, Turn& t) {
  const auto speaker = j.at("speaker").get<std::string>();
  if (speaker != "system" && speaker != "patient") throw std::invalid_argument("bad speaker '" + speaker + "'");
  t.speaker = speaker == "system" ? Speaker::system : Speaker::patient;
  t.text = j.at("text").get<std::string>();
  t.ts = j.value("ts", 0.0);
  t.latency_s = j.value("latency_s", 0.0);
  t.covered_ids.reset();
  if (j.contains("covered_ids")) t.covered_ids = j.at("covered_ids").get<std::vector<std::string>>();
  t.closing = j.value("closing", false);
  t.reask = j.value("reask", false);
  t.recorded = j.value("recorded", std::vector<std::string>{});
}

std::size_t question_turns(const Transcript& t) {
  return static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [](const Turn& x) { return x.is_question(); }));
}

}  // namespace followup
