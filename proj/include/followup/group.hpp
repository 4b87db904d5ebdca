#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/form.hpp"

namespace followup {

/// Questions asked together in one utterance. Members share one type.
struct QuestionGroup {
  std::string group_id;
  std::vector<std::string> member_ids;
  QuestionType qtype = QuestionType::single_choice;
  friend bool operator==(const QuestionGroup&, const QuestionGroup&) = default;
};

void to_json(nlohmann::json& j, const QuestionGroup& g);
void from_json(const nlohmann::json& j, QuestionGroup& g);

}  // namespace followup
