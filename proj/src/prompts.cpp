#include "followup/prompts.hpp"

namespace followup::prompts {

std::string clustering(std::size_t group_cap) {
  return "You group questions from a clinical follow-up form so that an interviewer can ask "
         "related questions together in one natural sentence. You receive a content summary and "
         "the list of questions, all of the same type. Put semantically or structurally similar "
         "questions into the same group. Every question id must appear in exactly one group and "
         "no group may hold more than " +
         std::to_string(group_cap) +
         " questions. Reply with only the groups as a bracketed list of id lists, for example "
         "[[q1,q2],[q3]].";
}

std::string compose(QuestionType type, std::string_view locale) {
  std::string base =
      "You are a friendly follow-up nurse talking with a patient. Turn the form questions "
      "below into one natural, conversational question in language '" +
      std::string(locale) +
      "'. Use plain words a patient understands, keep the clinical meaning, and never mention "
      "internal ids. ";
  switch (type) {
    case QuestionType::single_choice:
      return base + "The patient must pick exactly one option per question; read every option out verbatim.";
    case QuestionType::multi_choice:
      return base + "The patient may pick several options; read every option out verbatim and invite them to name all that apply.";
    case QuestionType::fill_blank:
      return base + "Ask for the value itself and mention the unit or phrase that follows it.";
  }
  return base;
}

std::string reask(std::string_view locale) {
  return "You are a friendly follow-up nurse. The patient's last reply did not answer some of the "
         "questions. Briefly acknowledge what they said, then ask again only about the items listed "
         "below, in different words than before, in language '" +
         std::string(locale) + "'. Read options out verbatim and never mention internal ids.";
}

std::string extraction(QuestionType type) {
  std::string base =
      "Extract the patient's answers to the listed form items from their reply. Use the solved "
      "examples as a guide. Reply with one JSON object keyed by question id. Use null for an item "
      "the reply does not answer and \"refused\" when the patient declines to answer. ";
  switch (type) {
    case QuestionType::single_choice:
      return base + "Each value is {\"option\": <option id>} using exactly one id from the item's option list.";
    case QuestionType::multi_choice:
      return base + "Each value is {\"options\": [<option ids>]} using only ids from the item's option list.";
    case QuestionType::fill_blank:
      return base + "Each value is {\"blanks\": {<blank id>: value}} where numeric blanks hold "
                    "{\"number\": n, \"unit\": u} and text blanks hold {\"text\": t}. Never copy the whole sentence.";
  }
  return base;
}

}  // namespace followup::prompts
