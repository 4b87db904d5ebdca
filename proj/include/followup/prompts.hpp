#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "followup/form.hpp"

// Versioned prompt assets. Bump kVersion whenever wording changes so that
// recorded scripts and KB manifests can be matched to the prompts that made them.
namespace followup::prompts {

inline constexpr std::string_view kVersion = "2026.10-1";

inline constexpr std::string_view kAbstraction =
    "You are preparing a clinical follow-up questionnaire for a phone conversation. "
    "Read all of the questions below and write a short content-level description of what "
    "they cover: the main themes, which questions belong to the same theme, and anything "
    "that links them. Reply with plain prose, at most five sentences.";

std::string clustering(std::size_t group_cap);

/// Question generation instructions, one variant per question type.
std::string compose(QuestionType type, std::string_view locale);

std::string reask(std::string_view locale);

/// Intent extraction instructions, one variant per question type.
std::string extraction(QuestionType type);

inline constexpr std::string_view kBaselineInstructions =
    "You are a follow-up assistant calling a patient on behalf of their care team. "
    "You are given the complete follow-up form and the dialogue so far. Work through the form "
    "as follows. 1) Read the form and the dialogue history carefully and work out which "
    "questions have already been asked and answered. 2) Ask exactly one next question, "
    "starting with the first question of the form and keeping the form order. Keep the "
    "original meaning of every question and present the predefined options. 3) Extract the "
    "patient's answers into the predefined option ids or, for fill-in items, the bare value. "
    "4) Obey the skip logic: only ask a conditional question when its trigger condition is met. "
    "5) When every applicable question has an answer, thank the patient and finish. "
    "Every reply must be a single JSON object inside a ```json fence with the fields "
    "\"next_question\" (string, what you say to the patient), \"extracted\" (object keyed by "
    "question id, cumulative over the whole dialogue, each value {\"kind\":\"chosen\",\"option\":id} | "
    "{\"kind\":\"chosen_many\",\"options\":[ids]} | {\"kind\":\"blanks\",\"values\":{blank_id:{\"number\":n,\"unit\":u} | "
    "{\"text\":t}}}) and \"done\" (boolean).";

}  // namespace followup::prompts
