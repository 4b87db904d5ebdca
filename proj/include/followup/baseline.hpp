/**
 * @file baseline.hpp
 * @brief The end-to-end control chatbot: one prompt with instructions, the whole
 *        form and the whole dialogue; the model asks, extracts and decides alone.
 *
 * Deliberately independent of the modular pipeline (clustering, generation,
 * extraction, flow); it only uses the form, the gateway, and a patient.
 */
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "followup/form.hpp"
#include "followup/gateway.hpp"
#include "followup/patient.hpp"
#include "followup/prompts.hpp"
#include "followup/session.hpp"
#include "followup/transcript.hpp"

namespace followup {

struct BaselineTurnOutput {
  std::string next_question;
  AnswerMap extracted;  // cumulative, as reported by the model
  bool done = false;
  bool malformed = false;
  std::string raw_text;
};

/// The form as one text block: every question with its options or blanks,
/// and one "skip logic:" line per trigger rule.
std::string render_form_text(const FormSpec& form);

/// Instruction block, then the form, then the dialogue history.
ChatRequest build_baseline_prompt(const FormSpec& form, const Transcript& history,
                                  std::string_view instructions = prompts::kBaselineInstructions);

/// Total: anything without a readable block comes back malformed with raw_text kept.
/// With a form, extracted items for unknown question ids are dropped.
BaselineTurnOutput parse_baseline_output(std::string_view raw_text, const FormSpec* form = nullptr);

struct BaselineEnv {
  const FormSpec& form;
  Gateway& gateway;
  Caps caps;
  EventSink sink;
  std::vector<SessionEvent>* log = nullptr;
};

inline constexpr std::string_view kBaselineFallbackClosing = "Thank you for your time.";

/// Emits `created` and asks the first question (one model call).
SessionState start_baseline(const std::string& session_id, BaselineEnv& env);

/// Records the reply and makes the next model call.
void baseline_step(SessionState& state, std::string_view patient_utterance, BaselineEnv& env);

/// Resumes a baseline session from any phase.
void baseline_advance(SessionState& state, BaselineEnv& env);

struct BaselineRun {
  SessionState state;
  std::vector<SessionEvent> events;
};

/// Runs until the model says done, the turn cap, or a gateway failure.
BaselineRun run_baseline_session(const FormSpec& form, Patient& patient, Gateway& gateway, const Caps& caps,
                                 const std::string& session_id);

}  // namespace followup
