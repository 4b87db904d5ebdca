/**
 * @file flow.hpp
 * @brief Modular dialogue flow: ask a group, extract, then re-ask, follow up, or advance.
 *
 * The engine only ever changes a SessionState by emitting events, so a session
 * can be rebuilt from its log and resumed from any phase.
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "followup/clustering.hpp"
#include "followup/form.hpp"
#include "followup/gateway.hpp"
#include "followup/intent.hpp"
#include "followup/session.hpp"

namespace followup {

struct FlowConfig {
  Caps caps;
  std::string locale = "en";
  std::size_t few_shot = kDefaultFewShot;
  ClusterConfig cluster;  // used for follow-up groups; session_id is filled in per session
};

/// Collaborators of one modular session. The knowledge base may be null, in
/// which case extraction runs zero-shot.
struct FlowEnv {
  const FormSpec& form;
  Gateway& gateway;
  const KnowledgeBase* kb = nullptr;
  FlowConfig config;
  EventSink sink;
  std::vector<SessionEvent>* log = nullptr;
};

inline constexpr std::string_view kClosing =
    "Thank you, that is everything I needed to ask today. Your answers have been passed on to your care team.";

/// Emits `created` and runs until the first question is asked.
/// Throws std::invalid_argument when the grouping does not belong to the form
/// (unknown or conditional members, missing or duplicated top-level questions) or caps are zero.
SessionState start_session(const FormSpec& form, const Grouping& grouping, const std::string& session_id,
                           FlowEnv& env);

/// Records the patient's reply and runs the flow until the next question or the end.
/// Throws std::logic_error when the session is not awaiting a reply.
void step(SessionState& state, std::string_view patient_utterance, FlowEnv& env);

/// Continues a session from whatever phase it is in (used after recovery).
void advance(SessionState& state, FlowEnv& env);

/// The three rules in strict order on the current group's latest results.
/// FOLLOWUP decisions carry the triggered children in item_ids; grouping them
/// into followup_groups is left to the engine.
FlowDecision select_next(const SessionState& state, const FormSpec& form);

/// The last question turn, if any.
const Turn* last_question(const SessionState& state);

}  // namespace followup
