/**
 * @file session.hpp
 * @brief Event-sourced session state shared by the modular engine and the baseline.
 *
 * Every mutation of a SessionState goes through apply_event, so the live state
 * and a replay of the event log are the same fold over the same events.
 */
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/form.hpp"
#include "followup/gateway.hpp"
#include "followup/group.hpp"
#include "followup/transcript.hpp"

namespace followup {

enum class Mode { modular, baseline };
std::string_view to_string(Mode m);
Mode mode_from(std::string_view s);

enum class SessionStatus { active, completed, aborted };
std::string_view to_string(SessionStatus s);

/// Where a session stands between events. Every phase except awaiting_reply
/// and terminal is resumed automatically by the owning engine.
enum class Phase { deciding, composing, awaiting_reply, extracting, terminal };
std::string_view to_string(Phase p);

enum class EventKind { created, system_utterance, patient_utterance, decision, answer_recorded, completed, aborted };
std::string_view to_string(EventKind k);

struct SessionEvent {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::created;
  nlohmann::json payload;
  double ts = 0.0;
};

nlohmann::json event_to_json(const SessionEvent& e);
SessionEvent event_from_json(const nlohmann::json& j);

struct Caps {
  std::size_t max_turns = 80;
  std::size_t max_reasks = 2;
};

enum class DecisionKind { reask, followup, next, done };
std::string_view to_string(DecisionKind k);

struct FlowDecision {
  DecisionKind kind = DecisionKind::done;
  /// REASK: the unanswered items; FOLLOWUP: the triggered children; NEXT: the group's members.
  std::vector<std::string> item_ids;
  /// The group asked next (REASK keeps the current group id). Empty for DONE.
  std::optional<QuestionGroup> group;
  /// Follow-up groups inserted at the front of pending (the first becomes `group`).
  std::vector<QuestionGroup> followup_groups;
  std::vector<std::string> exhausted;
  std::vector<std::string> consumed_triggers;  // "question_id#rule_index"
};

nlohmann::json decision_to_json(const FlowDecision& d);
FlowDecision decision_from_json(const nlohmann::json& j);

struct SessionState {
  std::string session_id;
  std::string form_id;
  Mode mode = Mode::modular;
  Caps caps;

  std::vector<QuestionGroup> plan;
  std::deque<QuestionGroup> pending;
  std::optional<QuestionGroup> current;
  AnswerMap answers;
  /// Extraction results of the latest reply for the current group, markers included.
  AnswerMap last_results;
  std::map<std::string, std::size_t> ask_counts;  // group id -> re-asks so far
  std::set<std::string> exhausted;
  std::set<std::string> consumed_triggers;
  std::set<std::string> asked;  // every item covered by some system utterance

  Transcript transcript;
  std::size_t turn_count = 0;
  SessionStatus status = SessionStatus::active;
  std::string abort_reason;
  Phase phase = Phase::deciding;
  std::size_t malformed_turns = 0;  // baseline outputs without a parseable block
  std::uint64_t next_seq = 1;

  bool terminal() const { return status != SessionStatus::active; }
};

/// Folds one event into the state. Throws std::logic_error on a sequence gap
/// or an event that is not legal in the current phase.
void apply_event(SessionState& state, const SessionEvent& event);

SessionState replay(const std::vector<SessionEvent>& events);

/// Canonical serialization; equal states give byte-identical dumps.
nlohmann::json state_to_json(const SessionState& s);

/// Receives each event together with the live state it was just applied to;
/// the service persists events here.
using EventSink = std::function<void(const SessionEvent&, const SessionState&)>;

/// Builds the next event with the state's sequence number, applies it and hands it to the sink.
SessionEvent emit(SessionState& state, std::vector<SessionEvent>* log, const EventSink& sink, EventKind kind,
                  nlohmann::json payload, double ts);

// ---------------------------------------------------------------------------
// Completion record
// ---------------------------------------------------------------------------

struct CompletionRecord {
  std::string session_id;
  std::string form_id;
  Mode mode = Mode::modular;
  std::string status;  // completed | aborted | in_progress
  std::string abort_reason;
  AnswerMap answers;                    // reachable items with a valid answer
  std::vector<std::string> unanswered;  // reachable items without one, in form order
  std::vector<std::string> exhausted;
  std::size_t turns = 0;
  MeterTotals tokens;
};

/// Every reachable question appears exactly once, in `answers` or in `unanswered`.
/// Throws std::logic_error for an active session unless `allow_active` (partial record).
CompletionRecord finalize(const SessionState& state, const FormSpec& form, const MeterTotals& tokens,
                          bool allow_active = false);

nlohmann::json record_to_json(const CompletionRecord& r);

/// Progress counts for clients: answered / reachable.
struct Progress {
  std::size_t answered = 0;
  std::size_t reachable = 0;
};
Progress progress(const SessionState& state, const FormSpec& form);

}  // namespace followup
