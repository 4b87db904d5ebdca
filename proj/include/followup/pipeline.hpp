/**
 * @file pipeline.hpp
 * @brief End-to-end run drivers shared by the CLI, the acceptance suite and the service.
 */
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "followup/baseline.hpp"
#include "followup/eval.hpp"
#include "followup/flow.hpp"
#include "followup/intent.hpp"
#include "followup/patient.hpp"

namespace followup {

/// A form with its ground truth and optional fixed phrasings.
struct FormFixture {
  FormSpec form;
  GroundTruthLedger ledger;
  PhrasingTable phrasing;
};

/// Reads `<stem>.json` plus `<stem>.ledger.json` (and `<stem>.phrasing.json` when present)
/// unless an explicit ledger path is given.
FormFixture load_fixture(const std::filesystem::path& form_path, const std::filesystem::path& ledger_path = {});

/// "scripted", "scripted-vague" (one digression per 5 new items), "persona-1" .. "persona-3".
struct PatientSelector {
  enum class Kind { scripted, persona } kind = Kind::scripted;
  std::size_t persona_index = 0;
  std::size_t digression_every = 0;
  std::string label = "scripted";
};

PatientSelector parse_patient(std::string_view s);

std::unique_ptr<Patient> make_patient(const PatientSelector& sel, const FormFixture& fixture, Gateway& gateway,
                                      const std::string& session_id);

/// Per-form assets built once before modular sessions: the grouping and the extraction KB.
struct ModularAssets {
  Grouping grouping;
  KnowledgeBase kb;
  std::vector<std::string> warnings;
};

ModularAssets prepare_modular(const FormSpec& form, Gateway& gateway, const ClusterConfig& cluster = {},
                              const KbConfig& kb = {});

/// Tokens a session spent on system-side calls (patient simulation excluded).
MeterTotals system_tokens(const MeterLedger& ledger, std::string_view session_id);

struct RunOutcome {
  SessionState state;
  std::vector<SessionEvent> events;
  CompletionRecord record;
  RunMetrics metrics;
};

RunOutcome run_modular(const FormFixture& fixture, const ModularAssets& assets, Patient& patient, Gateway& gateway,
                       const FlowConfig& config, const std::string& session_id, const std::string& patient_label,
                       const EvalConfig& eval = {});

RunOutcome run_baseline(const FormFixture& fixture, Patient& patient, Gateway& gateway, const Caps& caps,
                        const std::string& session_id, const std::string& patient_label, const EvalConfig& eval = {});

/// Detector context for a finished session.
RunContext run_context(const SessionState& state);

}  // namespace followup
