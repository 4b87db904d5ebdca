/**
 * @file patient.hpp
 * @brief Simulated respondents: persona-driven model patients and a scripted
 *        patient that answers from a ground-truth ledger.
 */
#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/form.hpp"
#include "followup/gateway.hpp"
#include "followup/transcript.hpp"

namespace followup {

struct FewShotExchange {
  std::string question;
  std::string answer;
};

struct PersonaSpec {
  std::string key;  // "patient-1" ..
  std::string name;
  int age = 0;
  std::string occupation;
  std::string residence;
  std::string trait_profile;
  std::vector<FewShotExchange> few_shots;
};

/// Background, trait profile, and few-shot exchanges are all present.
bool persona_valid(const PersonaSpec& p);

/// The three presets: clear and concise, clear but verbose, vague or off-topic.
std::vector<PersonaSpec> make_personas();

std::string persona_system_prompt(const PersonaSpec& p);

class PatientMemory {
 public:
  explicit PatientMemory(std::size_t window = 6) : window_(window) {}
  void append(std::string question, std::string answer);
  const std::deque<FewShotExchange>& turns() const { return turns_; }
  std::size_t window() const { return window_; }

 private:
  std::size_t window_;
  std::deque<FewShotExchange> turns_;
};

using GroundTruthLedger = std::map<std::string, AnswerValue>;

GroundTruthLedger ledger_from_json(const nlohmann::json& j);
nlohmann::json ledger_to_json(const GroundTruthLedger& ledger);
GroundTruthLedger load_ledger(const std::filesystem::path& path);

/// Ids whose ledger value fails validation against its question, or that are unknown.
std::vector<std::string> ledger_violations(const GroundTruthLedger& ledger, const FormSpec& form);

/// Fixed phrasings keyed "question_id:option_id" (single choice) or "question_id";
/// "{answer}" in a template is replaced by the default phrasing.
struct PhrasingTable {
  std::map<std::string, std::string> entries;
  static PhrasingTable from_json(const nlohmann::json& j);
};

/// Default phrasing of one intended answer: the option label(s) or blank values, as one sentence.
std::string phrase_answer(const QuestionSpec& q, const AnswerValue& a, const PhrasingTable& phrasing = {});

/// Verbalises exactly the ledger intents of `covered_ids`, one sentence each, in order.
/// Throws std::out_of_range for an id missing from the ledger. Pure.
std::string scripted_respond(const GroundTruthLedger& ledger, const std::vector<std::string>& covered_ids,
                             const FormSpec& form, const PhrasingTable& phrasing = {});

struct RespondOptions {
  std::string session_id;
  std::string tag = std::string(tags::patient);
  /// Intended answers the persona should convey, as (question text, phrased answer) pairs.
  std::vector<std::pair<std::string, std::string>> intents;
  std::size_t persona_index = 0;
};

/// One persona reply through the gateway; appends to memory.
std::string respond(const PersonaSpec& persona, std::string_view question_utterance, PatientMemory& memory,
                    Gateway& gateway, const RespondOptions& options = {});

// ---------------------------------------------------------------------------
// Session-level patients
// ---------------------------------------------------------------------------

class Patient {
 public:
  virtual ~Patient() = default;
  /// Reply to one system question turn.
  virtual std::string reply(const Turn& question) = 0;
};

inline constexpr std::string_view kDigression =
    "Oh, before I forget, my neighbour's dog kept me awake again, barking at the moon. What were you asking?";

inline constexpr std::string_view kUnclear = "Sorry, I'm not sure what you are asking me.";

/// Deterministic oracle patient. Uses covered_ids when the turn carries them,
/// otherwise identifies the asked items from the wording. With
/// `digression_every = k > 0` it answers off-topic once each time the count of
/// newly asked items crosses a multiple of k.
class ScriptedPatient final : public Patient {
 public:
  ScriptedPatient(const FormSpec& form, GroundTruthLedger ledger, PhrasingTable phrasing = {},
                  std::size_t digression_every = 0);
  std::string reply(const Turn& question) override;

 private:
  const FormSpec& form_;
  GroundTruthLedger ledger_;
  PhrasingTable phrasing_;
  std::size_t digression_every_;
  std::set<std::string> seen_;
  std::size_t digressions_ = 0;
};

/// Model-driven persona patient; optionally steered by a ledger so that the
/// conveyed intents are known.
class PersonaPatient final : public Patient {
 public:
  PersonaPatient(const FormSpec& form, PersonaSpec persona, std::size_t persona_index, Gateway& gateway,
                 std::string session_id, std::optional<GroundTruthLedger> ledger = std::nullopt);
  std::string reply(const Turn& question) override;

 private:
  const FormSpec& form_;
  PersonaSpec persona_;
  std::size_t persona_index_;
  Gateway& gateway_;
  std::string session_id_;
  std::optional<GroundTruthLedger> ledger_;
  PatientMemory memory_;
};

}  // namespace followup
