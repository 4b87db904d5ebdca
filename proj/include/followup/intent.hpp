/**
 * @file intent.hpp
 * @brief Retrieval-grounded intent extraction.
 *
 * The knowledge base stores (question utterance, patient response, result)
 * triples synthesised from known intents. At extraction time the most similar
 * stored dialogues become few-shot examples, and every extracted item is
 * filtered through validate_answer against its question.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/clustering.hpp"
#include "followup/form.hpp"
#include "followup/gateway.hpp"

namespace followup {

struct PersonaSpec;

struct ExtractionExample {
  std::string question_utterance;
  std::string patient_response;
  std::map<std::string, AnswerValue> result;
  QuestionType qtype = QuestionType::single_choice;
  std::string persona;  // which simulated patient produced the response

  friend bool operator==(const ExtractionExample&, const ExtractionExample&) = default;
};

void to_json(nlohmann::json& j, const ExtractionExample& e);
void from_json(const nlohmann::json& j, ExtractionExample& e);

struct KbManifest {
  std::string form_id;
  std::uint64_t seed = 0;
  std::vector<std::string> personas;
  std::string created_at;
  std::size_t samples_per_pair = 1;
  std::string prompt_version;
};

void to_json(nlohmann::json& j, const KbManifest& m);
void from_json(const nlohmann::json& j, KbManifest& m);

struct ScoredExample {
  std::size_t index = 0;
  double score = 0.0;
};

/// Term-frequency cosine index over case-folded word tokens of (utterance + response).
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(KbManifest manifest) : manifest_(std::move(manifest)) {}

  void add(ExtractionExample example);

  const std::vector<ExtractionExample>& examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const KbManifest& manifest() const { return manifest_; }
  /// Number of index entries; equals size() by construction.
  std::size_t index_size() const { return vectors_.size(); }

  /// Top-k by cosine score, descending; ties keep insertion order.
  std::vector<ScoredExample> rank(std::string_view query, std::size_t k) const;

  /// JSON lines, one example per line.
  std::string to_jsonl() const;
  void save(const std::filesystem::path& examples_path, const std::filesystem::path& manifest_path) const;
  static KnowledgeBase load(const std::filesystem::path& examples_path, const std::filesystem::path& manifest_path);
  static KnowledgeBase from_jsonl(std::string_view jsonl, KbManifest manifest);

 private:
  using TermVector = std::map<std::string, double>;
  static TermVector vectorize(std::string_view s);
  static double cosine(const TermVector& a, double norm_a, const TermVector& b, double norm_b);

  KbManifest manifest_;
  std::vector<ExtractionExample> examples_;
  std::vector<TermVector> vectors_;
  std::vector<double> norms_;
};

/// Cosine similarity of term-frequency vectors of the two texts.
double text_similarity(std::string_view a, std::string_view b);

struct KbConfig {
  std::uint64_t seed = 7;
  std::size_t samples_per_pair = 1;
  std::string created_at = "1970-01-01T00:00:00Z";
  ClusterConfig cluster;
};

struct KbBuildResult {
  KnowledgeBase kb;
  std::vector<std::string> warnings;
};

/// Samples one answer from the question's answer space.
AnswerValue sample_intent(const QuestionSpec& q, std::mt19937_64& rng);

/// Groups that extraction will see: the top-level grouping plus one group
/// set per trigger rule for conditional children.
std::vector<QuestionGroup> kb_groups(const FormSpec& form, const Grouping& grouping, Gateway& gateway,
                                     const ClusterConfig& config);

/// For each group x persona x sample: compose the ask, sample intents, have the
/// persona verbalise them, store the triple with the sampled intents as result.
KbBuildResult build_kb(const FormSpec& form, const Grouping& grouping, const std::vector<PersonaSpec>& personas,
                       Gateway& gateway, const KbConfig& config = {});

/// Top-k stored examples for the current dialogue (question utterance + patient response).
std::vector<ExtractionExample> retrieve_similar(const KnowledgeBase& kb, std::string_view dialogue, std::size_t k);

inline constexpr std::size_t kDefaultFewShot = 3;

// ---------------------------------------------------------------------------
// Validation and extraction
// ---------------------------------------------------------------------------

/// Strict numeric reading for a number blank: one decimal numeral (point or
/// comma), at most one unit word, optional hedges ("about", "around").
/// Anything else (a whole sentence) yields nullopt.
std::optional<Quantity> parse_quantity_strict(std::string_view s);

/// First decimal numeral in `s` plus an immediately following unit word, if any.
std::optional<Quantity> first_quantity(std::string_view s);

/// Returns `raw` when it satisfies the question's answer invariants, after
/// case-folded label/id normalisation; otherwise no_intent.
AnswerValue validate_answer(const QuestionSpec& question, const AnswerValue& raw);

/// Reads one item of a model's extraction document (tolerant of several shapes).
AnswerValue decode_item(const QuestionSpec& question, const nlohmann::json& value);

struct DialogueContext {
  std::string question_utterance;
  std::string patient_response;
};

struct ExtractConfig {
  std::string session_id;
  std::string tag = std::string(tags::extraction);
};

/// Every member gets an entry; unparseable or invalid items become no_intent.
std::map<std::string, AnswerValue> extract(const QuestionGroup& group, const FormSpec& form,
                                           const DialogueContext& dialogue,
                                           const std::vector<ExtractionExample>& examples, Gateway& gateway,
                                           const ExtractConfig& config = {});

/// Finds the outermost JSON object in model output (fenced or bare).
std::optional<nlohmann::json> find_json_object(std::string_view text);

}  // namespace followup
