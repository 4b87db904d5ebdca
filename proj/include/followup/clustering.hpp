/**
 * @file clustering.hpp
 * @brief Groups same-type questions into composite asks via summary + clustering prompts,
 *        stabilised by a majority vote over several trials.
 */
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "followup/form.hpp"
#include "followup/gateway.hpp"
#include "followup/group.hpp"

namespace followup {

struct Grouping {
  std::vector<QuestionGroup> groups;
  std::string source_form_id;
  int vote_count = 0;  // trials that produced the winning signature; 0 for the fallback
};

void to_json(nlohmann::json& j, const Grouping& g);
void from_json(const nlohmann::json& j, Grouping& g);

struct ClusterConfig {
  int trials = 5;
  std::size_t group_cap = 4;
  int propose_retries = 2;
  std::string session_id;  // ledger attribution for lazily clustered follow-ups
};

using QuestionRefs = std::vector<const QuestionSpec*>;

/// Buckets in {single_choice, multi_choice, fill_blank} order; authored order kept within each.
std::array<QuestionRefs, 3> partition_by_type(std::span<const QuestionSpec* const> questions);

/// Content-level description of the questions, from the abstraction prompt.
std::string abstract_summary(std::span<const QuestionSpec* const> questions, Gateway& gateway,
                             const ClusterConfig& config = {});

using IdLists = std::vector<std::vector<std::string>>;

/// Parses a bracketed id-list-of-lists such as "[[q1,q2],[q3]]", optionally
/// quoted and surrounded by prose or a code fence. nullopt when malformed.
std::optional<IdLists> parse_id_lists(std::string_view text);

/// Empty when `lists` partitions `questions` into type-homogeneous groups of
/// size 1..cap; otherwise the reason for rejection.
std::optional<std::string> grouping_violation(const IdLists& lists, std::span<const QuestionSpec* const> questions,
                                              std::size_t cap);

/// One clustering trial: up to 1 + propose_retries model calls. nullopt = fallback signal.
std::optional<IdLists> propose_grouping(const std::string& summary, std::span<const QuestionSpec* const> questions,
                                        Gateway& gateway, const ClusterConfig& config = {});

/// Groups sorted internally, then the groups sorted lexicographically.
IdLists canonical_signature(IdLists lists);

struct VoteResult {
  std::optional<IdLists> winner;  // nullopt when every trial was malformed
  int count = 0;
};

/// Modal signature; ties go to fewer groups, then the lexicographically smaller signature.
VoteResult majority_vote(const std::vector<std::optional<IdLists>>& trials);

/// Turns id lists into ordered QuestionGroups (ascending minimum ordinal; members in authored order).
std::vector<QuestionGroup> materialize_groups(const IdLists& lists, std::span<const QuestionSpec* const> questions,
                                              const std::string& id_prefix);

/// Runs `trials` summary+proposal rounds and votes. Falls back to singleton
/// groups in authored order when every trial is malformed. Never throws for
/// malformed model output; gateway errors propagate.
Grouping cluster_with_vote(std::span<const QuestionSpec* const> questions, Gateway& gateway,
                           const ClusterConfig& config = {}, const std::string& id_prefix = "g");

/// Clusters the form's top-level questions one type bucket at a time and merges the buckets.
Grouping cluster_form(const FormSpec& form, Gateway& gateway, const ClusterConfig& config = {});

/// Clusters fired follow-up questions the same way, with ids "<prefix>.<n>".
std::vector<QuestionGroup> cluster_followups(const FormSpec& form, const std::vector<std::string>& ids,
                                             Gateway& gateway, const ClusterConfig& config,
                                             const std::string& id_prefix);

/// "group k: [ids] (type)" per line.
std::string preview_grouping(const Grouping& grouping);

}  // namespace followup
