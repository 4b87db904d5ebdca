#include "followup/clustering.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "followup/prompts.hpp"
#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

void to_json(json& j, const Grouping& g) {
  j = json{{"source_form_id", g.source_form_id}, {"vote_count", g.vote_count}, {"groups", g.groups}};
}

void from_json(const json& j, Grouping& g) {
  g.source_form_id = j.at("source_form_id").get<std::string>();
  g.vote_count = j.at("vote_count").get<int>();
  g.groups = j.at("groups").get<std::vector<QuestionGroup>>();
}

std::array<QuestionRefs, 3> partition_by_type(std::span<const QuestionSpec* const> questions) {
  std::array<QuestionRefs, 3> buckets;
  for (const auto* q : questions) buckets[static_cast<std::size_t>(q->qtype)].push_back(q);
  return buckets;
}

namespace {

json question_meta(const QuestionSpec& q) {
  json labels = json::array();
  for (const auto& o : q.options) labels.push_back(o.label);
  return json{{"id", q.question_id}, {"text", q.text}, {"type", to_string(q.qtype)}, {"options", labels}};
}

std::string question_listing(std::span<const QuestionSpec* const> questions) {
  std::ostringstream os;
  for (const auto* q : questions) {
    os << q->question_id << " | " << to_string(q->qtype) << " | " << q->text;
    if (!q->options.empty()) {
      os << " | options: ";
      for (std::size_t i = 0; i < q->options.size(); ++i) os << (i ? " / " : "") << q->options[i].label;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string abstract_summary(std::span<const QuestionSpec* const> questions, Gateway& gateway,
                             const ClusterConfig& config) {
  if (questions.empty()) throw std::invalid_argument("abstract_summary needs at least one question");
  ChatRequest req;
  req.tag = tags::clustering;
  req.session_id = config.session_id;
  req.temperature = kExtractionTemperature;
  req.system_text = std::string(prompts::kAbstraction);
  req.messages.push_back({Role::user, "Questions:\n" + question_listing(questions)});
  json qs = json::array();
  for (const auto* q : questions) qs.push_back(question_meta(*q));
  req.meta = json{{"op", "summary"}, {"questions", qs}};
  auto r = gateway.complete(req);
  auto summary = text::trim(r.text);
  if (summary.empty()) throw GatewayError(GatewayError::Kind::rejected, "model returned an empty summary");
  return summary;
}

std::optional<IdLists> parse_id_lists(std::string_view input) {
  const auto open = input.find("[[");
  if (open == std::string_view::npos) return std::nullopt;
  IdLists out;
  std::size_t i = open + 1;
  auto skip_ws = [&] {
    while (i < input.size() && (input[i] == ' ' || input[i] == '\n' || input[i] == '\t' || input[i] == '\r')) ++i;
  };
  while (true) {
    skip_ws();
    if (i >= input.size() || input[i] != '[') return std::nullopt;
    ++i;
    std::vector<std::string> group;
    while (true) {
      skip_ws();
      if (i >= input.size()) return std::nullopt;
      if (input[i] == ']') {
        ++i;
        break;
      }
      std::string id;
      const bool quoted = input[i] == '"' || input[i] == '\'';
      const char quote = input[i];
      if (quoted) ++i;
      while (i < input.size()) {
        const char c = input[i];
        if (quoted ? c == quote : (c == ',' || c == ']' || c == ' ' || c == '\n')) break;
        id.push_back(c);
        ++i;
      }
      if (quoted) {
        if (i >= input.size()) return std::nullopt;
        ++i;
      }
      if (id.empty()) return std::nullopt;
      group.push_back(id);
      skip_ws();
      if (i < input.size() && input[i] == ',') ++i;
    }
    if (group.empty()) return std::nullopt;
    out.push_back(std::move(group));
    skip_ws();
    if (i < input.size() && input[i] == ',') {
      ++i;
      continue;
    }
    if (i < input.size() && input[i] == ']') break;
    return std::nullopt;
  }
  return out;
}

std::optional<std::string> grouping_violation(const IdLists& lists, std::span<const QuestionSpec* const> questions,
                                              std::size_t cap) {
  std::map<std::string, const QuestionSpec*> by_id;
  for (const auto* q : questions) by_id.emplace(q->question_id, q);
  std::set<std::string> seen;
  for (const auto& group : lists) {
    if (group.empty()) return "empty group";
    if (group.size() > cap) return "group larger than cap " + std::to_string(cap);
    std::optional<QuestionType> type;
    for (const auto& id : group) {
      auto it = by_id.find(id);
      if (it == by_id.end()) return "unknown id '" + id + "'";
      if (!seen.insert(id).second) return "id '" + id + "' appears twice";
      if (type && *type != it->second->qtype) return "group mixes question types";
      type = it->second->qtype;
    }
  }
  if (seen.size() != by_id.size()) return "not every question is grouped";
  return std::nullopt;
}

std::optional<IdLists> propose_grouping(const std::string& summary, std::span<const QuestionSpec* const> questions,
                                        Gateway& gateway, const ClusterConfig& config) {
  json qs = json::array();
  for (const auto* q : questions) qs.push_back(question_meta(*q));
  for (int attempt = 0; attempt <= config.propose_retries; ++attempt) {
    ChatRequest req;
    req.tag = tags::clustering;
    req.session_id = config.session_id;
    req.temperature = kExtractionTemperature;
    req.system_text = prompts::clustering(config.group_cap);
    req.messages.push_back({Role::user, "Summary: " + summary + "\nQuestions:\n" + question_listing(questions)});
    req.meta = json{{"op", "propose"}, {"questions", qs}, {"cap", config.group_cap}, {"attempt", attempt}};
    auto r = gateway.complete(req);
    auto lists = parse_id_lists(r.text);
    if (lists && !grouping_violation(*lists, questions, config.group_cap)) return lists;
  }
  return std::nullopt;
}

IdLists canonical_signature(IdLists lists) {
  for (auto& g : lists) std::sort(g.begin(), g.end());
  std::sort(lists.begin(), lists.end());
  return lists;
}

VoteResult majority_vote(const std::vector<std::optional<IdLists>>& trials) {
  std::map<IdLists, int> counts;
  for (const auto& t : trials) {
    if (t) ++counts[canonical_signature(*t)];
  }
  VoteResult best;
  for (const auto& [sig, n] : counts) {
    // std::map iterates in ascending signature order, so on a full tie the
    // first one seen is already the lexicographically smallest.
    const bool better = !best.winner || n > best.count ||
                        (n == best.count && sig.size() < best.winner->size());
    if (better) {
      best.winner = sig;
      best.count = n;
    }
  }
  return best;
}

std::vector<QuestionGroup> materialize_groups(const IdLists& lists, std::span<const QuestionSpec* const> questions,
                                              const std::string& id_prefix) {
  std::map<std::string, const QuestionSpec*> by_id;
  for (const auto* q : questions) by_id.emplace(q->question_id, q);
  std::vector<std::vector<const QuestionSpec*>> groups;
  for (const auto& ids : lists) {
    std::vector<const QuestionSpec*> g;
    for (const auto& id : ids) g.push_back(by_id.at(id));
    std::sort(g.begin(), g.end(), [](auto* a, auto* b) { return a->ordinal < b->ordinal; });
    groups.push_back(std::move(g));
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front()->ordinal < b.front()->ordinal; });
  std::vector<QuestionGroup> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    QuestionGroup g;
    g.group_id = id_prefix + std::to_string(i + 1);
    g.qtype = groups[i].front()->qtype;
    for (const auto* q : groups[i]) g.member_ids.push_back(q->question_id);
    out.push_back(std::move(g));
  }
  return out;
}

Grouping cluster_with_vote(std::span<const QuestionSpec* const> questions, Gateway& gateway,
                           const ClusterConfig& config, const std::string& id_prefix) {
  if (config.trials < 1) throw std::invalid_argument("trials must be >= 1");
  Grouping out;
  if (questions.empty()) return out;
  if (questions.size() == 1) {
    // Only one partition exists; no trial can disagree with it.
    out.groups = materialize_groups({{questions.front()->question_id}}, questions, id_prefix);
    out.vote_count = config.trials;
    return out;
  }
  std::vector<std::optional<IdLists>> trials;
  for (int t = 0; t < config.trials; ++t) {
    const auto summary = abstract_summary(questions, gateway, config);
    trials.push_back(propose_grouping(summary, questions, gateway, config));
  }
  auto vote = majority_vote(trials);
  IdLists lists;
  if (vote.winner) {
    lists = *vote.winner;
    out.vote_count = vote.count;
  } else {
    for (const auto* q : questions) lists.push_back({q->question_id});
    out.vote_count = 0;
  }
  out.groups = materialize_groups(lists, questions, id_prefix);
  return out;
}

namespace {

// Clusters each type bucket separately, merges, and re-numbers by ascending minimum ordinal.
std::pair<std::vector<QuestionGroup>, int> cluster_buckets(const FormSpec& form, const QuestionRefs& questions,
                                                           Gateway& gateway, const ClusterConfig& config,
                                                           const std::string& id_prefix) {
  std::vector<QuestionGroup> merged;
  int votes = config.trials;
  for (const auto& bucket : partition_by_type(questions)) {
    if (bucket.empty()) continue;
    auto g = cluster_with_vote(bucket, gateway, config, "tmp");
    votes = std::min(votes, g.vote_count);
    for (auto& group : g.groups) merged.push_back(std::move(group));
  }
  std::sort(merged.begin(), merged.end(), [&](const QuestionGroup& a, const QuestionGroup& b) {
    return form.at(a.member_ids.front()).ordinal < form.at(b.member_ids.front()).ordinal;
  });
  for (std::size_t i = 0; i < merged.size(); ++i) merged[i].group_id = id_prefix + std::to_string(i + 1);
  return {std::move(merged), votes};
}

}  // namespace

Grouping cluster_form(const FormSpec& form, Gateway& gateway, const ClusterConfig& config) {
  const auto top = form.top_level();
  auto [groups, votes] = cluster_buckets(form, top, gateway, config, "g");
  Grouping out;
  out.source_form_id = form.form_id;
  out.groups = std::move(groups);
  out.vote_count = votes;
  return out;
}

std::vector<QuestionGroup> cluster_followups(const FormSpec& form, const std::vector<std::string>& ids,
                                             Gateway& gateway, const ClusterConfig& config,
                                             const std::string& id_prefix) {
  QuestionRefs refs;
  for (const auto& id : ids) refs.push_back(&form.at(id));
  return cluster_buckets(form, refs, gateway, config, id_prefix + ".").first;
}

std::string preview_grouping(const Grouping& grouping) {
  std::ostringstream os;
  for (std::size_t i = 0; i < grouping.groups.size(); ++i) {
    const auto& g = grouping.groups[i];
    os << "group " << (i + 1) << ": [" << text::join(g.member_ids, ", ") << "] (" << to_string(g.qtype) << ")\n";
  }
  return os.str();
}

}  // namespace followup
