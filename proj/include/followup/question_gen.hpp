#pragma once

#include <string>
#include <vector>

#include "followup/clustering.hpp"
#include "followup/form.hpp"
#include "followup/gateway.hpp"
#include "followup/transcript.hpp"

namespace followup {

struct ComposedQuestion {
  std::string group_id;
  std::string utterance;
  std::vector<std::string> covered_ids;
  bool audit_warning = false;  // accepted after a failed keyword audit
  double latency_s = 0.0;
};

struct ComposeConfig {
  std::string locale = "en";
  std::string session_id;
  std::string tag = std::string(tags::question_gen);
};

/// One conversational utterance for the whole group.
ComposedQuestion compose_question(const QuestionGroup& group, const FormSpec& form, Gateway& gateway,
                                  const ComposeConfig& config = {});

/// Re-poses only the items in `unanswered`, acknowledging the recent exchange.
ComposedQuestion compose_reask(const QuestionGroup& unanswered, const FormSpec& form, const Transcript& context,
                               Gateway& gateway, const ComposeConfig& config = {});

/// Every member question shares at least one stemmed content word with the utterance.
bool keyword_audit(std::string_view utterance, const QuestionGroup& group, const FormSpec& form);

/// True if a question or option id of the group appears in the utterance as a
/// whole token while not also being a word of the group's own patient-facing text.
bool leaks_identifiers(std::string_view utterance, const QuestionGroup& group, const FormSpec& form);

/// Plain template phrasing used when the model keeps leaking ids.
std::string template_utterance(const QuestionGroup& group, const FormSpec& form, bool reask);

/// Structured description of the group for deterministic backends.
nlohmann::json group_meta(const QuestionGroup& group, const FormSpec& form);

}  // namespace followup
