#include "followup/question_gen.hpp"

#include <algorithm>
#include <sstream>

#include "followup/prompts.hpp"
#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

nlohmann::json group_meta(const QuestionGroup& group, const FormSpec& form) {
  json qs = json::array();
  for (const auto& id : group.member_ids) {
    const auto& q = form.at(id);
    json opts = json::array();
    for (const auto& o : q.options) opts.push_back({{"id", o.option_id}, {"label", o.label}});
    json blanks = json::array();
    for (const auto& b : q.blanks) {
      json jb{{"id", b.blank_id},
              {"suffix", b.suffix},
              {"value_kind", b.value_kind == ValueKind::number ? "number" : "free_text"}};
      if (b.unit) jb["unit"] = *b.unit;
      blanks.push_back(std::move(jb));
    }
    qs.push_back({{"id", q.question_id}, {"text", q.text}, {"type", to_string(q.qtype)}, {"options", opts}, {"blanks", blanks}});
  }
  return qs;
}

namespace {

std::string item_listing(const QuestionGroup& group, const FormSpec& form) {
  std::ostringstream os;
  for (const auto& id : group.member_ids) {
    const auto& q = form.at(id);
    os << "- " << q.text;
    if (!q.options.empty()) {
      os << " Options: ";
      for (std::size_t i = 0; i < q.options.size(); ++i) os << (i ? " / " : "") << q.options[i].label;
      os << '.';
    }
    for (const auto& b : q.blanks) {
      if (!b.suffix.empty()) os << " Answer followed by: " << b.suffix << '.';
    }
    os << '\n';
  }
  return os.str();
}

std::string group_natural_text(const QuestionGroup& group, const FormSpec& form) {
  std::string all;
  for (const auto& id : group.member_ids) {
    const auto& q = form.at(id);
    all += q.text + ' ';
    for (const auto& o : q.options) all += o.label + ' ';
    for (const auto& b : q.blanks) all += b.suffix + ' ';
  }
  return all;
}

bool acceptable(const std::string& utterance, const QuestionGroup& group, const FormSpec& form) {
  return keyword_audit(utterance, group, form) && !leaks_identifiers(utterance, group, form);
}

ComposedQuestion generate(const ChatRequest& base, const QuestionGroup& group, const FormSpec& form,
                          Gateway& gateway, bool reask) {
  ComposedQuestion out;
  out.group_id = group.group_id;
  out.covered_ids = group.member_ids;

  auto call = [&](int attempt) {
    ChatRequest req = base;
    req.meta["attempt"] = attempt;
    auto r = gateway.complete(req);
    out.latency_s += r.latency_s;
    return text::trim(r.text);
  };

  std::string text = call(0);
  if (text.empty()) text = call(1);
  if (text.empty()) throw GatewayError(GatewayError::Kind::rejected, "model returned an empty question twice");

  if (!acceptable(text, group, form)) {
    std::string again = call(2);
    if (!again.empty()) text = std::move(again);
  }
  if (leaks_identifiers(text, group, form)) {
    text = template_utterance(group, form, reask);
    out.audit_warning = true;
  } else if (!keyword_audit(text, group, form)) {
    out.audit_warning = true;
  }
  out.utterance = std::move(text);
  return out;
}

}  // namespace

bool keyword_audit(std::string_view utterance, const QuestionGroup& group, const FormSpec& form) {
  const auto said = text::content_words(utterance);
  for (const auto& id : group.member_ids) {
    const auto want = text::content_words(form.at(id).text);
    if (want.empty()) continue;
    const bool hit = std::any_of(want.begin(), want.end(), [&](const std::string& w) { return said.count(w) != 0; });
    if (!hit) return false;
  }
  return true;
}

bool leaks_identifiers(std::string_view utterance, const QuestionGroup& group, const FormSpec& form) {
  const std::string natural = group_natural_text(group, form);
  auto leaked = [&](const std::string& id) {
    return text::contains_phrase(utterance, id) && !text::contains_phrase(natural, id);
  };
  for (const auto& id : group.member_ids) {
    if (leaked(id)) return true;
    const auto& q = form.at(id);
    for (const auto& o : q.options) {
      if (leaked(o.option_id)) return true;
    }
    for (const auto& b : q.blanks) {
      if (leaked(b.blank_id)) return true;
    }
  }
  return !group.group_id.empty() && text::contains_phrase(utterance, group.group_id) &&
         !text::contains_phrase(natural, group.group_id);
}

std::string template_utterance(const QuestionGroup& group, const FormSpec& form, bool reask) {
  std::ostringstream os;
  if (reask) os << "Let me ask that again. ";
  for (std::size_t k = 0; k < group.member_ids.size(); ++k) {
    const auto& q = form.at(group.member_ids[k]);
    if (k) os << ' ';
    os << q.text;
    if (!q.options.empty()) {
      os << " (";
      for (std::size_t i = 0; i < q.options.size(); ++i) {
        if (i) os << (i + 1 == q.options.size() ? ", or " : ", ");
        os << q.options[i].label;
      }
      os << ")";
    }
    for (const auto& b : q.blanks) {
      if (!b.suffix.empty()) os << " (in " << b.suffix << ")";
    }
  }
  return os.str();
}

ComposedQuestion compose_question(const QuestionGroup& group, const FormSpec& form, Gateway& gateway,
                                  const ComposeConfig& config) {
  if (group.member_ids.empty()) throw std::invalid_argument("cannot compose an empty group");
  ChatRequest req;
  req.tag = config.tag;
  req.session_id = config.session_id;
  req.temperature = kExtractionTemperature;
  req.system_text = prompts::compose(group.qtype, config.locale);
  req.messages.push_back({Role::user, "Form items:\n" + item_listing(group, form)});
  req.meta = json{{"op", "compose"}, {"reask", false}, {"questions", group_meta(group, form)}};
  return generate(req, group, form, gateway, false);
}

ComposedQuestion compose_reask(const QuestionGroup& unanswered, const FormSpec& form, const Transcript& context,
                               Gateway& gateway, const ComposeConfig& config) {
  if (unanswered.member_ids.empty()) throw std::invalid_argument("cannot re-ask an empty group");
  std::ostringstream recent;
  const std::size_t from = context.size() > 4 ? context.size() - 4 : 0;
  for (std::size_t i = from; i < context.size(); ++i) {
    recent << (context[i].speaker == Speaker::system ? "Nurse: " : "Patient: ") << context[i].text << '\n';
  }
  ChatRequest req;
  req.tag = config.tag;
  req.session_id = config.session_id;
  req.temperature = kExtractionTemperature;
  req.system_text = prompts::reask(config.locale);
  req.messages.push_back(
      {Role::user, "Recent exchange:\n" + recent.str() + "Items still unanswered:\n" + item_listing(unanswered, form)});
  req.meta = json{{"op", "compose"}, {"reask", true}, {"questions", group_meta(unanswered, form)}};
  return generate(req, unanswered, form, gateway, true);
}

}  // namespace followup
