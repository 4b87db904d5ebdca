#include "followup/form.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

std::string_view to_string(QuestionType t) {
  switch (t) {
    case QuestionType::single_choice: return "single_choice";
    case QuestionType::multi_choice: return "multi_choice";
    case QuestionType::fill_blank: return "fill_blank";
  }
  return "?";
}

std::optional<QuestionType> question_type_from(std::string_view s) {
  if (s == "single_choice") return QuestionType::single_choice;
  if (s == "multi_choice") return QuestionType::multi_choice;
  if (s == "fill_blank") return QuestionType::fill_blank;
  return std::nullopt;
}

std::string_view to_string(ConditionKind k) {
  switch (k) {
    case ConditionKind::equals: return "equals";
    case ConditionKind::contains: return "contains";
    case ConditionKind::answered: return "answered";
    case ConditionKind::matches_text: return "matches_text";
  }
  return "?";
}

bool condition_holds(const TriggerCondition& when, const AnswerValue& answer) {
  if (!answer.has_intent()) return false;
  switch (when.kind) {
    case ConditionKind::answered:
      return true;
    case ConditionKind::equals:
      if (const auto* c = answer.as_chosen()) return c->option_id == when.option_id;
      return false;
    case ConditionKind::contains:
      if (const auto* m = answer.as_chosen_many()) return m->option_ids.count(when.option_id) != 0;
      if (const auto* c = answer.as_chosen()) return c->option_id == when.option_id;
      return false;
    case ConditionKind::matches_text: {
      const auto* b = answer.as_blanks();
      if (b == nullptr) return false;
      const std::string needle = text::casefold(when.pattern);
      return std::any_of(b->values.begin(), b->values.end(), [&](const auto& kv) {
        const auto* s = std::get_if<std::string>(&kv.second);
        return s != nullptr && text::casefold(*s).find(needle) != std::string::npos;
      });
    }
  }
  return false;
}

const OptionSpec* QuestionSpec::find_option(std::string_view option_id) const {
  for (const auto& o : options) {
    if (o.option_id == option_id) return &o;
  }
  return nullptr;
}

const BlankSpec* QuestionSpec::find_blank(std::string_view blank_id) const {
  for (const auto& b : blanks) {
    if (b.blank_id == blank_id) return &b;
  }
  return nullptr;
}

const QuestionSpec* FormSpec::find(std::string_view question_id) const {
  for (const auto& q : questions) {
    if (q.question_id == question_id) return &q;
  }
  return nullptr;
}

const QuestionSpec& FormSpec::at(std::string_view question_id) const {
  if (const auto* q = find(question_id)) return *q;
  throw std::out_of_range("unknown question id '" + std::string(question_id) + "'");
}

std::vector<const QuestionSpec*> FormSpec::top_level() const {
  std::vector<const QuestionSpec*> out;
  for (const auto& q : questions) {
    if (!q.conditional) out.push_back(&q);
  }
  return out;
}

bool valid_identifier(std::string_view id) {
  if (id.empty() || id.size() > kMaxIdLength) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
  });
}

bool ValidationReport::has(std::string_view rule) const {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.rule == rule; });
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw FormError(FormError::Kind::schema, where + ": " + what);
}

std::string req_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) schema_error(where, std::string("missing field '") + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_string()) schema_error(where, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool opt_bool(const json& obj, const char* key, bool fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) schema_error(where, std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

const json* opt_array(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) return nullptr;
  const auto& v = obj.at(key);
  if (!v.is_array()) schema_error(where, std::string("field '") + key + "' must be an array");
  return &v;
}

TriggerRule decode_trigger(const json& t, const std::string& where) {
  if (!t.is_object()) schema_error(where, "trigger must be an object");
  if (!t.contains("when") || !t.at("when").is_object()) schema_error(where, "trigger missing 'when'");
  const auto& when = t.at("when");
  TriggerRule rule;
  const auto kind = req_string(when, "kind", where + ".when");
  if (kind == "equals" || kind == "contains") {
    rule.when.kind = kind == "equals" ? ConditionKind::equals : ConditionKind::contains;
    rule.when.option_id = req_string(when, "option_id", where + ".when");
  } else if (kind == "answered") {
    rule.when.kind = ConditionKind::answered;
  } else if (kind == "matches_text") {
    rule.when.kind = ConditionKind::matches_text;
    rule.when.pattern = req_string(when, "pattern", where + ".when");
  } else {
    schema_error(where, "unknown trigger kind '" + kind + "'");
  }
  const json* then = opt_array(t, "then", where);
  if (then == nullptr) schema_error(where, "trigger missing 'then'");
  for (const auto& id : *then) {
    if (!id.is_string()) schema_error(where, "'then' entries must be strings");
    rule.then.push_back(id.get<std::string>());
  }
  return rule;
}

QuestionSpec decode_question(const json& q, std::size_t ordinal) {
  const std::string where = "questions[" + std::to_string(ordinal) + "]";
  if (!q.is_object()) schema_error(where, "question must be an object");
  QuestionSpec out;
  out.ordinal = ordinal;
  out.question_id = req_string(q, "id", where);
  out.text = req_string(q, "text", where);
  const auto type = req_string(q, "type", where);
  const auto qt = question_type_from(type);
  if (!qt) schema_error(where, "unknown question type '" + type + "'");
  out.qtype = *qt;
  if (const json* opts = opt_array(q, "options", where)) {
    for (const auto& o : *opts) {
      out.options.push_back({req_string(o, "id", where + ".options"), req_string(o, "label", where + ".options")});
    }
  }
  if (const json* blanks = opt_array(q, "blanks", where)) {
    for (const auto& b : *blanks) {
      BlankSpec spec;
      spec.blank_id = req_string(b, "id", where + ".blanks");
      spec.suffix = b.contains("suffix") ? req_string(b, "suffix", where + ".blanks") : std::string{};
      const auto kind = b.contains("value_kind") ? req_string(b, "value_kind", where + ".blanks") : "free_text";
      if (kind == "number") {
        spec.value_kind = ValueKind::number;
      } else if (kind == "free_text") {
        spec.value_kind = ValueKind::free_text;
      } else {
        schema_error(where, "unknown value_kind '" + kind + "'");
      }
      if (b.contains("unit")) spec.unit = req_string(b, "unit", where + ".blanks");
      out.blanks.push_back(std::move(spec));
    }
  }
  if (const json* triggers = opt_array(q, "triggers", where)) {
    for (std::size_t i = 0; i < triggers->size(); ++i) {
      out.triggers.push_back(decode_trigger((*triggers)[i], where + ".triggers[" + std::to_string(i) + "]"));
    }
  }
  out.conditional = opt_bool(q, "conditional", false, where);
  out.required = opt_bool(q, "required", true, where);
  return out;
}

}  // namespace

FormSpec decode_form(const json& doc) {
  if (!doc.is_object()) schema_error("document", "top level must be an object");
  FormSpec form;
  form.form_id = req_string(doc, "form_id", "document");
  form.title = req_string(doc, "title", "document");
  form.version = req_string(doc, "version", "document");
  const json* qs = opt_array(doc, "questions", "document");
  if (qs == nullptr) schema_error("document", "missing field 'questions'");
  if (qs->empty()) schema_error("document", "form has zero questions");
  for (std::size_t i = 0; i < qs->size(); ++i) form.questions.push_back(decode_question((*qs)[i], i));
  return form;
}

FormSpec parse_form_json(const json& doc) {
  FormSpec form = decode_form(doc);
  auto report = validate_form(form);
  if (!report.ok()) {
    std::ostringstream os;
    os << "form '" << form.form_id << "' failed validation (" << report.findings.size() << " finding(s))";
    for (const auto& f : report.findings) os << "; " << f.rule << "@" << f.question_id;
    throw FormError(FormError::Kind::semantic, os.str(), std::move(report.findings));
  }
  return form;
}

FormSpec parse_form(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw FormError(FormError::Kind::syntax,
                    "syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return parse_form_json(doc);
}

nlohmann::ordered_json form_to_json(const FormSpec& form) {
  nlohmann::ordered_json doc;
  doc["form_id"] = form.form_id;
  doc["title"] = form.title;
  doc["version"] = form.version;
  auto qs = nlohmann::ordered_json::array();
  for (const auto& q : form.questions) {
    nlohmann::ordered_json jq;
    jq["id"] = q.question_id;
    jq["text"] = q.text;
    jq["type"] = to_string(q.qtype);
    if (!q.options.empty()) {
      auto opts = nlohmann::ordered_json::array();
      for (const auto& o : q.options) opts.push_back({{"id", o.option_id}, {"label", o.label}});
      jq["options"] = std::move(opts);
    }
    if (!q.blanks.empty()) {
      auto blanks = nlohmann::ordered_json::array();
      for (const auto& b : q.blanks) {
        nlohmann::ordered_json jb;
        jb["id"] = b.blank_id;
        jb["suffix"] = b.suffix;
        jb["value_kind"] = b.value_kind == ValueKind::number ? "number" : "free_text";
        if (b.unit) jb["unit"] = *b.unit;
        blanks.push_back(std::move(jb));
      }
      jq["blanks"] = std::move(blanks);
    }
    if (!q.triggers.empty()) {
      auto triggers = nlohmann::ordered_json::array();
      for (const auto& t : q.triggers) {
        nlohmann::ordered_json when;
        when["kind"] = to_string(t.when.kind);
        if (t.when.kind == ConditionKind::equals || t.when.kind == ConditionKind::contains) {
          when["option_id"] = t.when.option_id;
        } else if (t.when.kind == ConditionKind::matches_text) {
          when["pattern"] = t.when.pattern;
        }
        nlohmann::ordered_json jt;
        jt["when"] = std::move(when);
        jt["then"] = t.then;
        triggers.push_back(std::move(jt));
      }
      jq["triggers"] = std::move(triggers);
    }
    jq["conditional"] = q.conditional;
    jq["required"] = q.required;
    qs.push_back(std::move(jq));
  }
  doc["questions"] = std::move(qs);
  return doc;
}

std::string serialize_form(const FormSpec& form, int indent) { return form_to_json(form).dump(indent); }

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

void check_question_shape(const QuestionSpec& q, std::vector<Finding>& out) {
  auto add = [&](std::string rule, std::string detail) {
    out.push_back({q.question_id, std::move(rule), std::move(detail)});
  };
  if (!valid_identifier(q.question_id)) add("invalid-question-id", "ids are [a-z0-9_-]{1,64}");
  if (text::trim(q.text).empty()) add("empty-text", "question text is empty");

  std::set<std::string> seen_options;
  for (const auto& o : q.options) {
    if (!valid_identifier(o.option_id)) add("invalid-option-id", o.option_id);
    if (!seen_options.insert(o.option_id).second) add("duplicate-option-id", o.option_id);
    if (text::trim(o.label).empty()) add("empty-label", o.option_id);
  }
  std::set<std::string> seen_blanks;
  for (const auto& b : q.blanks) {
    if (!valid_identifier(b.blank_id)) add("invalid-blank-id", b.blank_id);
    if (!seen_blanks.insert(b.blank_id).second) add("duplicate-blank-id", b.blank_id);
    if (b.value_kind == ValueKind::free_text && b.unit) add("blank-unit-on-text", b.blank_id);
  }

  switch (q.qtype) {
    case QuestionType::single_choice:
    case QuestionType::multi_choice:
      if (q.options.size() < 2) add("choice-option-count", "choice questions need at least 2 options");
      if (!q.blanks.empty()) add("choice-has-blanks", "choice questions carry no blanks");
      break;
    case QuestionType::fill_blank:
      if (q.blanks.empty()) add("blank-count", "fill_blank questions need at least 1 blank");
      if (!q.options.empty()) add("blank-has-options", "fill_blank questions carry no options");
      break;
  }

  for (const auto& t : q.triggers) {
    const auto& w = t.when;
    const bool kind_ok = w.kind == ConditionKind::answered ||
                         (w.kind == ConditionKind::equals && q.qtype == QuestionType::single_choice) ||
                         (w.kind == ConditionKind::contains && q.qtype == QuestionType::multi_choice) ||
                         (w.kind == ConditionKind::matches_text && q.qtype == QuestionType::fill_blank);
    if (!kind_ok) add("trigger-kind-mismatch", std::string(to_string(w.kind)) + " on " + std::string(to_string(q.qtype)));
    if ((w.kind == ConditionKind::equals || w.kind == ConditionKind::contains) && q.find_option(w.option_id) == nullptr) {
      add("trigger-option-unknown", w.option_id);
    }
    if (w.kind == ConditionKind::matches_text && text::trim(w.pattern).empty()) add("trigger-empty-pattern", "");
    if (t.then.empty()) add("trigger-empty-then", "");
  }
}

}  // namespace

ValidationReport validate_form(const FormSpec& form) {
  ValidationReport report;
  auto& out = report.findings;

  if (form.questions.empty()) out.push_back({"", "no-questions", "form has zero questions"});
  if (form.questions.size() > kMaxQuestions) {
    out.push_back({"", "question-count-tier", std::to_string(form.questions.size()) + " > " + std::to_string(kMaxQuestions)});
  }

  std::unordered_map<std::string, const QuestionSpec*> by_id;
  for (const auto& q : form.questions) {
    if (!by_id.emplace(q.question_id, &q).second) out.push_back({q.question_id, "duplicate-question-id", ""});
    check_question_shape(q, out);
  }

  std::set<std::string> targets;
  for (const auto& q : form.questions) {
    for (const auto& t : q.triggers) {
      for (const auto& child : t.then) {
        auto it = by_id.find(child);
        if (it == by_id.end()) {
          out.push_back({q.question_id, "dangling-trigger-target", child});
          continue;
        }
        targets.insert(child);
        if (!it->second->conditional) out.push_back({child, "unflagged-conditional", "triggered by " + q.question_id});
      }
    }
  }
  bool any_top = false;
  for (const auto& q : form.questions) {
    if (!q.conditional) any_top = true;
    if (q.conditional && targets.count(q.question_id) == 0) {
      out.push_back({q.question_id, "orphan-conditional", "no trigger targets this question"});
    }
  }
  if (!form.questions.empty() && !any_top) out.push_back({"", "no-top-level-question", ""});

  // Cycle detection over then-edges (three-colour DFS).
  enum class Mark { white, grey, black };
  std::unordered_map<std::string, Mark> mark;
  bool cyclic = false;
  std::function<void(const QuestionSpec&)> visit = [&](const QuestionSpec& q) {
    mark[q.question_id] = Mark::grey;
    for (const auto& t : q.triggers) {
      for (const auto& child : t.then) {
        auto it = by_id.find(child);
        if (it == by_id.end()) continue;
        const Mark m = mark[child];
        if (m == Mark::grey) {
          cyclic = true;
          out.push_back({child, "trigger-cycle", "reached again from " + q.question_id});
        } else if (m == Mark::white) {
          visit(*it->second);
        }
      }
    }
    mark[q.question_id] = Mark::black;
  };
  for (const auto& q : form.questions) {
    if (mark[q.question_id] == Mark::white) visit(q);
  }

  if (!cyclic) {
    const auto depth = form_stats(form).max_depth;
    if (depth > kMaxTriggerDepth) {
      out.push_back({"", "trigger-depth", std::to_string(depth) + " > " + std::to_string(kMaxTriggerDepth)});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reachability
// ---------------------------------------------------------------------------

std::set<std::string> reachable_set(const FormSpec& form, const AnswerMap& answers) {
  for (const auto& [id, _] : answers) {
    if (form.find(id) == nullptr) throw std::out_of_range("answer for unknown question id '" + id + "'");
  }
  std::set<std::string> reach;
  std::vector<const QuestionSpec*> work;
  for (const auto* q : form.top_level()) {
    reach.insert(q->question_id);
    work.push_back(q);
  }
  while (!work.empty()) {
    const QuestionSpec* q = work.back();
    work.pop_back();
    auto it = answers.find(q->question_id);
    if (it == answers.end()) continue;
    for (const auto& t : q->triggers) {
      if (!condition_holds(t.when, it->second)) continue;
      for (const auto& child : t.then) {
        const auto* c = form.find(child);
        if (c != nullptr && reach.insert(child).second) work.push_back(c);
      }
    }
  }
  return reach;
}

std::vector<std::string> reachable_in_order(const FormSpec& form, const AnswerMap& answers) {
  const auto reach = reachable_set(form, answers);
  std::vector<std::string> out;
  for (const auto& q : form.questions) {
    if (reach.count(q.question_id) != 0) out.push_back(q.question_id);
  }
  return out;
}

StatsRecord form_stats(const FormSpec& form) {
  StatsRecord s;
  s.total = form.questions.size();
  std::unordered_map<std::string, const QuestionSpec*> by_id;
  for (const auto& q : form.questions) {
    by_id.emplace(q.question_id, &q);
    switch (q.qtype) {
      case QuestionType::single_choice: ++s.single_choice; break;
      case QuestionType::multi_choice: ++s.multi_choice; break;
      case QuestionType::fill_blank: ++s.fill_blank; break;
    }
    if (q.conditional) ++s.conditional;
    s.trigger_rules += q.triggers.size();
  }
  s.branching = s.trigger_rules > 0;

  // Longest then-chain from any top-level root; guarded against cycles.
  std::set<std::string> on_path;
  std::function<std::size_t(const QuestionSpec&)> depth = [&](const QuestionSpec& q) -> std::size_t {
    if (!on_path.insert(q.question_id).second) return 0;
    std::size_t best = 0;
    for (const auto& t : q.triggers) {
      for (const auto& child : t.then) {
        auto it = by_id.find(child);
        if (it != by_id.end()) best = std::max(best, 1 + depth(*it->second));
      }
    }
    on_path.erase(q.question_id);
    return best;
  };
  for (const auto* q : form.top_level()) s.max_depth = std::max(s.max_depth, depth(*q));
  return s;
}

nlohmann::json stats_to_json(const StatsRecord& s) {
  return {{"total", s.total},           {"single", s.single_choice},     {"multi", s.multi_choice},
          {"fill_blank", s.fill_blank}, {"conditional", s.conditional},  {"trigger_rules", s.trigger_rules},
          {"branching", s.branching},   {"max_depth", s.max_depth}};
}

}  // namespace followup
