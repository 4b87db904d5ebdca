#include "followup/sim_model.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "followup/form.hpp"
#include "followup/intent.hpp"
#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

namespace {

constexpr std::string_view kFillerCues[] = {
    "let me think", "hope that is useful", "weather has been", "not sure", "before i forget",
    "what were you asking", "to be honest",
};

constexpr std::string_view kVerbosePrefix = "Let me think about that for a moment.";
constexpr std::string_view kVerboseSuffix = "I hope that is useful to you.";
constexpr std::string_view kVaguePrefix = "Oh, the weather has been dreadful this week, hasn't it?";
constexpr std::string_view kNoIntentReply = "I'm not sure, to be honest.";

std::string strip_stop(std::string s) {
  s = text::trim(s);
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
  return text::trim(s);
}

struct Match {
  std::size_t pos;
  std::size_t len;
  std::string option_id;
};

/// Non-overlapping label occurrences, longest first at each position.
std::vector<Match> label_matches(std::string_view sentence, const json& options) {
  std::vector<Match> all;
  for (const auto& o : options) {
    const auto label = o.at("label").get<std::string>();
    if (label.empty()) continue;
    std::size_t from = 0;
    while (auto pos = text::find_phrase(sentence, label, from)) {
      all.push_back({*pos, label.size(), o.at("id").get<std::string>()});
      from = *pos + 1;
    }
  }
  std::sort(all.begin(), all.end(), [](const Match& a, const Match& b) {
    return a.len != b.len ? a.len > b.len : a.pos < b.pos;
  });
  std::vector<Match> kept;
  for (const auto& m : all) {
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Match& k) {
      return m.pos < k.pos + k.len && k.pos < m.pos + m.len;
    });
    if (!overlaps) kept.push_back(m);
  }
  std::sort(kept.begin(), kept.end(), [](const Match& a, const Match& b) { return a.pos < b.pos; });
  return kept;
}

std::optional<json> decode_blank(const json& blank, std::string_view part) {
  if (blank.value("value_kind", std::string("free_text")) == "number") {
    auto q = first_quantity(part);
    if (!q) return std::nullopt;
    return json{{"number", q->value}, {"unit", q->unit}};
  }
  auto t = strip_stop(std::string(part));
  if (t.empty()) return std::nullopt;
  return json{{"text", t}};
}

/// One sentence read as the answer to one question, or nullopt.
std::optional<json> decode_sentence(const json& q, std::string_view sentence) {
  const std::string folded = text::casefold(sentence);
  if (folded.find("rather not say") != std::string::npos) return json{{"kind", "refused"}};
  if (folded.find("don't know") != std::string::npos) return json{{"kind", "no_intent"}};

  const auto type = q.at("type").get<std::string>();
  if (type == "fill_blank") {
    const auto& blanks = q.at("blanks");
    if (blanks.empty()) return std::nullopt;
    std::vector<std::string> parts;
    if (blanks.size() == 1) {
      parts.emplace_back(sentence);
    } else {
      std::string cur;
      for (char c : sentence) {
        if (c == ';') {
          parts.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
      parts.push_back(cur);
    }
    json values = json::object();
    for (std::size_t i = 0; i < blanks.size() && i < parts.size(); ++i) {
      auto v = decode_blank(blanks[i], parts[i]);
      if (!v) return std::nullopt;
      values[blanks[i].at("id").get<std::string>()] = *v;
    }
    if (values.empty()) return std::nullopt;
    return json{{"kind", "blanks"}, {"values", values}};
  }

  const auto matches = label_matches(sentence, q.at("options"));
  if (matches.empty()) return std::nullopt;
  if (type == "multi_choice") {
    std::set<std::string> ids;
    for (const auto& m : matches) ids.insert(m.option_id);
    return json{{"kind", "chosen_many"}, {"options", ids}};
  }
  const auto best = std::max_element(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    return a.len != b.len ? a.len < b.len : a.pos > b.pos;
  });
  return json{{"kind", "chosen"}, {"option", best->option_id}};
}

std::string listing(const json& questions) {
  std::ostringstream os;
  for (std::size_t k = 0; k < questions.size(); ++k) {
    const auto& q = questions[k];
    if (k) os << ' ';
    os << q.at("text").get<std::string>();
    const auto& opts = q.value("options", json::array());
    if (!opts.empty()) {
      os << " (";
      for (std::size_t i = 0; i < opts.size(); ++i) {
        if (i) os << (i + 1 == opts.size() ? ", or " : ", ");
        os << (opts[i].is_object() ? opts[i].at("label").get<std::string>() : opts[i].get<std::string>());
      }
      os << ")";
    }
    for (const auto& b : q.value("blanks", json::array())) {
      const auto suffix = b.value("suffix", std::string{});
      if (!suffix.empty()) os << " (in " << suffix << ")";
    }
  }
  return os.str();
}

std::string compose(const json& meta) {
  const auto& qs = meta.at("questions");
  std::string out;
  if (meta.value("reask", false)) {
    out = "Sorry, I didn't quite catch that. ";
  } else if (qs.size() > 1) {
    out = "Next, a few related questions. ";
  }
  return out + listing(qs);
}

std::string patient(const json& meta) {
  const auto persona = meta.value("persona", std::size_t{0});
  std::vector<std::string> answers;
  for (const auto& i : meta.value("intents", json::array())) answers.push_back(i.at("answer").get<std::string>());
  std::string core = answers.empty() ? std::string(kNoIntentReply) : text::join(answers, " ");
  switch (persona % 3) {
    case 0: return core;
    case 1: return std::string(kVerbosePrefix) + " " + core + " " + std::string(kVerboseSuffix);
    default: return std::string(kVaguePrefix) + " " + core;
  }
}

json group_meta_of(const QuestionSpec& q) {
  json opts = json::array();
  for (const auto& o : q.options) opts.push_back({{"id", o.option_id}, {"label", o.label}});
  json blanks = json::array();
  for (const auto& b : q.blanks) {
    json jb{{"id", b.blank_id}, {"suffix", b.suffix}, {"value_kind", b.value_kind == ValueKind::number ? "number" : "free_text"}};
    if (b.unit) jb["unit"] = *b.unit;
    blanks.push_back(jb);
  }
  return json{{"id", q.question_id}, {"text", q.text}, {"type", to_string(q.qtype)}, {"options", opts}, {"blanks", blanks}};
}

/// The question a baseline utterance asks: the longest question text it contains.
const QuestionSpec* asked_question(const FormSpec& form, std::string_view utterance) {
  const QuestionSpec* best = nullptr;
  for (const auto& q : form.questions) {
    if (utterance.find(q.text) == std::string_view::npos) continue;
    if (best == nullptr || q.text.size() > best->text.size()) best = &q;
  }
  return best;
}

std::string baseline(const json& meta, const SimModelConfig& config) {
  const FormSpec form = decode_form(meta.at("form"));
  const auto& history = meta.at("history");

  AnswerMap extracted;
  std::map<std::string, std::size_t> asks;
  const QuestionSpec* pending = nullptr;
  for (const auto& turn : history) {
    const auto text = turn.at("text").get<std::string>();
    if (turn.at("speaker").get<std::string>() == "system") {
      pending = asked_question(form, text);
      if (pending != nullptr) ++asks[pending->question_id];
      continue;
    }
    if (pending == nullptr) continue;
    const auto meta_q = group_meta_of(*pending);
    for (const auto& sentence : text::sentences(text)) {
      if (sim_is_filler(sentence)) continue;
      auto v = decode_sentence(meta_q, sentence);
      if (!v) continue;
      auto value = v->get<AnswerValue>();
      if (value.has_intent()) extracted[pending->question_id] = std::move(value);
      break;
    }
    pending = nullptr;
  }

  const QuestionSpec* next = nullptr;
  for (const auto& id : reachable_in_order(form, extracted)) {
    if (extracted.count(id) != 0) continue;
    auto it = asks.find(id);
    if (it != asks.end() && it->second > config.baseline_reask_limit) continue;
    next = &form.at(id);
    break;
  }

  json ex = json::object();
  for (const auto& [id, v] : extracted) ex[id] = v;
  json out{{"extracted", ex}};
  if (next != nullptr) {
    out["next_question"] = listing(json::array({group_meta_of(*next)}));
    out["done"] = false;
  } else if (config.baseline_never_done) {
    out["next_question"] = std::string(kSimHoldLine);
    out["done"] = false;
  } else {
    out["next_question"] = "Thank you, that completes the form. Take care.";
    out["done"] = true;
  }
  return "```json\n" + out.dump() + "\n```";
}

}  // namespace

bool sim_is_filler(std::string_view sentence) {
  const auto folded = text::casefold(sentence);
  return std::any_of(std::begin(kFillerCues), std::end(kFillerCues),
                     [&](std::string_view cue) { return folded.find(cue) != std::string::npos; });
}

json sim_extract(const json& questions, std::string_view response) {
  json result = json::object();
  std::size_t next = 0;
  for (const auto& sentence : text::sentences(response)) {
    if (next >= questions.size()) break;
    if (sim_is_filler(sentence)) continue;
    if (auto v = decode_sentence(questions[next], sentence)) {
      result[questions[next].at("id").get<std::string>()] = *v;
      ++next;
    }
  }
  return result;
}

std::string sim_propose(const json& questions, std::size_t cap) {
  if (cap == 0) cap = 1;
  std::vector<std::vector<std::string>> groups;
  json prev_key;
  for (const auto& q : questions) {
    const json key{q.at("type"), q.value("options", json::array())};
    if (groups.empty() || key != prev_key || groups.back().size() >= cap) groups.emplace_back();
    groups.back().push_back(q.at("id").get<std::string>());
    prev_key = key;
  }
  return json(groups).dump();
}

std::string SimulatedModel::reply_text(const ChatRequest& request, const SimModelConfig& config) {
  const auto& meta = request.meta;
  const auto op = meta.is_object() ? meta.value("op", std::string{}) : std::string{};
  if (op == "summary") {
    std::vector<std::string> texts;
    for (const auto& q : meta.at("questions")) texts.push_back(q.at("text").get<std::string>());
    return "These questions cover: " + text::join(texts, "; ") + ".";
  }
  if (op == "propose") return sim_propose(meta.at("questions"), meta.value("cap", std::size_t{4}));
  if (op == "compose") return compose(meta);
  if (op == "extract") {
    return "```json\n" + sim_extract(meta.at("questions"), meta.at("response").get<std::string>()).dump() + "\n```";
  }
  if (op == "patient") return patient(meta);
  if (op == "baseline") return baseline(meta, config);
  throw GatewayError(GatewayError::Kind::script_miss, "simulated model has no behaviour for op '" + op + "'");
}

ChatResponse SimulatedModel::send(const ChatRequest& request, std::chrono::milliseconds deadline) {
  if (config_.latency_s * 1000.0 > static_cast<double>(deadline.count())) {
    throw GatewayError(GatewayError::Kind::timeout, "simulated latency exceeds the deadline");
  }
  ChatResponse r;
  r.text = reply_text(request, config_);
  r.prompt_tokens = text::estimate_tokens(request.rendered_prompt());
  r.completion_tokens = text::estimate_tokens(r.text);
  r.latency_s = config_.latency_s;
  r.estimated = true;
  return r;
}

}  // namespace followup
