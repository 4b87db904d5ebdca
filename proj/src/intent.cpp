#include "followup/intent.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "followup/patient.hpp"
#include "followup/prompts.hpp"
#include "followup/question_gen.hpp"
#include "followup/text.hpp"

namespace followup {

using nlohmann::json;

void to_json(json& j, const ExtractionExample& e) {
  json result = json::object();
  for (const auto& [id, v] : e.result) result[id] = v;
  j = json{{"question_utterance", e.question_utterance},
           {"patient_response", e.patient_response},
           {"result", result},
           {"qtype", to_string(e.qtype)},
           {"persona", e.persona}};
}

void from_json(const json& j, ExtractionExample& e) {
  e.question_utterance = j.at("question_utterance").get<std::string>();
  e.patient_response = j.at("patient_response").get<std::string>();
  e.result.clear();
  for (const auto& [id, v] : j.at("result").items()) e.result.emplace(id, v.get<AnswerValue>());
  const auto t = question_type_from(j.at("qtype").get<std::string>());
  if (!t) throw std::invalid_argument("bad qtype in KB example");
  e.qtype = *t;
  e.persona = j.value("persona", std::string{});
}

void to_json(json& j, const KbManifest& m) {
  j = json{{"form_id", m.form_id},
           {"seed", m.seed},
           {"personas", m.personas},
           {"created_at", m.created_at},
           {"samples_per_pair", m.samples_per_pair},
           {"prompt_version", m.prompt_version}};
}

void from_json(const json& j, KbManifest& m) {
  m.form_id = j.at("form_id").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.personas = j.at("personas").get<std::vector<std::string>>();
  m.created_at = j.value("created_at", std::string{});
  m.samples_per_pair = j.value("samples_per_pair", std::size_t{1});
  m.prompt_version = j.value("prompt_version", std::string{});
}

// ---------------------------------------------------------------------------
// Knowledge base
// ---------------------------------------------------------------------------

KnowledgeBase::TermVector KnowledgeBase::vectorize(std::string_view s) {
  TermVector v;
  for (const auto& w : text::words(s)) v[w] += 1.0;
  return v;
}

double KnowledgeBase::cosine(const TermVector& a, double norm_a, const TermVector& b, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  double dot = 0.0;
  const TermVector& small = a.size() <= b.size() ? a : b;
  const TermVector& large = a.size() <= b.size() ? b : a;
  for (const auto& [term, w] : small) {
    auto it = large.find(term);
    if (it != large.end()) dot += w * it->second;
  }
  return dot / (norm_a * norm_b);
}

namespace {

double norm_of(const std::map<std::string, double>& v) {
  double s = 0.0;
  for (const auto& [_, w] : v) s += w * w;
  return std::sqrt(s);
}

std::string example_key(const ExtractionExample& e) { return e.question_utterance + "\n" + e.patient_response; }

}  // namespace

double text_similarity(std::string_view a, std::string_view b) {
  std::map<std::string, double> va;
  std::map<std::string, double> vb;
  for (const auto& w : text::words(a)) va[w] += 1.0;
  for (const auto& w : text::words(b)) vb[w] += 1.0;
  const double na = norm_of(va);
  const double nb = norm_of(vb);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [t, w] : va) {
    auto it = vb.find(t);
    if (it != vb.end()) dot += w * it->second;
  }
  return dot / (na * nb);
}

void KnowledgeBase::add(ExtractionExample example) {
  auto v = vectorize(example_key(example));
  norms_.push_back(norm_of(v));
  vectors_.push_back(std::move(v));
  examples_.push_back(std::move(example));
}

std::vector<ScoredExample> KnowledgeBase::rank(std::string_view query, std::size_t k) const {
  const auto q = vectorize(query);
  const double qn = norm_of(q);
  std::vector<ScoredExample> scored;
  scored.reserve(examples_.size());
  for (std::size_t i = 0; i < examples_.size(); ++i) scored.push_back({i, cosine(q, qn, vectors_[i], norms_[i])});
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

std::string KnowledgeBase::to_jsonl() const {
  std::string out;
  for (const auto& e : examples_) {
    out += json(e).dump();
    out += '\n';
  }
  return out;
}

void KnowledgeBase::save(const std::filesystem::path& examples_path, const std::filesystem::path& manifest_path) const {
  {
    std::ofstream f(examples_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + examples_path.string());
    f << to_jsonl();
  }
  std::ofstream m(manifest_path, std::ios::binary);
  if (!m) throw std::runtime_error("cannot write " + manifest_path.string());
  m << json(manifest_).dump(2) << '\n';
}

KnowledgeBase KnowledgeBase::from_jsonl(std::string_view jsonl, KbManifest manifest) {
  KnowledgeBase kb(std::move(manifest));
  std::istringstream in{std::string(jsonl)};
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    kb.add(json::parse(line).get<ExtractionExample>());
  }
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& examples_path, const std::filesystem::path& manifest_path) {
  std::ifstream m(manifest_path, std::ios::binary);
  if (!m) throw std::runtime_error("cannot read " + manifest_path.string());
  auto manifest = json::parse(m).get<KbManifest>();
  std::ifstream f(examples_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + examples_path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return from_jsonl(buf.str(), std::move(manifest));
}

std::vector<ExtractionExample> retrieve_similar(const KnowledgeBase& kb, std::string_view dialogue, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  std::vector<ExtractionExample> out;
  for (const auto& s : kb.rank(dialogue, k)) out.push_back(kb.examples()[s.index]);
  return out;
}

// ---------------------------------------------------------------------------
// KB construction
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kFreeTextSamples[] = {
    "mild stiffness in the mornings",
    "a dull ache after walking",
    "nothing unusual lately",
    "some tiredness in the evenings",
    "occasional dizziness when standing up",
    "a small rash on the left arm",
};

std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

AnswerValue sample_intent(const QuestionSpec& q, std::mt19937_64& rng) {
  switch (q.qtype) {
    case QuestionType::single_choice:
      return AnswerValue::chosen(q.options[draw(rng, q.options.size())].option_id);
    case QuestionType::multi_choice: {
      std::set<std::string> picked;
      for (const auto& o : q.options) {
        if (draw(rng, 2) == 1) picked.insert(o.option_id);
      }
      if (picked.empty()) picked.insert(q.options[draw(rng, q.options.size())].option_id);
      return AnswerValue::chosen_many(std::move(picked));
    }
    case QuestionType::fill_blank: {
      std::map<std::string, BlankValue> values;
      for (const auto& b : q.blanks) {
        if (b.value_kind == ValueKind::number) {
          values[b.blank_id] = Quantity{static_cast<double>(1 + draw(rng, 99)), canonical_unit(b.unit.value_or(""))};
        } else {
          values[b.blank_id] = std::string(kFreeTextSamples[draw(rng, std::size(kFreeTextSamples))]);
        }
      }
      return AnswerValue::blanks(std::move(values));
    }
  }
  return AnswerValue::no_intent();
}

std::vector<QuestionGroup> kb_groups(const FormSpec& form, const Grouping& grouping, Gateway& gateway,
                                     const ClusterConfig& config) {
  std::vector<QuestionGroup> out = grouping.groups;
  for (const auto& q : form.questions) {
    for (std::size_t t = 0; t < q.triggers.size(); ++t) {
      auto extra = cluster_followups(form, q.triggers[t].then, gateway, config,
                                     "kb-" + q.question_id + "-" + std::to_string(t));
      out.insert(out.end(), extra.begin(), extra.end());
    }
  }
  return out;
}

KbBuildResult build_kb(const FormSpec& form, const Grouping& grouping, const std::vector<PersonaSpec>& personas,
                       Gateway& gateway, const KbConfig& config) {
  KbManifest manifest;
  manifest.form_id = form.form_id;
  manifest.seed = config.seed;
  manifest.created_at = config.created_at;
  manifest.samples_per_pair = config.samples_per_pair;
  manifest.prompt_version = std::string(prompts::kVersion);
  for (const auto& p : personas) manifest.personas.push_back(p.key);

  KbBuildResult out{KnowledgeBase(manifest), {}};
  std::mt19937_64 rng(config.seed);

  ComposeConfig compose_cfg;
  compose_cfg.tag = std::string(tags::kb_build);
  ClusterConfig cluster_cfg = config.cluster;

  for (const auto& group : kb_groups(form, grouping, gateway, cluster_cfg)) {
    const auto asked = compose_question(group, form, gateway, compose_cfg);
    for (std::size_t p = 0; p < personas.size(); ++p) {
      for (std::size_t s = 0; s < config.samples_per_pair; ++s) {
        std::map<std::string, AnswerValue> intents;
        RespondOptions opts;
        opts.tag = std::string(tags::kb_build);
        opts.persona_index = p;
        for (const auto& id : group.member_ids) {
          const auto& q = form.at(id);
          auto a = sample_intent(q, rng);
          opts.intents.emplace_back(q.text, phrase_answer(q, a));
          intents.emplace(id, std::move(a));
        }
        try {
          PatientMemory memory;
          auto reply = respond(personas[p], asked.utterance, memory, gateway, opts);
          out.kb.add(ExtractionExample{asked.utterance, reply, std::move(intents), group.qtype, personas[p].key});
        } catch (const GatewayError& e) {
          out.warnings.push_back("persona " + personas[p].key + " failed on group " + group.group_id + ": " + e.what());
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Numbers
// ---------------------------------------------------------------------------

namespace {

bool is_hedge(std::string_view w) {
  static constexpr std::string_view hedges[] = {"about", "around", "approximately", "approx", "roughly", "nearly",
                                                "almost", "maybe", "circa", "ca", "some", "~", "like", "just",
                                                "under", "over", "probably"};
  return std::find(std::begin(hedges), std::end(hedges), w) != std::end(hedges);
}

// Reads a numeral starting at s[i]; accepts one '.' or ',' decimal separator.
std::optional<double> read_numeral(std::string_view s, std::size_t& i) {
  const std::size_t start = i;
  std::string digits;
  bool sep = false;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
      digits.push_back(c);
      ++i;
    } else if ((c == '.' || c == ',') && !sep && i + 1 < s.size() &&
               std::isdigit(static_cast<unsigned char>(s[i + 1])) != 0 && !digits.empty()) {
      digits.push_back('.');
      sep = true;
      ++i;
    } else {
      break;
    }
  }
  if (digits.empty()) {
    i = start;
    return std::nullopt;
  }
  return std::stod(digits);
}

struct Token {
  std::string text;
  bool numeral = false;
  double value = 0.0;
};

// Whitespace tokens with surrounding punctuation stripped; "70kg" splits into "70" "kg".
std::vector<Token> quantity_tokens(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c)) != 0 || c == ',' || c == ';' || c == '!' || c == '?' ||
        c == '(' || c == ')' || c == '"') {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
      Token t;
      t.numeral = true;
      t.value = *read_numeral(s, i);
      out.push_back(std::move(t));
      continue;
    }
    std::string w;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])) == 0 &&
           std::isdigit(static_cast<unsigned char>(s[i])) == 0 && s[i] != ',' && s[i] != ';' && s[i] != '!' &&
           s[i] != '?' && s[i] != ')' && s[i] != '"') {
      w.push_back(s[i]);
      ++i;
    }
    while (!w.empty() && (w.back() == '.' || w.back() == ':')) w.pop_back();
    if (!w.empty()) out.push_back(Token{text::casefold(w)});
  }
  return out;
}

}  // namespace

std::optional<Quantity> parse_quantity_strict(std::string_view s) {
  const auto tokens = quantity_tokens(s);
  std::optional<double> value;
  std::string unit;
  for (const auto& t : tokens) {
    if (t.numeral) {
      if (value) return std::nullopt;
      value = t.value;
    } else if (is_hedge(t.text)) {
      if (value) return std::nullopt;  // hedges only lead
    } else {
      if (!value || !unit.empty()) return std::nullopt;
      unit = t.text;
    }
  }
  if (!value) return std::nullopt;
  return Quantity{*value, canonical_unit(unit)};
}

std::optional<Quantity> first_quantity(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i])) == 0) continue;
    if (i > 0 && std::isalpha(static_cast<unsigned char>(s[i - 1])) != 0) continue;
    std::size_t j = i;
    auto value = read_numeral(s, j);
    if (!value) continue;
    while (j < s.size() && s[j] == ' ') ++j;
    std::string word;
    while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j])) != 0) word.push_back(s[j++]);
    Quantity q{*value, ""};
    if (!word.empty() && is_known_unit(word)) q.unit = canonical_unit(word);
    return q;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> normalize_option(const QuestionSpec& q, std::string_view raw) {
  if (q.find_option(raw) != nullptr) return std::string(raw);
  const std::string folded = text::casefold(text::trim(raw));
  for (const auto& o : q.options) {
    if (text::casefold(o.option_id) == folded) return o.option_id;
  }
  for (const auto& o : q.options) {
    if (text::casefold(text::trim(o.label)) == folded) return o.option_id;
  }
  return std::nullopt;
}

std::optional<BlankValue> normalize_blank(const BlankSpec& spec, const BlankValue& v) {
  if (spec.value_kind == ValueKind::free_text) {
    if (const auto* s = std::get_if<std::string>(&v)) {
      auto t = text::trim(*s);
      if (t.empty()) return std::nullopt;
      return t;
    }
    const auto& q = std::get<Quantity>(v);
    std::ostringstream os;
    os << q.value << (q.unit.empty() ? "" : " ") << q.unit;
    return os.str();
  }
  std::optional<Quantity> q;
  if (const auto* s = std::get_if<std::string>(&v)) {
    q = parse_quantity_strict(*s);
  } else {
    q = std::get<Quantity>(v);
  }
  if (!q || !std::isfinite(q->value)) return std::nullopt;
  const std::string want = canonical_unit(spec.unit.value_or(""));
  q->unit = canonical_unit(q->unit);
  if (q->unit.empty()) q->unit = want;
  if (q->unit != want) return std::nullopt;
  return *q;
}

}  // namespace

AnswerValue validate_answer(const QuestionSpec& question, const AnswerValue& raw) {
  if (!raw.has_intent()) return raw;
  const bool choice = question.qtype != QuestionType::fill_blank;

  if (const auto* c = raw.as_chosen()) {
    if (!choice) return AnswerValue::no_intent();
    auto id = normalize_option(question, c->option_id);
    if (!id) return AnswerValue::no_intent();
    if (question.qtype == QuestionType::multi_choice) return AnswerValue::chosen_many({*id});
    return AnswerValue::chosen(*id);
  }
  if (const auto* m = raw.as_chosen_many()) {
    if (!choice || m->option_ids.empty()) return AnswerValue::no_intent();
    std::set<std::string> ids;
    for (const auto& r : m->option_ids) {
      auto id = normalize_option(question, r);
      if (!id) return AnswerValue::no_intent();
      ids.insert(*id);
    }
    if (question.qtype == QuestionType::single_choice) {
      if (ids.size() != 1) return AnswerValue::no_intent();
      return AnswerValue::chosen(*ids.begin());
    }
    return AnswerValue::chosen_many(std::move(ids));
  }
  const auto* b = raw.as_blanks();
  if (choice || b == nullptr || b->values.empty()) return AnswerValue::no_intent();
  std::map<std::string, BlankValue> values;
  for (const auto& [id, v] : b->values) {
    const auto* spec = question.find_blank(id);
    if (spec == nullptr) return AnswerValue::no_intent();
    auto nv = normalize_blank(*spec, v);
    if (!nv) return AnswerValue::no_intent();
    values.emplace(id, std::move(*nv));
  }
  return AnswerValue::blanks(std::move(values));
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

std::optional<json> find_json_object(std::string_view text) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  try {
    auto j = json::parse(text.substr(open, close - open + 1));
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

namespace {

std::optional<BlankValue> decode_blank_value(const json& v) {
  if (v.is_number()) return Quantity{v.get<double>(), ""};
  if (v.is_string()) return v.get<std::string>();
  if (v.is_object()) {
    if (v.contains("number") && v["number"].is_number()) {
      return Quantity{v["number"].get<double>(), v.contains("unit") && v["unit"].is_string() ? v["unit"].get<std::string>() : ""};
    }
    if (v.contains("number") && v["number"].is_string()) return v["number"].get<std::string>();
    if (v.contains("text") && v["text"].is_string()) return v["text"].get<std::string>();
    if (v.contains("value")) return decode_blank_value(v["value"]);
  }
  return std::nullopt;
}

AnswerValue decode_blanks(const QuestionSpec& q, const json& values) {
  std::map<std::string, BlankValue> out;
  if (!values.is_object()) {
    if (q.blanks.size() != 1) return AnswerValue::no_intent();
    auto v = decode_blank_value(values);
    if (!v) return AnswerValue::no_intent();
    out.emplace(q.blanks.front().blank_id, std::move(*v));
    return AnswerValue::blanks(std::move(out));
  }
  for (const auto& [id, v] : values.items()) {
    auto bv = decode_blank_value(v);
    if (!bv) return AnswerValue::no_intent();
    out.emplace(id, std::move(*bv));
  }
  return AnswerValue::blanks(std::move(out));
}

}  // namespace

AnswerValue decode_item(const QuestionSpec& q, const json& value) {
  try {
    if (value.is_null()) return AnswerValue::no_intent();
    if (value.is_string()) {
      const auto s = text::casefold(text::trim(value.get<std::string>()));
      if (s == "refused") return AnswerValue::refused();
      if (s == "no_intent" || s == "null" || s.empty()) return AnswerValue::no_intent();
      if (q.qtype == QuestionType::fill_blank) return decode_blanks(q, value);
      return AnswerValue::chosen(value.get<std::string>());
    }
    if (value.is_number()) {
      if (q.qtype == QuestionType::fill_blank) return decode_blanks(q, value);
      return AnswerValue::no_intent();
    }
    if (value.is_array()) {
      std::set<std::string> ids;
      for (const auto& e : value) {
        if (!e.is_string()) return AnswerValue::no_intent();
        ids.insert(e.get<std::string>());
      }
      return AnswerValue::chosen_many(std::move(ids));
    }
    if (!value.is_object()) return AnswerValue::no_intent();
    if (value.contains("kind")) return value.get<AnswerValue>();
    if (value.contains("option") && value["option"].is_string()) return AnswerValue::chosen(value["option"].get<std::string>());
    if (value.contains("options") && value["options"].is_array()) return decode_item(q, value["options"]);
    if (value.contains("blanks")) return decode_blanks(q, value["blanks"]);
    if (value.contains("values")) return decode_blanks(q, value["values"]);
    if (q.qtype == QuestionType::fill_blank) return decode_blanks(q, value);
  } catch (const std::exception&) {
  }
  return AnswerValue::no_intent();
}

namespace {

std::string describe_items(const QuestionGroup& group, const FormSpec& form) {
  std::ostringstream os;
  for (const auto& id : group.member_ids) {
    const auto& q = form.at(id);
    os << "- " << q.question_id << " (" << to_string(q.qtype) << "): " << q.text;
    if (!q.options.empty()) {
      os << " Options:";
      for (const auto& o : q.options) os << ' ' << o.option_id << "=\"" << o.label << '"';
    }
    for (const auto& b : q.blanks) {
      os << " Blank " << b.blank_id << " (" << (b.value_kind == ValueKind::number ? "number" : "text");
      if (b.unit) os << ", unit " << *b.unit;
      os << ")";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::map<std::string, AnswerValue> extract(const QuestionGroup& group, const FormSpec& form,
                                           const DialogueContext& dialogue,
                                           const std::vector<ExtractionExample>& examples, Gateway& gateway,
                                           const ExtractConfig& config) {
  std::ostringstream user;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    json result = json::object();
    for (const auto& [id, v] : examples[i].result) result[id] = v;
    user << "Example " << (i + 1) << ":\nNurse: " << examples[i].question_utterance
         << "\nPatient: " << examples[i].patient_response << "\nResult: " << result.dump() << "\n\n";
  }
  user << "Form items:\n"
       << describe_items(group, form) << "Nurse: " << dialogue.question_utterance
       << "\nPatient: " << dialogue.patient_response << "\nResult:";

  ChatRequest req;
  req.tag = config.tag;
  req.session_id = config.session_id;
  req.temperature = kExtractionTemperature;
  req.system_text = prompts::extraction(group.qtype);
  req.messages.push_back({Role::user, user.str()});
  req.meta = json{{"op", "extract"},
                  {"questions", group_meta(group, form)},
                  {"question", dialogue.question_utterance},
                  {"response", dialogue.patient_response}};
  const auto r = gateway.complete(req);

  std::map<std::string, AnswerValue> out;
  const auto doc = find_json_object(r.text);
  for (const auto& id : group.member_ids) {
    const auto& q = form.at(id);
    AnswerValue raw = AnswerValue::no_intent();
    if (doc && doc->contains(id)) raw = decode_item(q, (*doc)[id]);
    out.emplace(id, validate_answer(q, raw));
  }
  return out;
}

}  // namespace followup
