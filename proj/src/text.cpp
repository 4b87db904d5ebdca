#include "followup/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

namespace followup::text {

namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || u >= 0x80;
}

constexpr std::array<std::string_view, 96> kStopwords = {
    "a",     "about", "all",   "an",    "and",   "any",    "are",   "as",    "at",
    "be",    "been",  "but",   "by",    "can",   "could",  "did",   "do",    "does",
    "for",   "from",  "had",   "has",   "have",  "how",    "i",     "if",    "in",
    "into",  "is",    "it",    "its",   "me",    "my",     "no",    "not",   "of",
    "on",    "or",    "our",   "over",  "please", "so",    "some",  "than",  "that",
    "the",   "their", "them",  "then",  "there", "these",  "they",  "this",  "those",
    "to",    "up",    "very",  "was",   "we",    "were",   "what",  "when",  "where",
    "which", "while", "who",   "whom",  "why",   "will",   "with",  "would", "you",
    "your",  "yours", "yes",   "ok",    "okay",  "tell",   "us",    "let",   "know",
    "now",   "just",  "also",  "last",  "past",  "during", "each",  "much",  "many",
    "other", "same",  "such",  "own",   "too",   "again"};

}  // namespace

std::string casefold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_word_char(c)) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(casefold(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(casefold(cur));
  return out;
}

bool is_stopword(std::string_view word) {
  return std::find(kStopwords.begin(), kStopwords.end(), word) != kStopwords.end();
}

std::string stem(std::string_view word) {
  std::string w(word);
  auto strip = [&](std::string_view suffix, std::size_t min_left) {
    if (w.size() >= suffix.size() + min_left &&
        w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0) {
      w.resize(w.size() - suffix.size());
      return true;
    }
    return false;
  };
  if (strip("ies", 2)) {
    w += 'y';
  } else if (strip("ing", 3) || strip("ed", 3)) {
    // "smoking" -> "smok", "smoked" -> "smok"; align with "smoke" below.
  } else if (w.size() > 3 && w.back() == 's' && w[w.size() - 2] != 's') {
    w.pop_back();
  }
  if (w.size() > 3 && w.back() == 'e') w.pop_back();
  return w;
}

std::set<std::string> content_words(std::string_view s) {
  std::set<std::string> out;
  for (const auto& w : words(s)) {
    if (is_stopword(w)) continue;
    out.insert(stem(w));
  }
  return out;
}

std::optional<std::size_t> find_phrase(std::string_view haystack, std::string_view needle,
                                       std::size_t from) {
  const std::string h = casefold(haystack);
  const std::string n = casefold(trim(needle));
  if (n.empty()) return std::nullopt;
  std::size_t pos = h.find(n, from);
  while (pos != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word_char(h[pos - 1]) || !is_word_char(n.front());
    const std::size_t end = pos + n.size();
    const bool right_ok = end >= h.size() || !is_word_char(h[end]) || !is_word_char(n.back());
    if (left_ok && right_ok) return pos;
    pos = h.find(n, pos + 1);
  }
  return std::nullopt;
}

bool contains_phrase(std::string_view haystack, std::string_view needle) {
  return find_phrase(haystack, needle).has_value();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      const bool at_end = i + 1 >= s.size();
      const bool next_space = !at_end && std::isspace(static_cast<unsigned char>(s[i + 1])) != 0;
      if (at_end || next_space) {
        auto t = trim(cur);
        if (!t.empty()) out.push_back(std::move(t));
        cur.clear();
      }
    }
  }
  auto t = trim(cur);
  if (!t.empty()) out.push_back(std::move(t));
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i != 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::int64_t estimate_tokens(std::string_view s) {
  return static_cast<std::int64_t>((s.size() + 3) / 4);
}

}  // namespace followup::text
