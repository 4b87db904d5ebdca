#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace followup::text {

/// ASCII case folding; non-ASCII bytes pass through unchanged.
std::string casefold(std::string_view s);

std::string trim(std::string_view s);

/// Lowercased alphanumeric word tokens, in order of appearance.
std::vector<std::string> words(std::string_view s);

bool is_stopword(std::string_view word);

/// Light suffix stripping so that "smoking"/"smoke", "pains"/"pain" meet.
std::string stem(std::string_view word);

/// Stemmed non-stopword tokens, deduplicated.
std::set<std::string> content_words(std::string_view s);

/// True if `needle` occurs in `haystack` on word boundaries, case-folded.
bool contains_phrase(std::string_view haystack, std::string_view needle);

/// Byte offset of the first word-boundary occurrence of `needle`, case-folded.
std::optional<std::size_t> find_phrase(std::string_view haystack, std::string_view needle,
                                       std::size_t from = 0);

std::uint64_t fnv1a(std::string_view s);
std::string hex64(std::uint64_t v);

/// Split into sentences on '.', '!', '?' followed by whitespace or end of input.
/// Decimal points inside numerals do not split.
std::vector<std::string> sentences(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// ceil(chars / 4), the fallback token estimate.
std::int64_t estimate_tokens(std::string_view s);

}  // namespace followup::text
