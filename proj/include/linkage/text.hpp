#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace linkage::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Splits on runs of non-alphanumeric bytes; tokens are lowercased.
std::vector<std::string> tokenize(std::string_view s);

// True when the trimmed text consists solely of one or more URLs.
bool is_url_only(std::string_view s);

// Title normalization for fuzzy matching: lowercase, strip punctuation,
// collapse whitespace, and map roman-numeral / spelled-out number tokens to
// digits so "Part Two", "Part II" and "Part 2" normalize identically.
std::string normalize_title(std::string_view title);

std::size_t edit_distance(std::string_view a, std::string_view b);

// 1 - edit_distance / max(len), on the raw strings given. 1.0 for two empty
// strings.
double normalized_similarity(std::string_view a, std::string_view b);

// Similarity of the two titles after normalize_title.
double title_similarity(std::string_view a, std::string_view b);

// Case-insensitive search for `phrase` as a whole-word token sequence in
// `text`. "brew mead" matches "I brew mead at home" but not "homebrew meads".
bool contains_phrase(std::string_view text, std::string_view phrase);

// True when some window of consecutive tokens in `text` matches `title` with
// title_similarity >= threshold. Window lengths of len(title tokens) +/- 1
// are tried.
bool fuzzy_contains_title(std::string_view text, std::string_view title, double threshold);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace linkage::text
