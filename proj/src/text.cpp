#include "linkage/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>

namespace linkage::text {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_alnum(unsigned char c) { return std::isalnum(c) != 0; }

const std::unordered_map<std::string, std::string>& numeral_map() {
    // Roman numerals and spelled-out numbers up to twelve; sequels rarely go
    // further and longer roman strings start colliding with real words.
    static const std::unordered_map<std::string, std::string> m = {
        {"i", "1"},     {"ii", "2"},    {"iii", "3"},  {"iv", "4"},
        {"v", "5"},     {"vi", "6"},    {"vii", "7"},  {"viii", "8"},
        {"ix", "9"},    {"x", "10"},    {"xi", "11"},  {"xii", "12"},
        {"one", "1"},   {"two", "2"},   {"three", "3"},{"four", "4"},
        {"five", "5"},  {"six", "6"},   {"seven", "7"},{"eight", "8"},
        {"nine", "9"},  {"ten", "10"},  {"eleven", "11"}, {"twelve", "12"},
    };
    return m;
}

} // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : s) {
        if (is_alnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

bool is_url_only(std::string_view s) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    std::size_t pos = 0;
    bool any = false;
    while (pos < t.size()) {
        while (pos < t.size() && is_space(static_cast<unsigned char>(t[pos]))) ++pos;
        if (pos >= t.size()) break;
        std::size_t end = pos;
        while (end < t.size() && !is_space(static_cast<unsigned char>(t[end]))) ++end;
        const std::string_view word(t.data() + pos, end - pos);
        const std::string lw = to_lower(word);
        const bool url = lw.rfind("http://", 0) == 0 || lw.rfind("https://", 0) == 0 ||
                         lw.rfind("www.", 0) == 0;
        if (!url) return false;
        any = true;
        pos = end;
    }
    return any;
}

std::string normalize_title(std::string_view title) {
    std::vector<std::string> tokens = tokenize(title);
    const auto& numerals = numeral_map();
    for (auto& tok : tokens) {
        auto it = numerals.find(tok);
        if (it != numerals.end()) tok = it->second;
    }
    return join(tokens, " ");
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double normalized_similarity(std::string_view a, std::string_view b) {
    const std::size_t m = std::max(a.size(), b.size());
    if (m == 0) return 1.0;
    return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(m);
}

double title_similarity(std::string_view a, std::string_view b) {
    return normalized_similarity(normalize_title(a), normalize_title(b));
}

bool contains_phrase(std::string_view haystack, std::string_view phrase) {
    const std::vector<std::string> want = tokenize(phrase);
    if (want.empty()) return false;
    const std::vector<std::string> have = tokenize(haystack);
    if (have.size() < want.size()) return false;
    for (std::size_t i = 0; i + want.size() <= have.size(); ++i) {
        bool ok = true;
        for (std::size_t j = 0; j < want.size(); ++j) {
            if (have[i + j] != want[j]) {
                ok = false;
                break;
            }
        }
        if (ok) return true;
    }
    return false;
}

bool fuzzy_contains_title(std::string_view doc, std::string_view title, double threshold) {
    const std::string norm_title = normalize_title(title);
    if (norm_title.empty()) return false;
    const std::size_t title_tokens =
        static_cast<std::size_t>(std::count(norm_title.begin(), norm_title.end(), ' ')) + 1;

    std::vector<std::string> tokens = tokenize(doc);
    const auto& numerals = numeral_map();
    for (auto& tok : tokens) {
        auto it = numerals.find(tok);
        if (it != numerals.end()) tok = it->second;
    }
    if (tokens.empty()) return false;

    const std::size_t lo = title_tokens > 1 ? title_tokens - 1 : 1;
    const std::size_t hi = title_tokens + 1;
    for (std::size_t len = lo; len <= hi && len <= tokens.size(); ++len) {
        for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
            std::string window = tokens[i];
            for (std::size_t j = 1; j < len; ++j) {
                window += ' ';
                window += tokens[i + j];
            }
            if (normalized_similarity(window, norm_title) >= threshold) return true;
        }
    }
    return false;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace linkage::text
