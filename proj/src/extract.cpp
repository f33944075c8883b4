#include "linkage/extract.hpp"

#include <algorithm>
#include <set>

#include "linkage/text.hpp"

namespace linkage::extract {

std::vector<Document> prefilter_comments(const std::vector<Document>& docs) {
    std::vector<Document> kept;
    for (const auto& d : docs) {
        const std::string t = text::trim(d.text);
        if (t == "[deleted]" || t == "[removed]") continue;
        if (t.size() <= 3) continue;
        if (text::is_url_only(t)) continue;
        kept.push_back(d);
    }
    return kept;
}

std::vector<std::string> parse_trait_list(const std::string& raw) {
    std::vector<std::string> traits;
    std::set<std::string> seen;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        const std::size_t comma = raw.find(',', pos);
        const std::size_t end = comma == std::string::npos ? raw.size() : comma;
        std::string item = text::trim(std::string_view(raw).substr(pos, end - pos));
        if (!item.empty()) {
            std::string tag;
            bool in_gap = false;
            for (unsigned char c : item) {
                if (std::isspace(c)) {
                    in_gap = true;
                    continue;
                }
                if (in_gap && !tag.empty()) tag.push_back('_');
                in_gap = false;
                tag.push_back(static_cast<char>(std::tolower(c)));
            }
            if (!tag.empty() && seen.insert(tag).second) traits.push_back(std::move(tag));
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return traits;
}

namespace {

FeatureSummary lexicon_scan(const Profile& p, const std::map<std::string, std::string>& lexicon,
                            SummaryKind kind) {
    FeatureSummary s;
    s.profile_id = p.profile_id;
    s.kind = kind;
    for (const auto& [tag, keyword] : lexicon) {
        bool hit = false;
        for (const auto& d : p.documents) {
            if (text::contains_phrase(d.text, keyword)) {
                hit = true;
                break;
            }
        }
        if (hit) {
            if (kind == SummaryKind::traits) s.traits.push_back(tag);
            else s.attributes.push_back(tag);
        }
    }
    return s;
}

} // namespace

FeatureSummary extract_traits_deterministic(const Profile& p,
                                            const std::map<std::string, std::string>& lexicon) {
    return lexicon_scan(p, lexicon, SummaryKind::traits);
}

FeatureSummary extract_attributes_deterministic(
    const Profile& p, const std::map<std::string, std::string>& lexicon) {
    return lexicon_scan(p, lexicon, SummaryKind::attributes);
}

namespace {

// Small fixed sentiment lexicon for offline rating estimation. Strong terms
// count double.
const std::set<std::string>& positive_words() {
    static const std::set<std::string> w = {"good",  "great", "loved", "love",  "enjoyed",
                                            "enjoy", "fun",   "solid", "liked", "like",
                                            "beautiful", "clever", "worth"};
    return w;
}
const std::set<std::string>& strong_positive_words() {
    static const std::set<std::string> w = {"masterpiece", "amazing",   "brilliant",
                                            "incredible",  "perfect",   "stunning",
                                            "flawless",    "unforgettable"};
    return w;
}
const std::set<std::string>& negative_words() {
    static const std::set<std::string> w = {"bad",    "boring", "dull",   "weak", "messy",
                                            "bland",  "flat",   "forgettable", "disliked",
                                            "disappointing"};
    return w;
}
const std::set<std::string>& strong_negative_words() {
    static const std::set<std::string> w = {"awful",  "terrible", "hated", "horrible",
                                            "unwatchable", "disaster", "worst"};
    return w;
}

} // namespace

int sentiment_score(const std::string& textual) {
    int score = 0;
    for (const auto& tok : text::tokenize(textual)) {
        if (strong_positive_words().count(tok)) score += 2;
        else if (positive_words().count(tok)) score += 1;
        else if (strong_negative_words().count(tok)) score -= 2;
        else if (negative_words().count(tok)) score -= 1;
    }
    return score;
}

double sentiment_rating(int score) {
    if (score >= 2) return 9.0;
    if (score == 1) return 7.0;
    if (score == 0) return 5.0;
    if (score == -1) return 3.0;
    return 1.0;
}

FeatureSummary extract_reviews(const Profile& p, const std::vector<std::string>& catalog) {
    FeatureSummary s;
    s.profile_id = p.profile_id;
    s.kind = SummaryKind::reviews;
    std::set<std::string> emitted;
    for (const auto& title : catalog) {
        const std::string key = text::normalize_title(title);
        if (key.empty() || emitted.count(key)) continue;
        bool found = false;
        std::int64_t earliest = 0;
        int score = 0;
        for (const auto& d : p.documents) {
            if (!text::fuzzy_contains_title(d.text, title, 0.85)) continue;
            earliest = found ? std::min(earliest, d.ts) : d.ts;
            found = true;
            score += sentiment_score(d.text);
        }
        if (!found) continue;
        emitted.insert(key);
        s.reviews.push_back({key, sentiment_rating(score), earliest});
    }
    std::sort(s.reviews.begin(), s.reviews.end(),
              [](const Review& a, const Review& b) { return a.title < b.title; });
    return s;
}

ExtractOutcome extract_remote(const Profile& p, ExtractorBackend& backend,
                              const std::string& template_id) {
    std::vector<std::string> docs;
    for (const auto& d : prefilter_comments(p.documents)) docs.push_back(d.text);
    SummarizeResult result = backend.summarize(template_id, docs);
    if (std::holds_alternative<Refusal>(result)) return std::get<Refusal>(result);

    FeatureSummary s;
    s.profile_id = p.profile_id;
    s.kind = SummaryKind::traits;
    s.traits = parse_trait_list(std::get<std::string>(result));
    return s;
}

} // namespace linkage::extract
