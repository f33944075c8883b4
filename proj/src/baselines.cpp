#include "linkage/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "linkage/errors.hpp"

namespace linkage::baselines {

AttributeVocabulary AttributeVocabulary::from_summaries(
    const std::vector<FeatureSummary>& all) {
    AttributeVocabulary vocab;
    for (const auto& s : all)
        for (const auto& f : s.attributes) ++vocab.counts[f];
    return vocab;
}

SubredditUniverse SubredditUniverse::from_candidates(const std::vector<Profile>& candidates) {
    SubredditUniverse u;
    for (const auto& p : candidates) {
        std::set<std::string> seen;
        for (const auto& d : p.documents) seen.insert(d.community);
        for (const auto& c : seen) ++u.user_counts[c];
    }
    return u;
}

double rarity_weight(std::int64_t count) {
    if (count < 1) throw DomainError("rarity_weight: count must be >= 1");
    return 1.0 / std::log(1.0 + static_cast<double>(count));
}

double weighted_jaccard(const std::set<std::string>& fa, const std::set<std::string>& fb,
                        const AttributeVocabulary& vocab) {
    auto weight = [&](const std::string& f) {
        auto it = vocab.counts.find(f);
        if (it == vocab.counts.end())
            throw ValidationError("feature not in vocabulary: " + f);
        return rarity_weight(it->second);
    };
    double inter = 0.0, uni = 0.0;
    for (const auto& f : fa) {
        const double w = weight(f);
        uni += w;
        if (fb.count(f)) inter += w;
    }
    for (const auto& f : fb) {
        if (!fa.count(f)) uni += weight(f);
    }
    if (uni == 0.0) return 0.0;
    return inter / uni;
}

double movie_similarity(const std::vector<Review>& ma, const std::vector<Review>& mb,
                        const KernelParams& params,
                        const std::map<std::string, std::int64_t>& title_counts) {
    if (params.sigma_r <= 0.0 || params.sigma_t <= 0.0)
        throw DomainError("kernel scales must be positive");

    auto weight = [&](const std::string& title) {
        auto it = title_counts.find(title);
        if (it == title_counts.end())
            throw ValidationError("title not in counts: " + title);
        return rarity_weight(it->second);
    };
    std::map<std::string, const Review*> b_by_title;
    for (const auto& r : mb) b_by_title.emplace(r.title, &r);

    double num = 0.0, den = 0.0;
    for (const auto& ra : ma) {
        const double w = weight(ra.title);
        den += w;
        auto it = b_by_title.find(ra.title);
        if (it == b_by_title.end()) continue;
        const Review& rb = *it->second;
        const double kr = std::exp(-std::abs(ra.rating - rb.rating) / params.sigma_r);
        const double dt_days = std::abs(static_cast<double>(ra.ts - rb.ts)) / 86400.0;
        const double kt = std::exp(-dt_days / params.sigma_t);
        const double s = std::pow(kr, params.beta) * std::pow(kt, 1.0 - params.beta);
        num += w * s;
    }
    std::set<std::string> a_titles;
    for (const auto& r : ma) a_titles.insert(r.title);
    for (const auto& rb : mb)
        if (!a_titles.count(rb.title)) den += weight(rb.title);

    if (den == 0.0) return 0.0;
    return num / den;
}

double subreddit_score(const std::set<std::string>& sq, const std::set<std::string>& sc,
                       const SubredditUniverse& universe) {
    double score = 0.0;
    for (const auto& s : sq) {
        if (!sc.count(s)) continue;
        auto it = universe.user_counts.find(s);
        const std::int64_t users = it == universe.user_counts.end() ? 1 : it->second;
        score += 1.0 / std::log(static_cast<double>(std::max<std::int64_t>(users, 2)));
    }
    return score;
}

std::vector<std::pair<std::string, double>> rank_candidates(
    const std::vector<std::string>& pool, const Scorer& scorer) {
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(pool.size());
    for (const auto& id : pool) ranked.emplace_back(id, scorer(id));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return ranked;
}

double top2_gap(const std::vector<std::pair<std::string, double>>& ranked) {
    if (ranked.empty()) throw DomainError("top2_gap: empty ranking");
    if (ranked.size() == 1) return ranked[0].second;
    return ranked[0].second - ranked[1].second;
}

} // namespace linkage::baselines
