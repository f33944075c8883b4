#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "linkage/types.hpp"

namespace linkage::baselines {

// Global occurrence counts per attribute feature; every vocabulary feature
// occurs at least once.
struct AttributeVocabulary {
    std::map<std::string, std::int64_t> counts;

    std::size_t size() const { return counts.size(); }
    static AttributeVocabulary from_summaries(const std::vector<FeatureSummary>& all);
};

// Smooth rating/temporal kernel parameters for review similarity.
struct KernelParams {
    double sigma_r = 1.0;    // rating kernel scale
    double sigma_t = 40.0;   // temporal kernel scale, days
    double beta = 0.5;       // blend exponent in [0,1]
};

// Users-per-community counts over the candidate pool.
struct SubredditUniverse {
    std::map<std::string, std::int64_t> user_counts;

    static SubredditUniverse from_candidates(const std::vector<Profile>& candidates);
};

// Rarity weight 1 / ln(1 + c). Throws DomainError for c < 1.
double rarity_weight(std::int64_t count);

// Weighted Jaccard over attribute sets: sum of weights on the intersection
// over sum on the union. 0 when the union is empty. Unknown features throw
// ValidationError naming the feature.
double weighted_jaccard(const std::set<std::string>& fa, const std::set<std::string>& fb,
                        const AttributeVocabulary& vocab);

// Review-set similarity with smooth kernels: per shared title,
// s = k_r^beta * k_t^(1-beta) with k_r = exp(-|dr|/sigma_r) and
// k_t = exp(-|dt_days|/sigma_t); terms are rarity-weighted by title counts
// and normalized over the union. Reviews are keyed by normalized title, one
// per title per user.
double movie_similarity(const std::vector<Review>& ma, const std::vector<Review>& mb,
                        const KernelParams& params,
                        const std::map<std::string, std::int64_t>& title_counts);

// Unbounded community-overlap score: sum over shared communities of
// 1 / ln(max(|U_s|, 2)). Communities missing from the universe count as
// singletons (clamped to 2).
double subreddit_score(const std::set<std::string>& sq, const std::set<std::string>& sc,
                       const SubredditUniverse& universe);

using Scorer = std::function<double(const std::string& candidate_id)>;

// Scores every candidate in `pool` and returns the full ordering by
// descending score, ties broken by ascending candidate_id.
std::vector<std::pair<std::string, double>> rank_candidates(
    const std::vector<std::string>& pool, const Scorer& scorer);

// Confidence margin between the two best candidates; a lone candidate's own
// score when the ranking has a single entry. Throws DomainError when empty.
double top2_gap(const std::vector<std::pair<std::string, double>>& ranked);

} // namespace linkage::baselines
