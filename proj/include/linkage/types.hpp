#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace linkage {

// One timestamped post by a pseudonymous account.
struct Document {
    std::int64_t ts = 0;        // seconds since epoch, >= 0
    std::string community;      // non-empty label, e.g. a board name
    std::string text;

    bool operator==(const Document&) const = default;
};

enum class Side { query, candidate };

const char* side_name(Side s);
Side side_from_name(const std::string& name);

// A pseudonymous account and its posts, ordered by ascending timestamp.
struct Profile {
    std::string profile_id;
    Side side = Side::query;
    std::vector<Document> documents;
    std::optional<std::string> bio;

    bool operator==(const Profile&) const = default;
};

using TruthMap = std::map<std::string, std::string>; // query_id -> candidate_id

// A matching instance: queries to be linked against a candidate pool, with
// partial ground truth. Queries absent from `truth` are non-matchable
// distractors.
struct Dataset {
    std::vector<Profile> queries;
    std::vector<Profile> candidates;
    TruthMap truth;

    // Prior fraction of matchable queries, |truth| / |queries|. 0 when there
    // are no queries.
    double match_prior() const {
        return queries.empty() ? 0.0
                               : static_cast<double>(truth.size()) /
                                     static_cast<double>(queries.size());
    }
};

// Per-query attack output: a guessed candidate or an abstention. Confidence
// is present exactly when a guess is; abstentions sort below all guesses.
// `scores` keeps every confidence signal the run produced (similarity,
// top2_gap, judge_confidence, rating) so orderings can be re-derived.
struct MatchDecision {
    std::string query_id;
    std::optional<std::string> guess;
    std::optional<double> confidence;
    std::string stage;                    // search | reason | calibrate | baseline
    std::map<std::string, double> scores;

    bool is_guess() const { return guess.has_value(); }
};

namespace score {
inline constexpr const char* similarity = "similarity";
inline constexpr const char* top2_gap = "top2_gap";
inline constexpr const char* judge_confidence = "judge_confidence";
inline constexpr const char* rating = "rating";
} // namespace score

// Extracted micro-data for one profile. Exactly one of traits / reviews /
// attributes is populated, per `kind`.
struct Review {
    std::string title;       // normalized form used as the join key
    double rating = 5.0;     // [0, 10]
    std::int64_t ts = 0;     // earliest mentioning document

    bool operator==(const Review&) const = default;
};

enum class SummaryKind { traits, reviews, attributes };

const char* summary_kind_name(SummaryKind k);
SummaryKind summary_kind_from_name(const std::string& name);

struct FeatureSummary {
    std::string profile_id;
    SummaryKind kind = SummaryKind::traits;
    std::vector<std::string> traits;       // deduped lowercase underscore tags
    std::vector<Review> reviews;
    std::vector<std::string> attributes;   // sorted vocabulary feature ids

    bool operator==(const FeatureSummary&) const = default;
    bool empty() const { return traits.empty() && reviews.empty() && attributes.empty(); }
};

// Canonical text rendering of a summary, used for embeddings and judge
// context. Deterministic in the summary contents.
std::string summary_text(const FeatureSummary& s);

} // namespace linkage
