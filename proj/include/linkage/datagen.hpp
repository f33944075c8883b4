#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "linkage/types.hpp"

namespace linkage::datagen {

// Per-author activity statistics used by the inclusion filters.
struct AuthorStats {
    std::int64_t total_comments = 0;
    std::int64_t first_ts = 0;
    std::int64_t last_ts = 0;

    std::int64_t span_days() const { return (last_ts - first_ts) / 86400; }
    double mean_rate() const {
        return static_cast<double>(total_comments) /
               static_cast<double>(std::max<std::int64_t>(span_days(), 1));
    }

    static AuthorStats from_profile(const Profile& p);
};

// Inclusion filter: long-lived, reasonably active accounts that are not
// obviously automated. `excluded` is an optional extra name blocklist; none
// ships with the framework.
bool author_passes_filters(const AuthorStats& s, const std::string& name,
                           const std::set<std::string>& excluded = {});

struct SplitSpec {
    std::int64_t gap_days = 365;   // width g of the discarded window around t*
    std::size_t min_side = 100;    // minimum documents on each half
};

struct SplitResult {
    Profile query_half;
    Profile candidate_half;
    double split_ts = 0;           // chosen t*, seconds
};

// Splits one profile into a before/after pair separated by a gap of
// `gap_days`. The split time t* maximizes the size of the smaller half,
// evaluated at midpoints between consecutive document timestamps; earliest
// t* wins ties. Documents inside [t* - g/2, t* + g/2] are discarded.
// nullopt when no split leaves both halves at min_side.
std::optional<SplitResult> temporal_split(const Profile& p, const SplitSpec& spec);

// Splits one profile by community membership: documents in `main`
// communities become the query half, documents in `alt` communities the
// candidate half. Rejected (nullopt) unless the two halves mention at least
// `min_overlap` shared titles from `catalog`.
std::optional<SplitResult> community_split(const Profile& p,
                                           const std::set<std::string>& main,
                                           const std::set<std::string>& alt,
                                           std::size_t min_overlap,
                                           const std::vector<std::string>& catalog);

// Number of titles in `a` matched one-to-one to distinct titles in `b` at
// normalized similarity >= threshold, assigned greedily by descending
// similarity.
std::size_t title_overlap(const std::vector<std::string>& a,
                          const std::vector<std::string>& b,
                          double threshold = 0.85);

inline constexpr double kTitleMatchThreshold = 0.85;

// Knobs for the synthetic population generator.
struct SynthConfig {
    std::uint64_t seed = 0;
    std::size_t n_matchable = 100;
    std::size_t n_candidate_distractors = 0;
    std::size_t n_query_distractors = 0;
    std::size_t trait_pool_size = 200;
    std::size_t traits_per_user = 8;
    double trait_persistence = 0.7;   // chance a base trait survives into the candidate half
    std::size_t noise_traits_per_half = 2;
};

// Trait vocabulary entry: the tag a perfect extractor would emit and the
// phrase the generated sentences embed.
struct TraitEntry {
    std::string tag;     // e.g. "restores_vintage_cameras"
    std::string phrase;  // e.g. "restores vintage cameras"
};

// Deterministic trait vocabulary of `size` entries.
std::vector<TraitEntry> synth_trait_vocabulary(std::size_t size);

// tag -> phrase lexicon for the full vocabulary of cfg, for trait
// extraction.
std::map<std::string, std::string> synth_trait_lexicon(const SynthConfig& cfg);

// Coarse attribute lexicon: one feature per activity noun, so distinct
// traits sharing a noun collapse to the same feature id. Models a fixed
// closed attribute schema.
std::map<std::string, std::string> synth_attribute_lexicon(const SynthConfig& cfg);

// The generator's planted ground truth, exposed for tests and diagnostics.
struct PlantedUser {
    std::string query_id;
    std::string candidate_id;        // empty for query-only distractors
    bool matchable = false;
    std::vector<std::string> base_traits;
    std::vector<std::string> query_traits;      // base + noise, query half
    std::vector<std::string> candidate_traits;  // persisted base + noise
};

struct SynthPlan {
    SynthConfig cfg;
    std::vector<PlantedUser> users;
};

SynthPlan synth_plan(const SynthConfig& cfg);

// Deterministic synthetic dataset: matchable split-profile pairs plus
// candidate-only and query-only distractors. Byte-reproducible in cfg.
Dataset synth_generate(const SynthConfig& cfg);

// Appends cfg.n_candidate_distractors / cfg.n_query_distractors profiles
// drawn in order from `supply` (a disjoint population) without touching
// truth. Throws ValidationError when supply is too small or ids collide.
Dataset inject_distractors(const Dataset& d, const SynthConfig& cfg,
                           std::span<const Profile> supply);

} // namespace linkage::datagen
