#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linkage/reason.hpp"
#include "linkage/types.hpp"

namespace linkage::calibrate {

// One proposed query-candidate match inside the tournament.
struct RatedPair {
    std::string query_id;
    std::string candidate_id;
    double rating = 0.0;                  // Bradley-Terry log-strength
    std::vector<std::size_t> opponents;   // indices of pairs already played
};

struct Matchup {
    std::size_t a = 0;
    std::size_t b = 0;
};

struct Pairing {
    std::vector<Matchup> matchups;
    std::optional<std::size_t> bye;
};

// Swiss-system pairing: sort by rating descending (ties by query_id), pair
// adjacent entries; when an adjacent pairing would be a rematch, swap in the
// next unpaired entry if that avoids it. Odd entry out receives a bye.
Pairing swiss_pairing(const std::vector<RatedPair>& pairs);

struct Outcome {
    std::size_t winner = 0;
    std::size_t loser = 0;
};

// Maximum-likelihood Bradley-Terry log-strengths over accumulated outcomes,
// fitted by minorization-maximization. Every ordered pair of opponents that
// met gets a +0.5 pseudo-count, which keeps all-win components finite. Items
// that never played stay at 0; each connected component is centered to mean
// 0. Converges when the largest log-strength change drops below 1e-8, capped
// at 500 iterations.
std::vector<double> bt_fit(std::size_t n_items, const std::vector<Outcome>& outcomes);

struct TournamentConfig {
    int rounds = 15;
    std::uint64_t seed = 0;
    int jobs = 1;   // comparisons within a round run concurrently up to this bound
};

struct TranscriptEntry {
    int round = 0;
    std::string pair_a;    // query_id of side A
    std::string pair_b;
    char winner = 'A';     // 'A', 'B', or 'S' when the comparison was skipped
};

struct TournamentResult {
    std::vector<MatchDecision> decisions;       // rated guesses first, then abstentions
    std::vector<TranscriptEntry> transcript;
    std::size_t skipped_comparisons = 0;
};

// Runs `rounds` of Swiss pairing + pairwise comparisons, refitting the full
// Bradley-Terry model on all accumulated outcomes after each round. Rated
// decisions come back ordered by final rating (stage=calibrate, confidence =
// rating); abstentions pass through unchanged below all rated pairs. A
// comparator failure skips that matchup for the round.
TournamentResult tournament_sort(const std::vector<MatchDecision>& decisions,
                                 reason::JudgeBackend& comparator, const TournamentConfig& cfg,
                                 const std::map<std::string, std::string>& query_texts = {},
                                 const std::map<std::string, std::string>& candidate_texts = {});

// Reorders decisions by the named score, descending, ties by query_id;
// abstentions always land last. Throws ValidationError naming the query when
// a non-abstaining decision lacks the score.
std::vector<MatchDecision> confidence_order(const std::vector<MatchDecision>& decisions,
                                            const std::string& source);

} // namespace linkage::calibrate
