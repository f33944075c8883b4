#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linkage/types.hpp"

namespace linkage::eval {

// Attack error rates. tpr and fmr are undefined (absent) without matchable
// queries; fpir is undefined without non-matchable ones.
struct EvalRates {
    std::optional<double> tpr;    // correct guesses / matchable
    std::optional<double> fmr;    // wrong guesses on matchable / matchable
    std::optional<double> fpir;   // guesses on non-matchable / non-matchable
    std::size_t m_matchable = 0;
    std::size_t n_nonmatchable = 0;
};

// Counts rates over one decision per query. Throws ValidationError if a
// query appears twice.
EvalRates compute_rates(const std::vector<MatchDecision>& decisions, const TruthMap& truth);

// Plug-in precision at match prior pi:
//   pi*TPR / (pi*TPR + pi*FMR + (1-pi)*FPIR)
// Absent rates enter as 0; nullopt when the denominator vanishes.
std::optional<double> precision_of_pi(const EvalRates& rates, double pi);

struct PRPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// Sweeps the acceptance cutoff over every distinct guess confidence of an
// ordering (descending confidence, as produced by confidence_order) and
// reports precision over accepted guesses and recall over matchable
// queries.
std::vector<PRPoint> pr_curve(const std::vector<MatchDecision>& ordered, const TruthMap& truth);

// Highest recall among curve points with precision >= target; 0 when no
// point qualifies.
double recall_at_precision(const std::vector<PRPoint>& curve, double target);

// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_ci(std::int64_t successes, std::int64_t n, double z = 1.96);

// Log-linear recall model: recall% = a * log10(N) + b.
struct ScalingFit {
    double slope = 0.0;       // recall percent per decade of pool size
    double intercept = 0.0;   // percent
};

// Ordinary least squares over (pool size, recall%) points; at least two
// distinct sizes required.
ScalingFit loglinear_fit(const std::vector<std::pair<double, double>>& points);

// Model value at pool size n, clamped to [0, 100].
double extrapolate(const ScalingFit& fit, double n);

// A matching method run against per-query candidate pools. Decisions must
// carry a confidence on every guess.
using PoolMatcher = std::function<std::vector<MatchDecision>(
    const TruthMap& truth, const std::map<std::string, std::vector<std::string>>& pools)>;

struct ScalingRow {
    std::size_t size = 0;
    std::size_t draw = 0;
    std::map<double, double> recall_at;   // precision target -> recall
};

// Pool-size robustness study: for each draw, every matchable query gets a
// seeded random candidate pool of each size, nested (smaller pools are
// prefixes of larger ones) and always containing the true candidate. The
// method is re-run per (size, draw). Precision targets are 0.90 / 0.98 /
// 0.99.
std::vector<ScalingRow> pool_scaling_study(const Dataset& d, const PoolMatcher& method,
                                           const std::vector<std::size_t>& sizes,
                                           std::size_t draws, std::uint64_t seed);

} // namespace linkage::eval
