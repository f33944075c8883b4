#include "linkage/evals.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "linkage/errors.hpp"
#include "linkage/rng.hpp"

namespace linkage::eval {

EvalRates compute_rates(const std::vector<MatchDecision>& decisions, const TruthMap& truth) {
    std::set<std::string> seen;
    std::size_t m = 0, n = 0, correct = 0, wrong = 0, fp = 0;
    for (const auto& d : decisions) {
        if (!seen.insert(d.query_id).second)
            throw ValidationError("duplicate decision for query: " + d.query_id);
        auto it = truth.find(d.query_id);
        if (it != truth.end()) {
            ++m;
            if (d.is_guess()) {
                if (*d.guess == it->second) ++correct;
                else ++wrong;
            }
        } else {
            ++n;
            if (d.is_guess()) ++fp;
        }
    }
    EvalRates r;
    r.m_matchable = m;
    r.n_nonmatchable = n;
    if (m > 0) {
        r.tpr = static_cast<double>(correct) / static_cast<double>(m);
        r.fmr = static_cast<double>(wrong) / static_cast<double>(m);
    }
    if (n > 0) r.fpir = static_cast<double>(fp) / static_cast<double>(n);
    return r;
}

std::optional<double> precision_of_pi(const EvalRates& rates, double pi) {
    if (pi < 0.0 || pi > 1.0) throw DomainError("pi must lie in [0,1]");
    const double tpr = rates.tpr.value_or(0.0);
    const double fmr = rates.fmr.value_or(0.0);
    const double fpir = rates.fpir.value_or(0.0);
    const double denom = pi * tpr + pi * fmr + (1.0 - pi) * fpir;
    if (denom <= 0.0) return std::nullopt;
    return pi * tpr / denom;
}

std::vector<PRPoint> pr_curve(const std::vector<MatchDecision>& ordered, const TruthMap& truth) {
    std::set<std::string> seen;
    std::size_t m = 0;
    for (const auto& d : ordered) {
        if (!seen.insert(d.query_id).second)
            throw ValidationError("duplicate decision for query: " + d.query_id);
        if (truth.count(d.query_id)) ++m;
    }

    std::vector<const MatchDecision*> guesses;
    for (const auto& d : ordered)
        if (d.is_guess()) guesses.push_back(&d);
    for (std::size_t i = 1; i < guesses.size(); ++i)
        if (*guesses[i - 1]->confidence < *guesses[i]->confidence)
            throw ValidationError("pr_curve expects decisions ordered by descending confidence");

    std::vector<PRPoint> curve;
    std::size_t accepted = 0, correct = 0;
    std::size_t i = 0;
    while (i < guesses.size()) {
        const double threshold = *guesses[i]->confidence;
        // Accept the whole tie group at once.
        while (i < guesses.size() && *guesses[i]->confidence == threshold) {
            ++accepted;
            auto it = truth.find(guesses[i]->query_id);
            if (it != truth.end() && it->second == *guesses[i]->guess) ++correct;
            ++i;
        }
        PRPoint p;
        p.threshold = threshold;
        p.precision = static_cast<double>(correct) / static_cast<double>(accepted);
        p.recall = m ? static_cast<double>(correct) / static_cast<double>(m) : 0.0;
        curve.push_back(p);
    }
    return curve;
}

double recall_at_precision(const std::vector<PRPoint>& curve, double target) {
    double best = 0.0;
    for (const auto& p : curve)
        if (p.precision >= target) best = std::max(best, p.recall);
    return best;
}

std::pair<double, double> wilson_ci(std::int64_t successes, std::int64_t n, double z) {
    if (n < 1) throw DomainError("wilson_ci: n must be >= 1");
    if (successes < 0 || successes > n)
        throw DomainError("wilson_ci: successes outside [0, n]");
    const double nn = static_cast<double>(n);
    const double p_hat = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p_hat + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p_hat * (1.0 - p_hat) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {std::clamp(center - half, 0.0, 1.0), std::clamp(center + half, 0.0, 1.0)};
}

ScalingFit loglinear_fit(const std::vector<std::pair<double, double>>& points) {
    std::set<double> distinct;
    for (const auto& [n, _] : points) {
        if (n <= 0.0) throw DomainError("pool sizes must be positive");
        distinct.insert(n);
    }
    if (distinct.size() < 2)
        throw DomainError("loglinear_fit: need at least 2 distinct pool sizes");

    Eigen::MatrixXd design(points.size(), 2);
    Eigen::VectorXd y(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        design(static_cast<Eigen::Index>(i), 0) = std::log10(points[i].first);
        design(static_cast<Eigen::Index>(i), 1) = 1.0;
        y(static_cast<Eigen::Index>(i)) = points[i].second;
    }
    const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(y);
    return {coef(0), coef(1)};
}

double extrapolate(const ScalingFit& fit, double n) {
    if (n <= 0.0) throw DomainError("pool size must be positive");
    return std::clamp(fit.slope * std::log10(n) + fit.intercept, 0.0, 100.0);
}

std::vector<ScalingRow> pool_scaling_study(const Dataset& d, const PoolMatcher& method,
                                           const std::vector<std::size_t>& sizes,
                                           std::size_t draws, std::uint64_t seed) {
    if (sizes.empty()) throw DomainError("pool_scaling_study: no sizes");
    if (!std::is_sorted(sizes.begin(), sizes.end()))
        throw DomainError("pool_scaling_study: sizes must ascend");
    if (sizes.front() < 1) throw DomainError("pool_scaling_study: sizes must be >= 1");
    if (sizes.back() > d.candidates.size())
        throw DomainError("pool_scaling_study: size exceeds candidate pool");

    std::vector<std::string> all_ids;
    for (const auto& c : d.candidates) all_ids.push_back(c.profile_id);
    std::sort(all_ids.begin(), all_ids.end());

    const std::vector<double> targets = {0.90, 0.98, 0.99};
    std::vector<ScalingRow> rows;
    for (std::size_t draw = 0; draw < draws; ++draw) {
        // One nested permutation of distractor candidates per query per draw.
        std::map<std::string, std::vector<std::string>> perms;
        for (const auto& [qid, cid] : d.truth) {
            std::vector<std::string> others;
            others.reserve(all_ids.size() - 1);
            for (const auto& id : all_ids)
                if (id != cid) others.push_back(id);
            auto rng = make_rng(derive_seed(seed, "pool|" + qid, draw));
            std::shuffle(others.begin(), others.end(), rng);
            perms.emplace(qid, std::move(others));
        }
        for (std::size_t size : sizes) {
            std::map<std::string, std::vector<std::string>> pools;
            for (const auto& [qid, cid] : d.truth) {
                std::vector<std::string> pool;
                pool.reserve(size);
                pool.push_back(cid);
                const auto& perm = perms.at(qid);
                for (std::size_t i = 0; i + 1 < size && i < perm.size(); ++i)
                    pool.push_back(perm[i]);
                std::sort(pool.begin(), pool.end());
                pools.emplace(qid, std::move(pool));
            }
            std::vector<MatchDecision> decisions = method(d.truth, pools);
            std::sort(decisions.begin(), decisions.end(),
                      [](const MatchDecision& a, const MatchDecision& b) {
                          const double ca = a.confidence.value_or(
                              -std::numeric_limits<double>::infinity());
                          const double cb = b.confidence.value_or(
                              -std::numeric_limits<double>::infinity());
                          if (ca != cb) return ca > cb;
                          return a.query_id < b.query_id;
                      });
            const std::vector<PRPoint> curve = pr_curve(decisions, d.truth);
            ScalingRow row;
            row.size = size;
            row.draw = draw;
            for (double t : targets) row.recall_at[t] = recall_at_precision(curve, t);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace linkage::eval
