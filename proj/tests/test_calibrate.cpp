#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "linkage/calibrate.hpp"
#include "linkage/errors.hpp"
#include "linkage/evals.hpp"
#include "linkage/reason.hpp"
#include "linkage/rng.hpp"

using namespace linkage;
using namespace linkage::calibrate;

namespace {

RatedPair pair_of(const std::string& qid, double rating,
                  std::vector<std::size_t> opponents = {}) {
    return {qid, "cand_" + qid, rating, std::move(opponents)};
}

MatchDecision guess(const std::string& qid, const std::string& cid, double conf) {
    MatchDecision d;
    d.query_id = qid;
    d.guess = cid;
    d.confidence = conf;
    d.stage = "reason";
    d.scores[score::judge_confidence] = conf;
    return d;
}

MatchDecision abstain(const std::string& qid) {
    MatchDecision d;
    d.query_id = qid;
    d.stage = "reason";
    return d;
}

} // namespace

TEST_CASE("swiss pairing pairs adjacent ratings") {
    const std::vector<RatedPair> pairs = {pair_of("p0", 3.0), pair_of("p1", 2.0),
                                          pair_of("p2", 1.0), pair_of("p3", 0.0)};
    const Pairing out = swiss_pairing(pairs);
    REQUIRE(out.matchups.size() == 2);
    CHECK(out.matchups[0].a == 0);
    CHECK(out.matchups[0].b == 1);
    CHECK(out.matchups[1].a == 2);
    CHECK(out.matchups[1].b == 3);
    CHECK_FALSE(out.bye.has_value());
}

TEST_CASE("odd pair counts leave the lowest-rated entry with a bye") {
    const std::vector<RatedPair> pairs = {pair_of("p0", 3.0), pair_of("p1", 2.0),
                                          pair_of("p2", 1.0)};
    const Pairing out = swiss_pairing(pairs);
    REQUIRE(out.matchups.size() == 1);
    REQUIRE(out.bye.has_value());
    CHECK(*out.bye == 2);

    CHECK_THROWS_AS(swiss_pairing({pair_of("p0", 1.0)}), DomainError);
}

TEST_CASE("round two avoids every round-one rematch on four equal-rated pairs") {
    // Exhaustive over the three perfect matchings of four items.
    const std::vector<std::pair<Matchup, Matchup>> round_ones = {
        {{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}, {{0, 3}, {1, 2}}};
    for (const auto& [m1, m2] : round_ones) {
        std::vector<RatedPair> pairs = {pair_of("p0", 0.0), pair_of("p1", 0.0),
                                        pair_of("p2", 0.0), pair_of("p3", 0.0)};
        pairs[m1.a].opponents.push_back(m1.b);
        pairs[m1.b].opponents.push_back(m1.a);
        pairs[m2.a].opponents.push_back(m2.b);
        pairs[m2.b].opponents.push_back(m2.a);

        const Pairing round2 = swiss_pairing(pairs);
        REQUIRE(round2.matchups.size() == 2);
        for (const auto& m : round2.matchups) {
            const auto& opp = pairs[m.a].opponents;
            CHECK(std::find(opp.begin(), opp.end(), m.b) == opp.end());
            CHECK(m.a != m.b);
        }
    }
}

TEST_CASE("bt_fit ranks a 3-0 winner above the loser and balances a split") {
    const std::vector<Outcome> sweep = {{0, 1}, {0, 1}, {0, 1}};
    const auto ratings = bt_fit(2, sweep);
    CHECK(ratings[0] > ratings[1]);
    CHECK(ratings[0] + ratings[1] == doctest::Approx(0.0).epsilon(1e-9));

    const auto split = bt_fit(2, {{0, 1}, {1, 0}});
    CHECK(split[0] == doctest::Approx(split[1]).epsilon(1e-8));
}

TEST_CASE("bt_fit anchors never-compared items at zero") {
    const auto ratings = bt_fit(4, {{0, 1}, {0, 1}});
    CHECK(ratings[2] == 0.0);
    CHECK(ratings[3] == 0.0);
    CHECK(ratings[0] > 0.0);

    CHECK_THROWS_AS(bt_fit(2, {{0, 0}}), DomainError);
    CHECK_THROWS_AS(bt_fit(2, {}), DomainError);
}

TEST_CASE("bt_fit recovers a planted strength ordering from noisy games") {
    const std::vector<double> strengths = {2.0, 1.0, 0.0, -1.0, -2.0};
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Outcome> outcomes;
    for (int g = 0; g < 200; ++g) {
        const std::size_t i = rng() % 5;
        std::size_t j = rng() % 4;
        if (j >= i) ++j;
        const double p_i = 1.0 / (1.0 + std::exp(-(strengths[i] - strengths[j])));
        outcomes.push_back(unit(rng) < p_i ? Outcome{i, j} : Outcome{j, i});
    }
    const auto ratings = bt_fit(5, outcomes);
    for (std::size_t i = 0; i + 1 < 5; ++i) CHECK(ratings[i] > ratings[i + 1]);
}

TEST_CASE("bt_fit is invariant to relabeling and to uniform strength shifts") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto simulate = [&](const std::vector<double>& s, std::uint64_t seed) {
        std::mt19937_64 local(seed);
        std::vector<Outcome> outs;
        for (int g = 0; g < 150; ++g) {
            const std::size_t i = local() % s.size();
            std::size_t j = local() % (s.size() - 1);
            if (j >= i) ++j;
            const double p = 1.0 / (1.0 + std::exp(-(s[i] - s[j])));
            outs.push_back(std::uniform_real_distribution<double>(0, 1)(local) < p
                               ? Outcome{i, j}
                               : Outcome{j, i});
        }
        return outs;
    };
    const std::vector<double> base = {1.5, 0.5, -0.5, -1.5};
    const auto outs = simulate(base, 9);

    // Relabel items 0<->3.
    std::vector<Outcome> relabeled;
    auto map = [](std::size_t x) { return x == 0 ? std::size_t{3} : x == 3 ? std::size_t{0} : x; };
    for (const auto& o : outs) relabeled.push_back({map(o.winner), map(o.loser)});

    const auto r1 = bt_fit(4, outs);
    const auto r2 = bt_fit(4, relabeled);
    CHECK(r1[0] == doctest::Approx(r2[3]).epsilon(1e-7));
    CHECK(r1[3] == doctest::Approx(r2[0]).epsilon(1e-7));
    CHECK(r1[1] == doctest::Approx(r2[1]).epsilon(1e-7));

    // A uniform shift of planted strengths leaves simulated fits ordered the
    // same way.
    std::vector<double> shifted = base;
    for (auto& s : shifted) s += 3.0;
    const auto r3 = bt_fit(4, simulate(shifted, 9));
    for (std::size_t i = 0; i + 1 < 4; ++i) CHECK((r3[i] > r3[i + 1]) == (r1[i] > r1[i + 1]));
    CHECK(unit(rng) >= 0.0);   // keep rng referenced
}

namespace {

struct PerfectComparator final : reason::JudgeBackend {
    TruthMap truth;
    std::uint64_t seed = 0;
    explicit PerfectComparator(TruthMap t, std::uint64_t s = 0) : truth(std::move(t)), seed(s) {}
    reason::SelectResponse select(const reason::SelectRequest&) override { return {}; }
    reason::VerifyResponse verify(const reason::VerifyRequest&) override { return {}; }
    reason::CompareWinner compare(const reason::ComparePair& a,
                                  const reason::ComparePair& b) override {
        const bool ca = truth.count(a.query_id) && truth.at(a.query_id) == a.candidate_id;
        const bool cb = truth.count(b.query_id) && truth.at(b.query_id) == b.candidate_id;
        if (ca != cb) return ca ? reason::CompareWinner::A : reason::CompareWinner::B;
        const auto h = splitmix64(seed ^ fnv1a64(a.query_id + "|" + b.query_id));
        return (h & 1) ? reason::CompareWinner::A : reason::CompareWinner::B;
    }
};

struct CoinComparator final : reason::JudgeBackend {
    std::uint64_t seed;
    explicit CoinComparator(std::uint64_t s) : seed(s) {}
    reason::SelectResponse select(const reason::SelectRequest&) override { return {}; }
    reason::VerifyResponse verify(const reason::VerifyRequest&) override { return {}; }
    reason::CompareWinner compare(const reason::ComparePair& a,
                                  const reason::ComparePair& b) override {
        const auto h = splitmix64(seed ^ fnv1a64(a.query_id + "#" + b.query_id));
        return (h & 1) ? reason::CompareWinner::A : reason::CompareWinner::B;
    }
};

struct FlakyComparator final : reason::JudgeBackend {
    int fail_every;
    int calls = 0;
    explicit FlakyComparator(int n) : fail_every(n) {}
    reason::SelectResponse select(const reason::SelectRequest&) override { return {}; }
    reason::VerifyResponse verify(const reason::VerifyRequest&) override { return {}; }
    reason::CompareWinner compare(const reason::ComparePair&, const reason::ComparePair&) override {
        if (++calls % fail_every == 0) throw TransportError("comparator flaked");
        return reason::CompareWinner::A;
    }
};

// Mixed correct/incorrect decision set with planted truth.
struct Instance {
    std::vector<MatchDecision> decisions;
    TruthMap truth;
    std::set<std::string> correct_queries;
};

Instance make_instance(std::size_t n, std::size_t n_correct, std::uint64_t seed) {
    Instance inst;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string qid = "q" + std::to_string(i);
        inst.truth[qid] = "true_" + std::to_string(i);
        const bool correct = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(
                                                        n_correct), i) !=
                             idx.begin() + static_cast<std::ptrdiff_t>(n_correct);
        const std::string cid = correct ? inst.truth[qid] : ("wrong_" + std::to_string(i));
        if (correct) inst.correct_queries.insert(qid);
        inst.decisions.push_back(guess(qid, cid, std::uniform_real_distribution<double>(0, 1)(rng)));
    }
    return inst;
}

} // namespace

TEST_CASE("a perfect comparator separates correct from incorrect pairs like exhaustive sorting") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Instance inst = make_instance(50, 25, seed);
        PerfectComparator comparator(inst.truth, seed);
        TournamentConfig cfg;
        cfg.rounds = 15;
        const TournamentResult result = tournament_sort(inst.decisions, comparator, cfg);

        // Exhaustive oracle: all-pairs round robin, sort by wins. Correct
        // pairs beat all 25 incorrect ones, so every correct pair outranks
        // every incorrect pair; the tournament must reproduce that split.
        bool seen_incorrect = false;
        for (const auto& d : result.decisions) {
            if (!d.is_guess()) continue;
            const bool correct = inst.correct_queries.count(d.query_id) > 0;
            if (!correct) seen_incorrect = true;
            if (seen_incorrect) CHECK_FALSE(correct);
        }

        // Comparison budget per round is at most floor(n/2).
        std::map<int, int> per_round;
        for (const auto& t : result.transcript) ++per_round[t.round];
        for (const auto& [round, count] : per_round) CHECK(count <= 25);
    }
}

TEST_CASE("two decisions produce one comparison per round") {
    Instance inst = make_instance(2, 1, 7);
    PerfectComparator comparator(inst.truth, 7);
    TournamentConfig cfg;
    cfg.rounds = 4;
    const TournamentResult result = tournament_sort(inst.decisions, comparator, cfg);
    CHECK(result.transcript.size() == 4);
    const std::string& top = result.decisions.front().query_id;
    CHECK(inst.correct_queries.count(top) == 1);
}

TEST_CASE("a coin-flip comparator does not beat the pre-tournament ordering") {
    double total_delta = 0.0;
    double total_sq = 0.0;
    const int n_seeds = 20;
    for (int s = 0; s < n_seeds; ++s) {
        Instance inst = make_instance(40, 20, 1000 + static_cast<std::uint64_t>(s));
        CoinComparator comparator(2000 + static_cast<std::uint64_t>(s));
        TournamentConfig cfg;
        cfg.rounds = 15;
        const TournamentResult result = tournament_sort(inst.decisions, comparator, cfg);

        auto recall90 = [&](const std::vector<MatchDecision>& ds) {
            auto ordered = ds;
            std::stable_sort(ordered.begin(), ordered.end(),
                             [](const MatchDecision& a, const MatchDecision& b) {
                                 return a.confidence.value_or(-1e300) >
                                        b.confidence.value_or(-1e300);
                             });
            const auto curve = eval::pr_curve(ordered, inst.truth);
            return eval::recall_at_precision(curve, 0.90);
        };
        const double sorted = recall90(result.decisions);
        const double unsorted = recall90(inst.decisions);
        total_delta += sorted - unsorted;
        total_sq += (sorted - unsorted) * (sorted - unsorted);
    }
    const double mean = total_delta / n_seeds;
    const double var = total_sq / n_seeds - mean * mean;
    const double se = std::sqrt(std::max(var, 1e-12) / n_seeds);
    // One-sided: sorted must not significantly exceed unsorted.
    CHECK(mean <= 2.0 * se + 1e-9);
}

TEST_CASE("comparator failures skip the matchup and the tournament continues") {
    Instance inst = make_instance(10, 5, 3);
    FlakyComparator comparator(4);
    TournamentConfig cfg;
    cfg.rounds = 3;
    const TournamentResult result = tournament_sort(inst.decisions, comparator, cfg);
    CHECK(result.skipped_comparisons > 0);
    std::size_t guesses = 0;
    for (const auto& d : result.decisions)
        if (d.is_guess()) ++guesses;
    CHECK(guesses == 10);
    for (const auto& t : result.transcript)
        if (t.winner == 'S') CHECK(true);
}

TEST_CASE("tournament output keeps abstentions last and restamps stages") {
    Instance inst = make_instance(6, 3, 9);
    inst.decisions.push_back(abstain("zz_empty"));
    PerfectComparator comparator(inst.truth, 9);
    TournamentConfig cfg;
    cfg.rounds = 5;
    const TournamentResult result = tournament_sort(inst.decisions, comparator, cfg);
    REQUIRE(result.decisions.size() == 7);
    CHECK_FALSE(result.decisions.back().is_guess());
    for (const auto& d : result.decisions) {
        if (d.is_guess()) {
            CHECK(d.stage == "calibrate");
            CHECK(d.scores.count(score::rating) == 1);
            CHECK(*d.confidence == doctest::Approx(d.scores.at(score::rating)));
        }
    }
    for (std::size_t i = 1; i < result.decisions.size(); ++i) {
        if (result.decisions[i].is_guess())
            CHECK(*result.decisions[i - 1].confidence >= *result.decisions[i].confidence);
    }
}

TEST_CASE("confidence ordering fixtures") {
    std::vector<MatchDecision> ds = {guess("q2", "c2", 0.85), guess("q1", "c1", 0.94),
                                     abstain("q3")};
    const auto ordered = confidence_order(ds, score::judge_confidence);
    REQUIRE(ordered.size() == 3);
    CHECK(ordered[0].query_id == "q1");
    CHECK(ordered[1].query_id == "q2");
    CHECK_FALSE(ordered[2].is_guess());

    // Equal scores fall back to query_id order.
    std::vector<MatchDecision> tie = {guess("qb", "c", 0.5), guess("qa", "c", 0.5)};
    const auto tied = confidence_order(tie, score::judge_confidence);
    CHECK(tied[0].query_id == "qa");

    // Missing score names the query.
    std::vector<MatchDecision> missing = {guess("qq", "c", 0.5)};
    missing[0].scores.clear();
    try {
        confidence_order(missing, score::rating);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("qq") != std::string::npos);
    }
}

TEST_CASE("ordering by rating after a tournament reproduces the tournament order") {
    Instance inst = make_instance(12, 6, 21);
    PerfectComparator comparator(inst.truth, 21);
    TournamentConfig cfg;
    cfg.rounds = 8;
    const TournamentResult result = tournament_sort(inst.decisions, comparator, cfg);
    const auto reordered = confidence_order(result.decisions, score::rating);
    REQUIRE(reordered.size() == result.decisions.size());
    for (std::size_t i = 0; i < reordered.size(); ++i)
        CHECK(reordered[i].query_id == result.decisions[i].query_id);
}

TEST_CASE("confidence ordering is a permutation") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<MatchDecision> ds;
        const std::size_t n = 1 + rng() % 12;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng() % 4 == 0) ds.push_back(abstain("q" + std::to_string(i)));
            else
                ds.push_back(guess("q" + std::to_string(i), "c",
                                   static_cast<double>(rng() % 5) / 4.0));
        }
        const auto ordered = confidence_order(ds, score::judge_confidence);
        REQUIRE(ordered.size() == ds.size());
        std::set<std::string> in, out;
        for (const auto& d : ds) in.insert(d.query_id);
        for (const auto& d : ordered) out.insert(d.query_id);
        CHECK(in == out);
        bool seen_abstention = false;
        for (const auto& d : ordered) {
            if (!d.is_guess()) seen_abstention = true;
            else CHECK_FALSE(seen_abstention);
        }
    }
}
