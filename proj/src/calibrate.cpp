#include "linkage/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "linkage/errors.hpp"
#include "linkage/parallel.hpp"

namespace linkage::calibrate {

Pairing swiss_pairing(const std::vector<RatedPair>& pairs) {
    if (pairs.size() < 2) throw DomainError("swiss_pairing: need at least 2 pairs");

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pairs[a].rating != pairs[b].rating) return pairs[a].rating > pairs[b].rating;
        return pairs[a].query_id < pairs[b].query_id;
    });

    auto played = [&](std::size_t a, std::size_t b) {
        const auto& opp = pairs[a].opponents;
        return std::find(opp.begin(), opp.end(), b) != opp.end();
    };

    Pairing out;
    std::vector<bool> used(pairs.size(), false);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (used[order[i]]) continue;
        const std::size_t a = order[i];
        std::size_t j = i + 1;
        while (j < order.size() && used[order[j]]) ++j;
        if (j >= order.size()) {
            out.bye = a;
            break;
        }
        std::size_t b = order[j];
        if (played(a, b)) {
            std::size_t k = j + 1;
            while (k < order.size() && (used[order[k]] || played(a, order[k]))) ++k;
            if (k < order.size()) b = order[k];
        }
        used[a] = used[b] = true;
        out.matchups.push_back({a, b});
    }
    if (!out.bye) {
        for (std::size_t i : order)
            if (!used[i]) {
                out.bye = i;
                break;
            }
    }
    return out;
}

std::vector<double> bt_fit(std::size_t n_items, const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) throw DomainError("bt_fit: no outcomes");

    // Smoothed win counts; +0.5 each way for every pair that met.
    std::map<std::pair<std::size_t, std::size_t>, double> wins;
    std::set<std::pair<std::size_t, std::size_t>> met;
    for (const auto& o : outcomes) {
        if (o.winner == o.loser) throw DomainError("bt_fit: item playing itself");
        if (o.winner >= n_items || o.loser >= n_items)
            throw DomainError("bt_fit: outcome index out of range");
        wins[{o.winner, o.loser}] += 1.0;
        met.insert({std::min(o.winner, o.loser), std::max(o.winner, o.loser)});
    }
    for (const auto& [a, b] : met) {
        wins[{a, b}] += 0.5;
        wins[{b, a}] += 0.5;
    }

    // Connected components of the played graph; strengths are identifiable
    // only within a component.
    std::vector<std::size_t> parent(n_items);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& [a, b] : met) parent[find(a)] = find(b);

    std::vector<std::vector<std::pair<std::size_t, double>>> games(n_items); // (opponent, n_ij)
    std::vector<double> win_total(n_items, 0.0);
    for (const auto& [key, w] : wins) {
        win_total[key.first] += w;
    }
    for (const auto& [a, b] : met) {
        const double n_ab = wins[{a, b}] + wins[{b, a}];
        games[a].emplace_back(b, n_ab);
        games[b].emplace_back(a, n_ab);
    }

    std::vector<double> p(n_items, 1.0);
    std::vector<bool> active(n_items, false);
    for (std::size_t i = 0; i < n_items; ++i) active[i] = !games[i].empty();

    for (int iter = 0; iter < 500; ++iter) {
        double max_delta = 0.0;
        std::vector<double> next = p;
        for (std::size_t i = 0; i < n_items; ++i) {
            if (!active[i]) continue;
            double denom = 0.0;
            for (const auto& [j, n_ij] : games[i]) denom += n_ij / (p[i] + p[j]);
            next[i] = win_total[i] / denom;
        }
        // Renormalize each component to geometric mean 1 to pin the scale.
        std::map<std::size_t, std::pair<double, std::size_t>> log_sums;
        for (std::size_t i = 0; i < n_items; ++i) {
            if (!active[i]) continue;
            auto& [sum, count] = log_sums[find(i)];
            sum += std::log(next[i]);
            ++count;
        }
        for (std::size_t i = 0; i < n_items; ++i) {
            if (!active[i]) continue;
            const auto& [sum, count] = log_sums[find(i)];
            next[i] *= std::exp(-sum / static_cast<double>(count));
            max_delta = std::max(max_delta, std::abs(std::log(next[i]) - std::log(p[i])));
        }
        p = std::move(next);
        if (max_delta < 1e-8) break;
    }

    std::vector<double> ratings(n_items, 0.0);
    for (std::size_t i = 0; i < n_items; ++i)
        if (active[i]) ratings[i] = std::log(p[i]);
    return ratings;
}

TournamentResult tournament_sort(const std::vector<MatchDecision>& decisions,
                                 reason::JudgeBackend& comparator, const TournamentConfig& cfg,
                                 const std::map<std::string, std::string>& query_texts,
                                 const std::map<std::string, std::string>& candidate_texts) {
    if (cfg.rounds < 1) throw DomainError("tournament rounds must be >= 1");

    std::vector<const MatchDecision*> guesses, abstentions;
    for (const auto& d : decisions)
        (d.is_guess() ? guesses : abstentions).push_back(&d);
    if (guesses.size() < 2) throw DomainError("tournament_sort: need at least 2 guesses");

    auto text_of = [](const std::map<std::string, std::string>& m, const std::string& id) {
        auto it = m.find(id);
        return it == m.end() ? std::string() : it->second;
    };

    std::vector<RatedPair> pairs;
    pairs.reserve(guesses.size());
    for (const auto* d : guesses) pairs.push_back({d->query_id, *d->guess, 0.0, {}});

    TournamentResult result;
    std::vector<Outcome> outcomes;
    for (int round = 1; round <= cfg.rounds; ++round) {
        const Pairing pairing = swiss_pairing(pairs);

        // Comparisons within the round are independent; results land in
        // per-matchup slots so the transcript is order-stable.
        std::vector<char> winners(pairing.matchups.size(), 'S');
        parallel_for(pairing.matchups.size(), cfg.jobs, [&](std::size_t mi) {
            const Matchup& m = pairing.matchups[mi];
            reason::ComparePair a{pairs[m.a].query_id, pairs[m.a].candidate_id,
                                  text_of(query_texts, pairs[m.a].query_id),
                                  text_of(candidate_texts, pairs[m.a].candidate_id)};
            reason::ComparePair b{pairs[m.b].query_id, pairs[m.b].candidate_id,
                                  text_of(query_texts, pairs[m.b].query_id),
                                  text_of(candidate_texts, pairs[m.b].candidate_id)};
            try {
                winners[mi] = comparator.compare(a, b) == reason::CompareWinner::A ? 'A' : 'B';
            } catch (const std::runtime_error&) {
                winners[mi] = 'S';
            }
        });
        for (std::size_t mi = 0; mi < pairing.matchups.size(); ++mi) {
            const Matchup& m = pairing.matchups[mi];
            const char winner = winners[mi];
            result.transcript.push_back(
                {round, pairs[m.a].query_id, pairs[m.b].query_id, winner});
            if (winner == 'S') {
                ++result.skipped_comparisons;
                continue;
            }
            pairs[m.a].opponents.push_back(m.b);
            pairs[m.b].opponents.push_back(m.a);
            outcomes.push_back(winner == 'A' ? Outcome{m.a, m.b} : Outcome{m.b, m.a});
        }
        if (!outcomes.empty()) {
            const std::vector<double> ratings = bt_fit(pairs.size(), outcomes);
            for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].rating = ratings[i];
        }
    }

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pairs[a].rating != pairs[b].rating) return pairs[a].rating > pairs[b].rating;
        return pairs[a].query_id < pairs[b].query_id;
    });
    for (std::size_t i : order) {
        MatchDecision d = *guesses[i];
        d.stage = "calibrate";
        d.confidence = pairs[i].rating;
        d.scores[score::rating] = pairs[i].rating;
        result.decisions.push_back(std::move(d));
    }
    for (const auto* d : abstentions) result.decisions.push_back(*d);
    return result;
}

std::vector<MatchDecision> confidence_order(const std::vector<MatchDecision>& decisions,
                                            const std::string& source) {
    std::vector<MatchDecision> guesses, abstentions;
    for (const auto& d : decisions) {
        if (d.is_guess()) {
            if (!d.scores.count(source))
                throw ValidationError("decision for query " + d.query_id +
                                      " lacks score '" + source + "'");
            guesses.push_back(d);
        } else {
            abstentions.push_back(d);
        }
    }
    std::stable_sort(guesses.begin(), guesses.end(),
                     [&](const MatchDecision& a, const MatchDecision& b) {
                         const double sa = a.scores.at(source), sb = b.scores.at(source);
                         if (sa != sb) return sa > sb;
                         return a.query_id < b.query_id;
                     });
    std::stable_sort(abstentions.begin(), abstentions.end(),
                     [](const MatchDecision& a, const MatchDecision& b) {
                         return a.query_id < b.query_id;
                     });
    for (auto& d : guesses) d.confidence = d.scores.at(source);
    guesses.insert(guesses.end(), abstentions.begin(), abstentions.end());
    return guesses;
}

} // namespace linkage::calibrate
