#include "linkage/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "linkage/errors.hpp"
#include "linkage/rng.hpp"
#include "linkage/text.hpp"

namespace linkage::datagen {

AuthorStats AuthorStats::from_profile(const Profile& p) {
    AuthorStats s;
    s.total_comments = static_cast<std::int64_t>(p.documents.size());
    if (!p.documents.empty()) {
        s.first_ts = p.documents.front().ts;
        s.last_ts = p.documents.back().ts;
    }
    return s;
}

bool author_passes_filters(const AuthorStats& s, const std::string& name,
                           const std::set<std::string>& excluded) {
    if (s.span_days() < 1095) return false;
    if (s.total_comments < 200) return false;
    if (s.mean_rate() > 24.0) return false;
    const std::string lower = text::to_lower(name);
    for (const char* suffix : {"bot", "gpt", "mods"}) {
        const std::size_t len = std::string_view(suffix).size();
        if (lower.size() >= len && lower.compare(lower.size() - len, len, suffix) == 0)
            return false;
    }
    if (excluded.count(lower)) return false;
    return true;
}

namespace {

Profile make_half(const Profile& src, const char* suffix, Side side,
                  std::vector<Document> docs) {
    Profile half;
    half.profile_id = src.profile_id + suffix;
    half.side = side;
    half.documents = std::move(docs);
    half.bio = src.bio;
    return half;
}

} // namespace

std::optional<SplitResult> temporal_split(const Profile& p, const SplitSpec& spec) {
    if (spec.gap_days <= 0) throw DomainError("gap_days must be positive");
    if (spec.min_side < 1) throw DomainError("min_side must be >= 1");
    const auto& docs = p.documents;
    if (docs.size() < 2 * spec.min_side) return std::nullopt;

    const double half_gap = static_cast<double>(spec.gap_days) * 86400.0 / 2.0;
    // before(t*) and after(t*) are step functions of t*; evaluating at
    // midpoints between consecutive timestamps covers every attainable pair.
    std::vector<std::int64_t> ts(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) ts[i] = docs[i].ts;

    auto count_before = [&](double cut) {
        return static_cast<std::size_t>(
            std::lower_bound(ts.begin(), ts.end(), cut,
                             [](std::int64_t t, double c) { return static_cast<double>(t) < c; }) -
            ts.begin());
    };
    auto count_after = [&](double cut) {
        return ts.size() - static_cast<std::size_t>(
            std::upper_bound(ts.begin(), ts.end(), cut,
                             [](double c, std::int64_t t) { return c < static_cast<double>(t); }) -
            ts.begin());
    };

    bool found = false;
    double best_t = 0;
    std::size_t best_min = 0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        if (ts[i] == ts[i + 1]) continue;
        const double t_star = (static_cast<double>(ts[i]) + static_cast<double>(ts[i + 1])) / 2.0;
        const std::size_t before = count_before(t_star - half_gap);
        const std::size_t after = count_after(t_star + half_gap);
        if (before < spec.min_side || after < spec.min_side) continue;
        const std::size_t m = std::min(before, after);
        if (!found || m > best_min) {
            found = true;
            best_min = m;
            best_t = t_star;
        }
    }
    if (!found) return std::nullopt;

    std::vector<Document> before_docs, after_docs;
    for (const auto& d : docs) {
        if (static_cast<double>(d.ts) < best_t - half_gap)
            before_docs.push_back(d);
        else if (static_cast<double>(d.ts) > best_t + half_gap)
            after_docs.push_back(d);
    }
    SplitResult r;
    r.query_half = make_half(p, "::q", Side::query, std::move(before_docs));
    r.candidate_half = make_half(p, "::c", Side::candidate, std::move(after_docs));
    r.split_ts = best_t;
    return r;
}

std::optional<SplitResult> community_split(const Profile& p,
                                           const std::set<std::string>& main,
                                           const std::set<std::string>& alt,
                                           std::size_t min_overlap,
                                           const std::vector<std::string>& catalog) {
    for (const auto& c : main)
        if (alt.count(c)) throw DomainError("main and alt communities overlap: " + c);

    std::vector<Document> main_docs, alt_docs;
    for (const auto& d : p.documents) {
        if (main.count(d.community)) main_docs.push_back(d);
        else if (alt.count(d.community)) alt_docs.push_back(d);
    }
    if (main_docs.empty() || alt_docs.empty()) return std::nullopt;

    auto titles_in = [&](const std::vector<Document>& docs) {
        std::vector<std::string> found;
        for (const auto& title : catalog) {
            for (const auto& d : docs) {
                if (text::fuzzy_contains_title(d.text, title, kTitleMatchThreshold)) {
                    found.push_back(title);
                    break;
                }
            }
        }
        return found;
    };
    const std::vector<std::string> main_titles = titles_in(main_docs);
    const std::vector<std::string> alt_titles = titles_in(alt_docs);
    if (title_overlap(main_titles, alt_titles) < min_overlap) return std::nullopt;

    SplitResult r;
    r.query_half = make_half(p, "::q", Side::query, std::move(main_docs));
    r.candidate_half = make_half(p, "::c", Side::candidate, std::move(alt_docs));
    return r;
}

std::size_t title_overlap(const std::vector<std::string>& a,
                          const std::vector<std::string>& b,
                          double threshold) {
    struct Pair {
        double sim;
        std::size_t i, j;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double sim = text::title_similarity(a[i], b[j]);
            if (sim >= threshold) pairs.push_back({sim, i, j});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        if (x.i != y.i) return x.i < y.i;
        return x.j < y.j;
    });
    std::vector<bool> used_a(a.size()), used_b(b.size());
    std::size_t count = 0;
    for (const auto& pr : pairs) {
        if (used_a[pr.i] || used_b[pr.j]) continue;
        used_a[pr.i] = used_b[pr.j] = true;
        ++count;
    }
    return count;
}

namespace {

const std::vector<std::string>& synth_verbs() {
    static const std::vector<std::string> v = {
        "collects", "restores", "breeds", "brews",  "paints",      "studies", "repairs",
        "grows",    "builds",   "carves", "photographs", "trains", "races",   "bakes"};
    return v;
}

const std::vector<std::string>& synth_adjectives() {
    static const std::vector<std::string> v = {"vintage", "miniature", "tropical", "antique",
                                               "wooden",  "ceramic",   "alpine",   "coastal",
                                               "desert",  "nordic"};
    return v;
}

const std::vector<std::string>& synth_nouns() {
    static const std::vector<std::string> v = {
        "cameras",     "orchids",  "pythons",   "kayaks",    "banjos",    "meteorites",
        "typewriters", "bonsai",   "falcons",   "motorcycles", "quilts",  "telescopes",
        "beehives",    "canoes",   "fossils",   "lanterns",  "marionettes", "sundials",
        "terrariums",  "zeppelins", "accordions", "geodes",   "mushrooms", "tapestries"};
    return v;
}

// Trait index -> (noun, adjective, verb) with the noun varying fastest so
// even small pools cover the full noun range.
std::string noun_of_trait(std::size_t index) {
    return synth_nouns()[index % synth_nouns().size()];
}

const std::vector<std::string>& synth_templates() {
    static const std::vector<std::string> v = {
        "I really got into {} last year and it stuck.",
        "Spent most of the weekend on {} again.",
        "Honestly {} is still my favorite way to unwind.",
        "Started keeping a little log about {} for anyone curious.",
        "Met a few locals around here who also do {}.",
    };
    return v;
}

std::string render_template(const std::string& tmpl, const std::string& phrase) {
    const std::size_t pos = tmpl.find("{}");
    return tmpl.substr(0, pos) + phrase + tmpl.substr(pos + 2);
}

std::string padded(std::size_t n) {
    std::ostringstream out;
    out.width(5);
    out.fill('0');
    out << n;
    return out.str();
}

std::vector<std::size_t> sample_distinct(std::mt19937_64& rng, std::size_t count,
                                         std::size_t universe,
                                         const std::set<std::size_t>& avoid = {}) {
    std::vector<std::size_t> picked;
    std::set<std::size_t> seen = avoid;
    if (count + avoid.size() > universe) count = universe - avoid.size();
    while (picked.size() < count) {
        const std::size_t idx = rng() % universe;
        if (seen.insert(idx).second) picked.push_back(idx);
    }
    return picked;
}

constexpr std::int64_t kSynthEpoch = 1'500'000'000;
constexpr std::int64_t kDay = 86400;

std::vector<Document> synth_documents(const std::vector<std::size_t>& trait_ids,
                                      const std::vector<TraitEntry>& vocab,
                                      std::int64_t window_start, std::int64_t window_days,
                                      std::mt19937_64& rng) {
    std::vector<Document> docs;
    const std::size_t n = trait_ids.size();
    for (std::size_t i = 0; i < n; ++i) {
        const TraitEntry& entry = vocab[trait_ids[i]];
        Document d;
        const std::int64_t slot = window_days * kDay / static_cast<std::int64_t>(std::max<std::size_t>(n, 1));
        d.ts = window_start + static_cast<std::int64_t>(i) * slot +
               static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(std::max<std::int64_t>(slot, 1)));
        d.community = "board_" + noun_of_trait(trait_ids[i]);
        d.text = render_template(synth_templates()[rng() % synth_templates().size()], entry.phrase);
        docs.push_back(std::move(d));
    }
    std::stable_sort(docs.begin(), docs.end(),
                     [](const Document& a, const Document& b) { return a.ts < b.ts; });
    return docs;
}

std::vector<std::string> tags_of(const std::vector<std::size_t>& ids,
                                 const std::vector<TraitEntry>& vocab) {
    std::vector<std::string> tags;
    tags.reserve(ids.size());
    for (std::size_t id : ids) tags.push_back(vocab[id].tag);
    return tags;
}

} // namespace

std::vector<TraitEntry> synth_trait_vocabulary(std::size_t size) {
    const auto& verbs = synth_verbs();
    const auto& adjs = synth_adjectives();
    const auto& nouns = synth_nouns();
    const std::size_t V = verbs.size(), A = adjs.size(), N = nouns.size();
    std::vector<TraitEntry> vocab;
    vocab.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        const std::string& n = nouns[i % N];
        const std::string& a = adjs[(i / N) % A];
        const std::string& v = verbs[(i / (N * A)) % V];
        std::string suffix;
        if (i >= V * A * N) suffix = "_" + std::to_string(i / (V * A * N) + 1);
        vocab.push_back({v + "_" + a + "_" + n + suffix, v + " " + a + " " + n});
    }
    return vocab;
}

std::map<std::string, std::string> synth_trait_lexicon(const SynthConfig& cfg) {
    std::map<std::string, std::string> lex;
    for (const auto& e : synth_trait_vocabulary(cfg.trait_pool_size)) lex[e.tag] = e.phrase;
    return lex;
}

std::map<std::string, std::string> synth_attribute_lexicon(const SynthConfig& cfg) {
    std::map<std::string, std::string> lex;
    for (std::size_t i = 0; i < cfg.trait_pool_size; ++i) {
        const std::string noun = noun_of_trait(i);
        lex["interest_" + noun] = noun;
    }
    return lex;
}

SynthPlan synth_plan(const SynthConfig& cfg) {
    if (cfg.trait_persistence < 0.0 || cfg.trait_persistence > 1.0)
        throw ConfigError("trait_persistence must lie in [0,1]");
    if (cfg.trait_pool_size == 0) throw ConfigError("trait_pool_size must be positive");

    const std::vector<TraitEntry> vocab = synth_trait_vocabulary(cfg.trait_pool_size);
    SynthPlan plan;
    plan.cfg = cfg;

    auto plant = [&](const std::string& label, std::size_t i, bool has_query, bool has_candidate) {
        auto rng = make_rng(derive_seed(cfg.seed, label, i));
        PlantedUser u;
        u.matchable = has_query && has_candidate;
        if (has_query) u.query_id = (u.matchable ? "q" : "qx") + padded(i);
        if (has_candidate) u.candidate_id = (u.matchable ? "c" : "cx") + padded(i);

        const std::vector<std::size_t> base =
            sample_distinct(rng, cfg.traits_per_user, cfg.trait_pool_size);
        const std::set<std::size_t> base_set(base.begin(), base.end());
        u.base_traits = tags_of(base, vocab);

        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (has_query) {
            std::vector<std::size_t> q = base;
            for (std::size_t t : sample_distinct(rng, cfg.noise_traits_per_half,
                                                 cfg.trait_pool_size, base_set))
                q.push_back(t);
            u.query_traits = tags_of(q, vocab);
        }
        if (has_candidate) {
            std::vector<std::size_t> c;
            for (std::size_t t : base)
                if (unit(rng) < cfg.trait_persistence) c.push_back(t);
            for (std::size_t t : sample_distinct(rng, cfg.noise_traits_per_half,
                                                 cfg.trait_pool_size, base_set))
                c.push_back(t);
            u.candidate_traits = tags_of(c, vocab);
        }
        plan.users.push_back(std::move(u));
    };

    for (std::size_t i = 0; i < cfg.n_matchable; ++i) plant("matchable", i, true, true);
    for (std::size_t i = 0; i < cfg.n_candidate_distractors; ++i) plant("cdistract", i, false, true);
    for (std::size_t i = 0; i < cfg.n_query_distractors; ++i) plant("qdistract", i, true, false);
    return plan;
}

Dataset synth_generate(const SynthConfig& cfg) {
    const SynthPlan plan = synth_plan(cfg);
    const std::vector<TraitEntry> vocab = synth_trait_vocabulary(cfg.trait_pool_size);
    std::map<std::string, std::size_t> tag_to_id;
    for (std::size_t i = 0; i < vocab.size(); ++i) tag_to_id[vocab[i].tag] = i;

    auto ids_of = [&](const std::vector<std::string>& tags) {
        std::vector<std::size_t> ids;
        ids.reserve(tags.size());
        for (const auto& t : tags) ids.push_back(tag_to_id.at(t));
        return ids;
    };

    Dataset d;
    for (std::size_t i = 0; i < plan.users.size(); ++i) {
        const PlantedUser& u = plan.users[i];
        auto rng = make_rng(derive_seed(cfg.seed, "docs", i));
        const std::int64_t user_offset =
            static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(30 * kDay));
        if (!u.query_id.empty()) {
            Profile p;
            p.profile_id = u.query_id;
            p.side = Side::query;
            p.documents = synth_documents(ids_of(u.query_traits), vocab,
                                          kSynthEpoch + user_offset, 540, rng);
            d.queries.push_back(std::move(p));
        }
        if (!u.candidate_id.empty()) {
            Profile p;
            p.profile_id = u.candidate_id;
            p.side = Side::candidate;
            p.documents = synth_documents(ids_of(u.candidate_traits), vocab,
                                          kSynthEpoch + user_offset + 905 * kDay, 525, rng);
            d.candidates.push_back(std::move(p));
        }
        if (u.matchable) d.truth.emplace(u.query_id, u.candidate_id);
    }

    auto by_id = [](const Profile& a, const Profile& b) { return a.profile_id < b.profile_id; };
    std::sort(d.queries.begin(), d.queries.end(), by_id);
    std::sort(d.candidates.begin(), d.candidates.end(), by_id);
    return d;
}

Dataset inject_distractors(const Dataset& d, const SynthConfig& cfg,
                           std::span<const Profile> supply) {
    const std::size_t needed = cfg.n_candidate_distractors + cfg.n_query_distractors;
    if (supply.size() < needed) {
        std::ostringstream msg;
        msg << "distractor supply too small: need " << needed << ", have " << supply.size();
        throw ValidationError(msg.str());
    }
    std::set<std::string> existing;
    for (const auto& q : d.queries) existing.insert(q.profile_id);
    for (const auto& c : d.candidates) existing.insert(c.profile_id);

    Dataset out = d;
    std::size_t cursor = 0;
    auto take = [&](Side side) {
        Profile p = supply[cursor++];
        if (existing.count(p.profile_id))
            throw ValidationError("distractor id collides with dataset: " + p.profile_id);
        existing.insert(p.profile_id);
        p.side = side;
        return p;
    };
    for (std::size_t i = 0; i < cfg.n_candidate_distractors; ++i)
        out.candidates.push_back(take(Side::candidate));
    for (std::size_t i = 0; i < cfg.n_query_distractors; ++i)
        out.queries.push_back(take(Side::query));
    return out;
}

} // namespace linkage::datagen
