#include "linkage/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "linkage/baselines.hpp"
#include "linkage/errors.hpp"
#include "linkage/jsonl.hpp"
#include "linkage/parallel.hpp"
#include "linkage/remote.hpp"
#include "linkage/rng.hpp"
#include "linkage/text.hpp"
#include "linkage/version.hpp"

namespace linkage::pipeline {

using ordered_json = nlohmann::ordered_json;

PipelineKind pipeline_from_name(const std::string& name) {
    if (name == "baseline_jaccard") return PipelineKind::baseline_jaccard;
    if (name == "baseline_movies") return PipelineKind::baseline_movies;
    if (name == "baseline_subreddit") return PipelineKind::baseline_subreddit;
    if (name == "search_only") return PipelineKind::search_only;
    if (name == "search_reason") return PipelineKind::search_reason;
    if (name == "search_reason_calibrate") return PipelineKind::search_reason_calibrate;
    throw ConfigError("unknown pipeline: " + name);
}

const char* pipeline_name(PipelineKind kind) {
    switch (kind) {
        case PipelineKind::baseline_jaccard: return "baseline_jaccard";
        case PipelineKind::baseline_movies: return "baseline_movies";
        case PipelineKind::baseline_subreddit: return "baseline_subreddit";
        case PipelineKind::search_only: return "search_only";
        case PipelineKind::search_reason: return "search_reason";
        case PipelineKind::search_reason_calibrate: return "search_reason_calibrate";
    }
    return "search_only";
}

bool is_baseline(PipelineKind kind) {
    return kind == PipelineKind::baseline_jaccard || kind == PipelineKind::baseline_movies ||
           kind == PipelineKind::baseline_subreddit;
}

bool uses_search(PipelineKind kind) { return !is_baseline(kind); }

bool uses_reason(PipelineKind kind) {
    return kind == PipelineKind::search_reason ||
           kind == PipelineKind::search_reason_calibrate;
}

SummaryKind resolved_extract_kind(const RunConfig& cfg) {
    if (cfg.extract_kind) return *cfg.extract_kind;
    switch (cfg.pipeline) {
        case PipelineKind::baseline_jaccard: return SummaryKind::attributes;
        case PipelineKind::baseline_movies: return SummaryKind::reviews;
        default: return SummaryKind::traits;
    }
}

namespace {

std::string resolved_source(const RunConfig& cfg) {
    return cfg.confidence_source.empty() ? std::string(score::top2_gap) : cfg.confidence_source;
}

datagen::SynthConfig parse_synth(const ordered_json& j) {
    datagen::SynthConfig s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.n_matchable = j.value("n_matchable", std::size_t{100});
    s.n_candidate_distractors = j.value("n_candidate_distractors", std::size_t{0});
    s.n_query_distractors = j.value("n_query_distractors", std::size_t{0});
    s.trait_pool_size = j.value("trait_pool_size", std::size_t{200});
    s.traits_per_user = j.value("traits_per_user", std::size_t{8});
    s.trait_persistence = j.value("trait_persistence", 0.7);
    s.noise_traits_per_half = j.value("noise_traits_per_half", std::size_t{2});
    return s;
}

ordered_json synth_to_json(const datagen::SynthConfig& s) {
    return {{"seed", s.seed},
            {"n_matchable", s.n_matchable},
            {"n_candidate_distractors", s.n_candidate_distractors},
            {"n_query_distractors", s.n_query_distractors},
            {"trait_pool_size", s.trait_pool_size},
            {"traits_per_user", s.traits_per_user},
            {"trait_persistence", s.trait_persistence},
            {"noise_traits_per_half", s.noise_traits_per_half}};
}

} // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const ordered_json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }

    RunConfig cfg;
    if (j.contains("dataset") && !j.at("dataset").is_null())
        cfg.dataset_path = j.at("dataset").get<std::string>();
    if (j.contains("synth") && !j.at("synth").is_null()) cfg.synth = parse_synth(j.at("synth"));
    cfg.pipeline = pipeline_from_name(j.value("pipeline", std::string("search_only")));
    cfg.k = j.value("k", std::size_t{15});
    if (j.contains("tournament")) {
        cfg.tournament.rounds = j.at("tournament").value("rounds", 15);
    }
    cfg.offline = j.value("offline", true);
    if (j.contains("endpoints")) {
        const auto& e = j.at("endpoints");
        cfg.endpoints.embedder = e.value("embedder", std::string());
        cfg.endpoints.extractor = e.value("extractor", std::string());
        cfg.endpoints.judge = e.value("judge", std::string());
    }
    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        cfg.oracle.select_accuracy = o.value("select_accuracy", 1.0);
        cfg.oracle.verify_tpr = o.value("verify_tpr", 1.0);
        cfg.oracle.verify_fpr = o.value("verify_fpr", 0.0);
        cfg.oracle.confidence_noise = o.value("confidence_noise", 0.05);
    }
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.out_dir = j.value("out", std::string("out"));
    cfg.jobs = j.value("jobs", 1);
    if (j.contains("precision_targets"))
        cfg.precision_targets = j.at("precision_targets").get<std::vector<double>>();
    cfg.confidence_source = j.value("confidence_source", std::string());
    cfg.shared_title_projection = j.value("shared_title_projection", false);
    cfg.use_verify = j.value("use_verify", true);
    cfg.embed_dim = j.value("embed_dim", 256);
    if (j.contains("extract_kind") && !j.at("extract_kind").is_null())
        cfg.extract_kind = summary_kind_from_name(j.at("extract_kind").get<std::string>());
    if (j.contains("lexicon") && !j.at("lexicon").is_null())
        cfg.lexicon_path = j.at("lexicon").get<std::string>();
    if (j.contains("catalog") && !j.at("catalog").is_null())
        cfg.catalog_path = j.at("catalog").get<std::string>();
    return cfg;
}

ordered_json config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["dataset"] = cfg.dataset_path ? ordered_json(*cfg.dataset_path) : ordered_json(nullptr);
    j["synth"] = cfg.synth ? synth_to_json(*cfg.synth) : ordered_json(nullptr);
    j["pipeline"] = pipeline_name(cfg.pipeline);
    j["k"] = cfg.k;
    j["tournament"] = {{"rounds", cfg.tournament.rounds}};
    j["offline"] = cfg.offline;
    j["endpoints"] = {{"embedder", cfg.endpoints.embedder},
                      {"extractor", cfg.endpoints.extractor},
                      {"judge", cfg.endpoints.judge}};
    j["oracle"] = {{"select_accuracy", cfg.oracle.select_accuracy},
                   {"verify_tpr", cfg.oracle.verify_tpr},
                   {"verify_fpr", cfg.oracle.verify_fpr},
                   {"confidence_noise", cfg.oracle.confidence_noise}};
    j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir.string();
    j["jobs"] = cfg.jobs;
    j["precision_targets"] = cfg.precision_targets;
    j["confidence_source"] = resolved_source(cfg);
    j["shared_title_projection"] = cfg.shared_title_projection;
    j["use_verify"] = cfg.use_verify;
    j["embed_dim"] = cfg.embed_dim;
    j["extract_kind"] = summary_kind_name(resolved_extract_kind(cfg));
    j["lexicon"] = cfg.lexicon_path ? ordered_json(*cfg.lexicon_path) : ordered_json(nullptr);
    j["catalog"] = cfg.catalog_path ? ordered_json(*cfg.catalog_path) : ordered_json(nullptr);
    return j;
}

void validate_config(const RunConfig& cfg) {
    if (cfg.offline && cfg.endpoints.any())
        throw ConfigError("offline mode forbids network endpoints");
    if (!cfg.dataset_path && !cfg.synth)
        throw ConfigError("config needs either a dataset path or a synth block");
    if (cfg.dataset_path && cfg.synth)
        throw ConfigError("config must pick one of dataset path or synth block");
    if (cfg.k < 1) throw ConfigError("k must be >= 1");
    if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (cfg.embed_dim < 8) throw ConfigError("embed_dim must be >= 8");
    if (cfg.tournament.rounds < 1) throw ConfigError("tournament rounds must be >= 1");
    for (double t : cfg.precision_targets)
        if (t < 0.0 || t > 1.0) throw ConfigError("precision targets must lie in [0,1]");
    const std::string source = resolved_source(cfg);
    if (source != score::similarity && source != score::top2_gap)
        throw ConfigError("confidence_source must be similarity or top2_gap");
    const SummaryKind kind = resolved_extract_kind(cfg);
    if (cfg.pipeline == PipelineKind::baseline_movies && kind != SummaryKind::reviews)
        throw ConfigError("baseline_movies needs reviews summaries");
    if (kind == SummaryKind::reviews && !cfg.catalog_path && !cfg.offline)
        throw ConfigError("reviews extraction needs a catalog");
}

std::map<std::string, std::string> load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open lexicon: " + path.string());
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const ordered_json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    std::map<std::string, std::string> lexicon;
    for (const auto& [tag, keyword] : j.items()) lexicon[tag] = keyword.get<std::string>();
    return lexicon;
}

std::vector<std::string> load_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open catalog: " + path.string());
    std::vector<std::string> titles;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = text::trim(line);
        if (!t.empty()) titles.push_back(t);
    }
    return titles;
}

std::vector<FeatureSummary> extract_offline(const std::vector<Profile>& profiles,
                                            SummaryKind kind,
                                            const std::map<std::string, std::string>& lexicon,
                                            const std::vector<std::string>& catalog, int jobs) {
    std::vector<FeatureSummary> out(profiles.size());
    parallel_for(profiles.size(), jobs, [&](std::size_t i) {
        Profile filtered = profiles[i];
        filtered.documents = extract::prefilter_comments(filtered.documents);
        switch (kind) {
            case SummaryKind::traits:
                out[i] = extract::extract_traits_deterministic(filtered, lexicon);
                break;
            case SummaryKind::attributes:
                out[i] = extract::extract_attributes_deterministic(filtered, lexicon);
                break;
            case SummaryKind::reviews:
                out[i] = extract::extract_reviews(filtered, catalog);
                break;
        }
    });
    std::sort(out.begin(), out.end(), [](const FeatureSummary& a, const FeatureSummary& b) {
        return a.profile_id < b.profile_id;
    });
    return out;
}

std::vector<FeatureSummary> extract_with_backend(const std::vector<Profile>& profiles,
                                                 extract::ExtractorBackend& backend,
                                                 const std::string& template_id, int jobs,
                                                 std::vector<std::string>* refused) {
    std::vector<std::optional<FeatureSummary>> slots(profiles.size());
    std::vector<std::string> refused_local(profiles.size());
    parallel_for(profiles.size(), jobs, [&](std::size_t i) {
        const extract::ExtractOutcome outcome =
            extract::extract_remote(profiles[i], backend, template_id);
        if (std::holds_alternative<FeatureSummary>(outcome))
            slots[i] = std::get<FeatureSummary>(outcome);
        else
            refused_local[i] = profiles[i].profile_id;
    });
    std::vector<FeatureSummary> out;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) out.push_back(std::move(*slots[i]));
        else if (refused && !refused_local[i].empty()) refused->push_back(refused_local[i]);
    }
    std::sort(out.begin(), out.end(), [](const FeatureSummary& a, const FeatureSummary& b) {
        return a.profile_id < b.profile_id;
    });
    return out;
}

namespace {

Dataset stage_dataset(const RunConfig& cfg) {
    if (cfg.synth) {
        datagen::SynthConfig synth = *cfg.synth;
        synth.seed = derive_seed(cfg.seed, "datagen");
        return datagen::synth_generate(synth);
    }
    return load_dataset(*cfg.dataset_path);
}

struct Summaries {
    std::vector<FeatureSummary> queries;
    std::vector<FeatureSummary> candidates;
    std::vector<std::string> refused;
};

Summaries stage_extract(const RunConfig& cfg, const Dataset& d) {
    const SummaryKind kind = resolved_extract_kind(cfg);
    Summaries s;
    if (!cfg.offline && !cfg.endpoints.extractor.empty()) {
        remote::HttpExtractorBackend backend(cfg.endpoints.extractor);
        s.queries = extract_with_backend(d.queries, backend, "default", cfg.jobs, &s.refused);
        s.candidates =
            extract_with_backend(d.candidates, backend, "default", cfg.jobs, &s.refused);
        return s;
    }

    std::map<std::string, std::string> lexicon;
    std::vector<std::string> catalog;
    if (kind == SummaryKind::reviews) {
        if (cfg.catalog_path) catalog = load_catalog(*cfg.catalog_path);
        else throw ConfigError("reviews extraction needs a catalog");
    } else if (cfg.lexicon_path) {
        lexicon = load_lexicon(*cfg.lexicon_path);
    } else if (cfg.synth) {
        lexicon = kind == SummaryKind::attributes
                      ? datagen::synth_attribute_lexicon(*cfg.synth)
                      : datagen::synth_trait_lexicon(*cfg.synth);
    } else {
        throw ConfigError("offline extraction needs a lexicon");
    }
    s.queries = extract_offline(d.queries, kind, lexicon, catalog, cfg.jobs);
    s.candidates = extract_offline(d.candidates, kind, lexicon, catalog, cfg.jobs);
    return s;
}

std::unique_ptr<search::EmbedderBackend> make_embedder(const RunConfig& cfg) {
    if (!cfg.offline && !cfg.endpoints.embedder.empty())
        return std::make_unique<remote::HttpEmbedder>(cfg.endpoints.embedder);
    return std::make_unique<search::HashEmbedder>(cfg.embed_dim, derive_seed(cfg.seed, "search"));
}

std::unique_ptr<reason::JudgeBackend> make_judge(const RunConfig& cfg, const TruthMap& truth) {
    if (!cfg.offline && !cfg.endpoints.judge.empty())
        return std::make_unique<remote::HttpJudge>(cfg.endpoints.judge);
    reason::OracleJudgeConfig oracle = cfg.oracle;
    oracle.seed = derive_seed(cfg.seed, "reason");
    return std::make_unique<reason::OracleJudge>(oracle, truth);
}

} // namespace

PipelineContext build_context(const RunConfig& cfg) {
    validate_config(cfg);
    PipelineContext ctx;
    ctx.cfg = cfg;
    ctx.dataset = stage_dataset(cfg);
    Summaries s = stage_extract(cfg, ctx.dataset);
    ctx.query_summaries = std::move(s.queries);
    ctx.candidate_summaries = std::move(s.candidates);
    for (const auto& q : ctx.query_summaries) ctx.query_by_id.emplace(q.profile_id, &q);
    for (const auto& c : ctx.candidate_summaries) ctx.candidate_by_id.emplace(c.profile_id, &c);
    ctx.embedder = make_embedder(cfg);
    ctx.judge = make_judge(cfg, ctx.dataset.truth);
    if (uses_search(cfg.pipeline))
        ctx.index = search::build_index(ctx.candidate_summaries, *ctx.embedder);
    return ctx;
}

namespace {

std::set<std::string> feature_set(const FeatureSummary& s) {
    const auto& src = s.kind == SummaryKind::attributes ? s.attributes : s.traits;
    return {src.begin(), src.end()};
}

std::set<std::string> community_set(const Profile& p) {
    std::set<std::string> out;
    for (const auto& d : p.documents) out.insert(d.community);
    return out;
}

std::vector<std::string> sorted_query_ids(const Dataset& d) {
    std::vector<std::string> ids;
    ids.reserve(d.queries.size());
    for (const auto& q : d.queries) ids.push_back(q.profile_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<std::string> sorted_candidate_ids(const Dataset& d) {
    std::vector<std::string> ids;
    ids.reserve(d.candidates.size());
    for (const auto& c : d.candidates) ids.push_back(c.profile_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// Scores every query against a per-query candidate pool with the configured
// baseline scorer and emits always-guess decisions carrying similarity and
// top2_gap.
std::vector<MatchDecision> baseline_decisions(
    const PipelineContext& ctx, const std::vector<std::string>& query_ids,
    const std::map<std::string, std::vector<std::string>>* pools,
    std::vector<RankedRow>* rankings) {
    const PipelineKind kind = ctx.cfg.pipeline;
    const std::vector<std::string> full_pool = sorted_candidate_ids(ctx.dataset);
    const std::string source = resolved_source(ctx.cfg);

    // Prepared per-kind lookups.
    baselines::AttributeVocabulary vocab;
    std::map<std::string, std::set<std::string>> feature_sets;
    std::map<std::string, const std::vector<Review>*> reviews_by_id;
    std::map<std::string, std::int64_t> title_counts;
    baselines::SubredditUniverse universe;
    std::map<std::string, std::set<std::string>> communities;

    if (kind == PipelineKind::baseline_jaccard) {
        std::vector<FeatureSummary> all = ctx.query_summaries;
        all.insert(all.end(), ctx.candidate_summaries.begin(), ctx.candidate_summaries.end());
        for (auto& s : all)
            if (s.kind != SummaryKind::attributes) {
                s.attributes = s.traits;
                s.kind = SummaryKind::attributes;
            }
        vocab = baselines::AttributeVocabulary::from_summaries(all);
        for (const auto& s : ctx.query_summaries) feature_sets[s.profile_id] = feature_set(s);
        for (const auto& s : ctx.candidate_summaries) feature_sets[s.profile_id] = feature_set(s);
    } else if (kind == PipelineKind::baseline_movies) {
        auto note = [&](const std::vector<FeatureSummary>& ss) {
            for (const auto& s : ss) {
                if (s.kind != SummaryKind::reviews)
                    throw ValidationError("baseline_movies needs reviews summaries");
                reviews_by_id[s.profile_id] = &s.reviews;
                for (const auto& r : s.reviews) ++title_counts[r.title];
            }
        };
        note(ctx.query_summaries);
        note(ctx.candidate_summaries);
    } else {
        universe = baselines::SubredditUniverse::from_candidates(ctx.dataset.candidates);
        for (const auto& p : ctx.dataset.queries)
            communities[p.profile_id] = community_set(p);
        for (const auto& p : ctx.dataset.candidates)
            communities[p.profile_id] = community_set(p);
    }

    static const std::vector<Review> kNoReviews;
    static const std::set<std::string> kNoFeatures;
    auto scorer_for = [&](const std::string& qid) -> baselines::Scorer {
        if (kind == PipelineKind::baseline_jaccard) {
            const auto& fq = feature_sets.count(qid) ? feature_sets.at(qid) : kNoFeatures;
            return [&, fq](const std::string& cid) {
                const auto& fc = feature_sets.count(cid) ? feature_sets.at(cid) : kNoFeatures;
                return baselines::weighted_jaccard(fq, fc, vocab);
            };
        }
        if (kind == PipelineKind::baseline_movies) {
            const auto* rq = reviews_by_id.count(qid) ? reviews_by_id.at(qid) : &kNoReviews;
            return [&, rq](const std::string& cid) {
                const auto* rc = reviews_by_id.count(cid) ? reviews_by_id.at(cid) : &kNoReviews;
                return baselines::movie_similarity(*rq, *rc, {}, title_counts);
            };
        }
        const auto& sq = communities.count(qid) ? communities.at(qid) : kNoFeatures;
        return [&, sq](const std::string& cid) {
            const auto& sc = communities.count(cid) ? communities.at(cid) : kNoFeatures;
            return baselines::subreddit_score(sq, sc, universe);
        };
    };

    std::vector<MatchDecision> decisions(query_ids.size());
    std::vector<std::vector<RankedRow>> ranking_slots(rankings ? query_ids.size() : 0);
    parallel_for(query_ids.size(), ctx.cfg.jobs, [&](std::size_t i) {
        const std::string& qid = query_ids[i];
        const std::vector<std::string>& pool = pools ? pools->at(qid) : full_pool;
        const auto ranked = baselines::rank_candidates(pool, scorer_for(qid));
        MatchDecision d;
        d.query_id = qid;
        d.stage = "baseline";
        if (!ranked.empty()) {
            d.guess = ranked.front().first;
            d.scores[score::similarity] = ranked.front().second;
            d.scores[score::top2_gap] = baselines::top2_gap(ranked);
            d.confidence = d.scores.at(source);
        }
        if (rankings) {
            for (std::size_t r = 0; r < ranked.size(); ++r)
                ranking_slots[i].push_back({qid, r + 1, ranked[r].first, ranked[r].second});
        }
        decisions[i] = std::move(d);
    });
    if (rankings) {
        for (auto& slot : ranking_slots)
            rankings->insert(rankings->end(), std::make_move_iterator(slot.begin()),
                             std::make_move_iterator(slot.end()));
    }
    return decisions;
}

std::map<std::string, search::Embedding> embed_queries(const PipelineContext& ctx,
                                                       const std::vector<std::string>& query_ids) {
    std::vector<std::string> texts;
    texts.reserve(query_ids.size());
    for (const auto& qid : query_ids) {
        auto it = ctx.query_by_id.find(qid);
        texts.push_back(it == ctx.query_by_id.end() ? std::string() : summary_text(*it->second));
    }
    std::map<std::string, search::Embedding> out;
    constexpr std::size_t kBatch = 64;
    for (std::size_t start = 0; start < texts.size(); start += kBatch) {
        const std::size_t end = std::min(start + kBatch, texts.size());
        std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                       texts.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<search::Embedding> embs = ctx.embedder->embed(batch);
        for (std::size_t i = 0; i < embs.size(); ++i)
            out.emplace(query_ids[start + i], std::move(embs[i]));
    }
    return out;
}

// Renders a shortlist candidate's text, optionally projected down to reviews
// whose titles the query also mentions.
std::string shortlist_text(const PipelineContext& ctx, const FeatureSummary* query,
                           const std::string& candidate_id) {
    auto it = ctx.candidate_by_id.find(candidate_id);
    if (it == ctx.candidate_by_id.end()) return {};
    const FeatureSummary& cand = *it->second;
    if (!ctx.cfg.shared_title_projection || cand.kind != SummaryKind::reviews || !query ||
        query->kind != SummaryKind::reviews)
        return summary_text(cand);
    std::set<std::string> query_titles;
    for (const auto& r : query->reviews) query_titles.insert(r.title);
    FeatureSummary projected = cand;
    std::erase_if(projected.reviews,
                  [&](const Review& r) { return !query_titles.count(r.title); });
    return summary_text(projected);
}

// Restricts a pool to ids actually present in the index so degenerate
// candidates never break k bounds.
std::vector<std::string> indexed_pool(const search::SearchIndex& index,
                                      const std::vector<std::string>& pool) {
    std::vector<std::string> out;
    out.reserve(pool.size());
    for (const auto& id : pool) {
        const auto it =
            std::lower_bound(index.candidate_ids.begin(), index.candidate_ids.end(), id);
        if (it != index.candidate_ids.end() && *it == id) out.push_back(id);
    }
    return out;
}

std::vector<MatchDecision> search_decisions(
    const PipelineContext& ctx, const std::vector<std::string>& query_ids,
    const std::map<std::string, std::vector<std::string>>* pools) {
    const std::string source = resolved_source(ctx.cfg);
    const std::map<std::string, search::Embedding> embeddings = embed_queries(ctx, query_ids);

    std::vector<MatchDecision> decisions(query_ids.size());
    parallel_for(query_ids.size(), ctx.cfg.jobs, [&](std::size_t i) {
        const std::string& qid = query_ids[i];
        MatchDecision d;
        d.query_id = qid;
        d.stage = "search";
        const search::Embedding& q = embeddings.at(qid);
        if (!q.degenerate) {
            std::vector<search::Hit> hits;
            if (pools) {
                const auto pool = indexed_pool(ctx.index, pools->at(qid));
                if (!pool.empty())
                    hits = search::query_topk_within(ctx.index, q,
                                                     std::min<std::size_t>(2, pool.size()), pool);
            } else {
                hits = search::query_topk(ctx.index, q,
                                          std::min<std::size_t>(2, ctx.index.size()));
            }
            if (!hits.empty()) {
                d.guess = hits[0].candidate_id;
                d.scores[score::similarity] = hits[0].cosine;
                d.scores[score::top2_gap] =
                    hits.size() > 1 ? hits[0].cosine - hits[1].cosine : hits[0].cosine;
                d.confidence = d.scores.at(source);
            }
        }
        decisions[i] = std::move(d);
    });
    return decisions;
}

std::vector<MatchDecision> reason_decisions(
    const PipelineContext& ctx, const std::vector<std::string>& query_ids,
    const std::map<std::string, std::vector<std::string>>* pools,
    std::vector<std::string>* failed_queries = nullptr) {
    const std::map<std::string, search::Embedding> embeddings = embed_queries(ctx, query_ids);

    std::vector<std::string> failures(query_ids.size());
    std::vector<MatchDecision> decisions(query_ids.size());
    parallel_for(query_ids.size(), ctx.cfg.jobs, [&](std::size_t i) {
        const std::string& qid = query_ids[i];
        const search::Embedding& q = embeddings.at(qid);
        if (q.degenerate) {
            MatchDecision d;
            d.query_id = qid;
            d.stage = "reason";
            decisions[i] = std::move(d);
            return;
        }
        std::vector<search::Hit> hits;
        if (pools) {
            const auto pool = indexed_pool(ctx.index, pools->at(qid));
            if (!pool.empty())
                hits = search::query_topk_within(ctx.index, q,
                                                 std::min(ctx.cfg.k, pool.size()), pool);
        } else {
            hits = search::query_topk(ctx.index, q, std::min(ctx.cfg.k, ctx.index.size()));
        }
        if (hits.empty()) {
            MatchDecision d;
            d.query_id = qid;
            d.stage = "reason";
            decisions[i] = std::move(d);
            return;
        }

        auto qit = ctx.query_by_id.find(qid);
        const FeatureSummary* query_summary =
            qit == ctx.query_by_id.end() ? nullptr : qit->second;
        reason::SelectRequest req;
        req.query_id = qid;
        req.query_text = query_summary ? summary_text(*query_summary) : std::string();
        for (const auto& h : hits)
            req.shortlist.push_back(
                {h.candidate_id, shortlist_text(ctx, query_summary, h.candidate_id), h.cosine});

        MatchDecision d;
        try {
            const reason::Selection sel = reason::select_stage(req, *ctx.judge);
            std::string selected_text;
            if (sel.candidate_id) {
                for (const auto& e : req.shortlist)
                    if (e.candidate_id == *sel.candidate_id) selected_text = e.text;
            }
            if (ctx.cfg.use_verify) {
                d = reason::verify_stage(qid, req.query_text, sel.candidate_id, selected_text,
                                         *ctx.judge);
            } else {
                d.query_id = qid;
                d.stage = "reason";
                if (sel.candidate_id) {
                    d.guess = sel.candidate_id;
                    d.confidence = sel.confidence;
                    d.scores[score::judge_confidence] = sel.confidence;
                }
            }
        } catch (const TransportError& e) {
            // Per-query transport failure: record it and abstain; the run
            // continues.
            d = MatchDecision{};
            d.query_id = qid;
            d.stage = "reason";
            failures[i] = e.what();
        }
        if (d.is_guess()) {
            for (const auto& h : hits) {
                if (h.candidate_id == *d.guess) {
                    d.scores[score::similarity] = h.cosine;
                    break;
                }
            }
            d.scores[score::top2_gap] =
                hits.size() > 1 ? hits[0].cosine - hits[1].cosine : hits[0].cosine;
        }
        decisions[i] = std::move(d);
    });
    if (failed_queries) {
        for (std::size_t i = 0; i < failures.size(); ++i)
            if (!failures[i].empty())
                failed_queries->push_back(query_ids[i] + ": " + failures[i]);
    }
    return decisions;
}

std::map<std::string, std::string> summary_texts(const std::vector<FeatureSummary>& ss) {
    std::map<std::string, std::string> out;
    for (const auto& s : ss) out.emplace(s.profile_id, summary_text(s));
    return out;
}

} // namespace

std::vector<MatchDecision> match_baseline(const PipelineContext& ctx,
                                          std::vector<RankedRow>* rankings) {
    return baseline_decisions(ctx, sorted_query_ids(ctx.dataset), nullptr, rankings);
}

void write_baseline_table(const PipelineContext& ctx, const std::filesystem::path& path) {
    ordered_json counts = ordered_json::object();
    if (ctx.cfg.pipeline == PipelineKind::baseline_jaccard) {
        std::vector<FeatureSummary> all = ctx.query_summaries;
        all.insert(all.end(), ctx.candidate_summaries.begin(), ctx.candidate_summaries.end());
        for (auto& s : all)
            if (s.kind != SummaryKind::attributes) {
                s.attributes = s.traits;
                s.kind = SummaryKind::attributes;
            }
        for (const auto& [f, c] : baselines::AttributeVocabulary::from_summaries(all).counts)
            counts[f] = c;
    } else if (ctx.cfg.pipeline == PipelineKind::baseline_movies) {
        std::map<std::string, std::int64_t> titles;
        for (const auto* side : {&ctx.query_summaries, &ctx.candidate_summaries})
            for (const auto& s : *side)
                for (const auto& r : s.reviews) ++titles[r.title];
        for (const auto& [t, c] : titles) counts[t] = c;
    } else {
        for (const auto& [community, users] :
             baselines::SubredditUniverse::from_candidates(ctx.dataset.candidates).user_counts)
            counts[community] = users;
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << counts.dump(2) << '\n';
}

std::vector<MatchDecision> match_search(const PipelineContext& ctx) {
    return search_decisions(ctx, sorted_query_ids(ctx.dataset), nullptr);
}

std::vector<MatchDecision> match_reason(const PipelineContext& ctx,
                                        std::vector<std::string>* failed_queries) {
    return reason_decisions(ctx, sorted_query_ids(ctx.dataset), nullptr, failed_queries);
}

std::vector<MatchDecision> run_match(const PipelineContext& ctx,
                                     std::vector<calibrate::TranscriptEntry>* transcript,
                                     std::vector<std::string>* failed_queries) {
    const PipelineKind kind = ctx.cfg.pipeline;
    if (is_baseline(kind))
        return calibrate::confidence_order(match_baseline(ctx), resolved_source(ctx.cfg));
    if (kind == PipelineKind::search_only)
        return calibrate::confidence_order(match_search(ctx), resolved_source(ctx.cfg));

    std::vector<MatchDecision> decisions = match_reason(ctx, failed_queries);
    if (kind == PipelineKind::search_reason)
        return calibrate::confidence_order(decisions, score::judge_confidence);

    std::size_t guesses = 0;
    for (const auto& d : decisions)
        if (d.is_guess()) ++guesses;
    if (guesses < 2) return calibrate::confidence_order(decisions, score::judge_confidence);

    calibrate::TournamentConfig tcfg = ctx.cfg.tournament;
    tcfg.seed = derive_seed(ctx.cfg.seed, "calibrate");
    tcfg.jobs = ctx.cfg.jobs;
    calibrate::TournamentResult result =
        calibrate::tournament_sort(decisions, *ctx.judge, tcfg,
                                   summary_texts(ctx.query_summaries),
                                   summary_texts(ctx.candidate_summaries));
    if (transcript) *transcript = std::move(result.transcript);
    return result.decisions;
}

eval::PoolMatcher make_pool_matcher(const PipelineContext& ctx) {
    const PipelineContext* c = &ctx;
    return [c](const TruthMap&, const std::map<std::string, std::vector<std::string>>& pools) {
        std::vector<std::string> query_ids;
        query_ids.reserve(pools.size());
        for (const auto& [qid, _] : pools) query_ids.push_back(qid);

        const PipelineKind kind = c->cfg.pipeline;
        if (is_baseline(kind)) return baseline_decisions(*c, query_ids, &pools, nullptr);
        if (kind == PipelineKind::search_only) return search_decisions(*c, query_ids, &pools);

        std::vector<MatchDecision> decisions = reason_decisions(*c, query_ids, &pools);
        for (auto& d : decisions)
            if (d.is_guess()) d.confidence = d.scores.at(score::judge_confidence);
        if (kind == PipelineKind::search_reason) return decisions;

        std::size_t guesses = 0;
        for (const auto& d : decisions)
            if (d.is_guess()) ++guesses;
        if (guesses < 2) return decisions;
        calibrate::TournamentConfig tcfg = c->cfg.tournament;
        tcfg.seed = derive_seed(c->cfg.seed, "calibrate");
        tcfg.jobs = c->cfg.jobs;
        return calibrate::tournament_sort(decisions, *c->judge, tcfg).decisions;
    };
}

nlohmann::ordered_json make_report(const std::vector<MatchDecision>& ordered,
                                   const TruthMap& truth,
                                   const std::vector<double>& targets) {
    const eval::EvalRates rates = eval::compute_rates(ordered, truth);
    const std::vector<eval::PRPoint> curve = eval::pr_curve(ordered, truth);

    ordered_json j;
    j["decisions"] = ordered.size();
    j["m_matchable"] = rates.m_matchable;
    j["n_nonmatchable"] = rates.n_nonmatchable;
    j["rates"] = {{"tpr", rates.tpr ? ordered_json(*rates.tpr) : ordered_json(nullptr)},
                  {"fmr", rates.fmr ? ordered_json(*rates.fmr) : ordered_json(nullptr)},
                  {"fpir", rates.fpir ? ordered_json(*rates.fpir) : ordered_json(nullptr)}};

    ordered_json recall_rows = ordered_json::array();
    for (double target : targets) {
        const double recall = eval::recall_at_precision(curve, target);
        ordered_json row;
        row["target_precision"] = target;
        row["recall"] = recall;
        if (rates.m_matchable > 0) {
            const auto successes = static_cast<std::int64_t>(
                std::llround(recall * static_cast<double>(rates.m_matchable)));
            const auto [lo, hi] =
                eval::wilson_ci(successes, static_cast<std::int64_t>(rates.m_matchable));
            row["successes"] = successes;
            row["wilson_low"] = lo;
            row["wilson_high"] = hi;
        }
        recall_rows.push_back(std::move(row));
    }
    j["recall_at_precision"] = std::move(recall_rows);

    if (rates.n_nonmatchable > 0) {
        ordered_json sweep = ordered_json::array();
        for (double pi : {1.0, 0.5, 0.1, 0.01, 0.001, 0.0001}) {
            const auto p = eval::precision_of_pi(rates, pi);
            sweep.push_back({{"pi", pi},
                             {"precision", p ? ordered_json(*p) : ordered_json(nullptr)}});
        }
        j["pi_sweep"] = std::move(sweep);
    }
    return j;
}

void write_pr_csv(const std::vector<eval::PRPoint>& curve, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << "threshold,precision,recall\n";
    out.precision(17);
    for (const auto& p : curve)
        out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

void write_rankings_csv(const std::vector<RankedRow>& rows, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << "query_id,rank,candidate_id,score\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.query_id << ',' << r.rank << ',' << r.candidate_id << ',' << r.score << '\n';
}

void write_scaling_csv(const std::vector<eval::ScalingRow>& rows,
                       const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << "size,draw,target_precision,recall\n";
    out.precision(17);
    for (const auto& r : rows)
        for (const auto& [target, recall] : r.recall_at)
            out << r.size << ',' << r.draw << ',' << target << ',' << recall << '\n';
}

int run(const RunConfig& cfg) {
    ordered_json manifest;
    manifest["artifact_version"] = kArtifactVersion;
    manifest["config"] = config_to_json(cfg);
    ordered_json stages = ordered_json::array();

    auto write_manifest = [&] {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream out(cfg.out_dir / "manifest.json", std::ios::trunc);
        manifest["stages"] = stages;
        out << manifest.dump(2) << '\n';
    };
    auto fail = [&](const std::string& stage, const std::string& what) {
        stages.push_back({{"name", stage}, {"status", "failed"}, {"error", what}});
        write_manifest();
        return 1;
    };
    auto ok = [&](const std::string& stage, std::vector<std::string> outputs) {
        stages.push_back({{"name", stage}, {"status", "ok"}, {"outputs", outputs}});
    };

    try {
        validate_config(cfg);
    } catch (const std::exception& e) {
        return fail("config", e.what());
    }
    std::filesystem::create_directories(cfg.out_dir);

    PipelineContext ctx;
    try {
        ctx.cfg = cfg;
        ctx.dataset = stage_dataset(cfg);
        if (cfg.synth) {
            write_dataset(ctx.dataset, cfg.out_dir / "dataset.jsonl");
            ok("datagen", {"dataset.jsonl"});
        } else {
            ok("datagen", {});
        }
    } catch (const std::exception& e) {
        return fail("datagen", e.what());
    }

    try {
        Summaries s = stage_extract(cfg, ctx.dataset);
        ctx.query_summaries = std::move(s.queries);
        ctx.candidate_summaries = std::move(s.candidates);
        for (const auto& q : ctx.query_summaries) ctx.query_by_id.emplace(q.profile_id, &q);
        for (const auto& c : ctx.candidate_summaries)
            ctx.candidate_by_id.emplace(c.profile_id, &c);
        write_summaries(ctx.query_summaries, cfg.out_dir / "summaries_queries.jsonl");
        write_summaries(ctx.candidate_summaries, cfg.out_dir / "summaries_candidates.jsonl");
        if (!s.refused.empty()) manifest["refused_profiles"] = s.refused;
        ok("extract", {"summaries_queries.jsonl", "summaries_candidates.jsonl"});
    } catch (const std::exception& e) {
        return fail("extract", e.what());
    }

    try {
        ctx.embedder = make_embedder(cfg);
        ctx.judge = make_judge(cfg, ctx.dataset.truth);
        if (uses_search(cfg.pipeline)) {
            ctx.index = search::build_index(ctx.candidate_summaries, *ctx.embedder);
            search::save_index(ctx.index, cfg.out_dir / "index.bin");
            ok("search", {"index.bin"});
        } else {
            ok("search", {});
        }
    } catch (const std::exception& e) {
        return fail("search", e.what());
    }

    std::vector<MatchDecision> ordered;
    try {
        std::vector<calibrate::TranscriptEntry> transcript;
        std::vector<std::string> failed_queries;
        ordered = run_match(ctx, &transcript, &failed_queries);
        write_decisions(ordered, cfg.out_dir / "decisions.jsonl");
        if (!failed_queries.empty()) manifest["judge_failures"] = failed_queries;
        std::vector<std::string> outputs = {"decisions.jsonl"};
        if (is_baseline(cfg.pipeline)) {
            write_baseline_table(ctx, cfg.out_dir / "rarity_table.json");
            outputs.push_back("rarity_table.json");
        }
        if (!transcript.empty()) {
            std::ofstream out(cfg.out_dir / "transcript.jsonl", std::ios::trunc);
            for (const auto& t : transcript) {
                ordered_json tj = {{"round", t.round},
                                   {"pair_a", t.pair_a},
                                   {"pair_b", t.pair_b},
                                   {"winner", std::string(1, t.winner)}};
                out << tj.dump() << '\n';
            }
            outputs.push_back("transcript.jsonl");
        }
        ok("match", outputs);
    } catch (const std::exception& e) {
        return fail("match", e.what());
    }

    try {
        const eval::EvalRates rates = eval::compute_rates(ordered, ctx.dataset.truth);
        ordered_json rates_json = {
            {"tpr", rates.tpr ? ordered_json(*rates.tpr) : ordered_json(nullptr)},
            {"fmr", rates.fmr ? ordered_json(*rates.fmr) : ordered_json(nullptr)},
            {"fpir", rates.fpir ? ordered_json(*rates.fpir) : ordered_json(nullptr)},
            {"m_matchable", rates.m_matchable},
            {"n_nonmatchable", rates.n_nonmatchable}};
        std::ofstream rout(cfg.out_dir / "rates.json", std::ios::trunc);
        rout << rates_json.dump(2) << '\n';
        write_pr_csv(eval::pr_curve(ordered, ctx.dataset.truth), cfg.out_dir / "pr_curve.csv");
        ok("eval", {"rates.json", "pr_curve.csv"});
    } catch (const std::exception& e) {
        return fail("eval", e.what());
    }

    try {
        const ordered_json report =
            make_report(ordered, ctx.dataset.truth, cfg.precision_targets);
        std::ofstream out(cfg.out_dir / "report.json", std::ios::trunc);
        out << report.dump(2) << '\n';
        ok("report", {"report.json"});
    } catch (const std::exception& e) {
        return fail("report", e.what());
    }

    write_manifest();
    return 0;
}

} // namespace linkage::pipeline
