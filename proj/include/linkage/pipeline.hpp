#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "linkage/calibrate.hpp"
#include "linkage/datagen.hpp"
#include "linkage/embed.hpp"
#include "linkage/evals.hpp"
#include "linkage/extract.hpp"
#include "linkage/reason.hpp"
#include "linkage/search_index.hpp"
#include "linkage/types.hpp"

namespace linkage::pipeline {

enum class PipelineKind {
    baseline_jaccard,
    baseline_movies,
    baseline_subreddit,
    search_only,
    search_reason,
    search_reason_calibrate,
};

PipelineKind pipeline_from_name(const std::string& name);
const char* pipeline_name(PipelineKind kind);
bool is_baseline(PipelineKind kind);
bool uses_search(PipelineKind kind);
bool uses_reason(PipelineKind kind);

struct BackendEndpoints {
    std::string embedder;
    std::string extractor;
    std::string judge;

    bool any() const { return !embedder.empty() || !extractor.empty() || !judge.empty(); }
};

// Full experiment description. Everything an offline run touches is derived
// from `seed`, expanded per stage, so stages can be re-run in isolation.
struct RunConfig {
    std::optional<std::string> dataset_path;          // either a dataset file...
    std::optional<datagen::SynthConfig> synth;        // ...or a generator config
    PipelineKind pipeline = PipelineKind::search_only;
    std::size_t k = 15;
    calibrate::TournamentConfig tournament;
    bool offline = true;
    BackendEndpoints endpoints;
    reason::OracleJudgeConfig oracle;                 // offline judge behavior
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    int jobs = 1;
    std::vector<double> precision_targets = {0.90, 0.98, 0.99};
    std::string confidence_source;                    // search/baseline ordering; default top2_gap
    bool shared_title_projection = false;
    bool use_verify = true;    // false: the select choice becomes the guess directly
    int embed_dim = 256;
    std::optional<SummaryKind> extract_kind;          // default depends on the pipeline
    std::optional<std::string> lexicon_path;          // offline extraction lexicon (JSON map)
    std::optional<std::string> catalog_path;          // known titles, one per line
};

// attributes for the Jaccard baseline, reviews for the movie baseline,
// traits otherwise, unless the config overrides.
SummaryKind resolved_extract_kind(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

// Rejects contradictory configs before any work (offline mode with network
// endpoints, missing dataset source, ...).
void validate_config(const RunConfig& cfg);

std::map<std::string, std::string> load_lexicon(const std::filesystem::path& path);
std::vector<std::string> load_catalog(const std::filesystem::path& path);

// Offline feature extraction over a profile list, parallel over profiles.
std::vector<FeatureSummary> extract_offline(const std::vector<Profile>& profiles,
                                            SummaryKind kind,
                                            const std::map<std::string, std::string>& lexicon,
                                            const std::vector<std::string>& catalog, int jobs);

// Remote feature extraction; profiles whose summaries are refused are
// dropped and their ids returned in `refused`.
std::vector<FeatureSummary> extract_with_backend(const std::vector<Profile>& profiles,
                                                 extract::ExtractorBackend& backend,
                                                 const std::string& template_id, int jobs,
                                                 std::vector<std::string>* refused = nullptr);

// Everything a matching stage needs, with owned backends. Built once per
// run; immutable afterwards.
struct PipelineContext {
    Dataset dataset;
    std::vector<FeatureSummary> query_summaries;
    std::vector<FeatureSummary> candidate_summaries;
    std::map<std::string, const FeatureSummary*> query_by_id;
    std::map<std::string, const FeatureSummary*> candidate_by_id;
    search::SearchIndex index;                        // built for search pipelines
    std::unique_ptr<search::EmbedderBackend> embedder;
    std::unique_ptr<reason::JudgeBackend> judge;
    RunConfig cfg;
};

// Assembles the context: dataset (loaded or generated), summaries, backends
// and, for search pipelines, the index.
PipelineContext build_context(const RunConfig& cfg);

struct RankedRow {
    std::string query_id;
    std::size_t rank = 0;
    std::string candidate_id;
    double score = 0.0;
};

std::vector<MatchDecision> match_baseline(const PipelineContext& ctx,
                                          std::vector<RankedRow>* rankings = nullptr);

// Persists the rarity tables the configured baseline scores against
// (attribute vocabulary, title counts, or community universe) as a JSON map.
void write_baseline_table(const PipelineContext& ctx, const std::filesystem::path& path);
std::vector<MatchDecision> match_search(const PipelineContext& ctx);

// `failed_queries`, when given, collects per-query transport failures (the
// affected query abstains and the run continues).
std::vector<MatchDecision> match_reason(const PipelineContext& ctx,
                                        std::vector<std::string>* failed_queries = nullptr);

// Runs the context's pipeline end to end (including tournament calibration
// when configured) and returns decisions in final confidence order.
std::vector<MatchDecision> run_match(const PipelineContext& ctx,
                                     std::vector<calibrate::TranscriptEntry>* transcript = nullptr,
                                     std::vector<std::string>* failed_queries = nullptr);

// Adapts the configured pipeline to per-query candidate pools for the
// pool-size scaling study.
eval::PoolMatcher make_pool_matcher(const PipelineContext& ctx);

nlohmann::ordered_json make_report(const std::vector<MatchDecision>& ordered,
                                   const TruthMap& truth,
                                   const std::vector<double>& targets);

void write_pr_csv(const std::vector<eval::PRPoint>& curve, const std::filesystem::path& path);
void write_rankings_csv(const std::vector<RankedRow>& rows, const std::filesystem::path& path);
void write_scaling_csv(const std::vector<eval::ScalingRow>& rows,
                       const std::filesystem::path& path);

// Full run: dataset -> extract -> match -> calibrate -> eval -> report, with
// every artifact written under cfg.out_dir and a manifest describing the
// run. Returns 0 on success; failures mark the stage in the manifest and
// return nonzero.
int run(const RunConfig& cfg);

} // namespace linkage::pipeline
