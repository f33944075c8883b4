// linkage: record-linkage evaluation pipelines over pseudonymous profile
// datasets with verifiable ground truth.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "linkage/calibrate.hpp"
#include "linkage/datagen.hpp"
#include "linkage/errors.hpp"
#include "linkage/evals.hpp"
#include "linkage/jsonl.hpp"
#include "linkage/pipeline.hpp"
#include "linkage/remote.hpp"
#include "linkage/rng.hpp"
#include "linkage/text.hpp"
#include "linkage/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace linkage;

namespace {

std::vector<double> parse_targets(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
    std::vector<std::size_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    return out;
}

struct CommonOverrides {
    std::optional<std::uint64_t> seed;
    bool offline = false;
    std::optional<int> jobs;
    std::optional<std::string> out;
    std::optional<std::string> pipeline;
    std::optional<std::size_t> k;
    std::optional<std::string> targets;
};

pipeline::RunConfig load_with_overrides(const std::string& config_path,
                                        const CommonOverrides& o) {
    pipeline::RunConfig cfg = pipeline::load_run_config(config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.offline) cfg.offline = true;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.out) cfg.out_dir = *o.out;
    if (o.pipeline) cfg.pipeline = pipeline::pipeline_from_name(*o.pipeline);
    if (o.k) cfg.k = *o.k;
    if (o.targets) cfg.precision_targets = parse_targets(*o.targets);
    return cfg;
}

void add_overrides(CLI::App* cmd, CommonOverrides& o, bool with_out = true) {
    cmd->add_option("--seed", o.seed, "root seed, expanded per stage");
    cmd->add_flag("--offline", o.offline,
                  "forbid network backends; use deterministic offline ones");
    cmd->add_option("--jobs", o.jobs, "worker thread bound");
    if (with_out) cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--pipeline", o.pipeline, "pipeline name");
    cmd->add_option("--k", o.k, "shortlist size for the reason stage");
    cmd->add_option("--precision-targets", o.targets,
                    "comma-separated targets, e.g. 0.90,0.98,0.99");
}

int cmd_datagen(const std::string& config_path, const std::string& out_path,
                std::optional<std::uint64_t> seed, bool dump_lexicons) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config: " + config_path);
    ordered_json j = ordered_json::parse(in);
    const std::string mode = j.value("mode", std::string("synth"));

    Dataset d;
    if (mode == "synth") {
        datagen::SynthConfig cfg;
        cfg.seed = j.value("seed", std::uint64_t{0});
        if (seed) cfg.seed = *seed;
        cfg.n_matchable = j.value("n_matchable", std::size_t{100});
        cfg.n_candidate_distractors = j.value("n_candidate_distractors", std::size_t{0});
        cfg.n_query_distractors = j.value("n_query_distractors", std::size_t{0});
        cfg.trait_pool_size = j.value("trait_pool_size", std::size_t{200});
        cfg.traits_per_user = j.value("traits_per_user", std::size_t{8});
        cfg.trait_persistence = j.value("trait_persistence", 0.7);
        cfg.noise_traits_per_half = j.value("noise_traits_per_half", std::size_t{2});
        d = datagen::synth_generate(cfg);
        if (dump_lexicons) {
            const fs::path base = fs::path(out_path).parent_path();
            auto dump = [&](const std::map<std::string, std::string>& lex,
                            const std::string& name) {
                ordered_json lj;
                for (const auto& [tag, keyword] : lex) lj[tag] = keyword;
                std::ofstream lout(base / name, std::ios::trunc);
                lout << lj.dump(2) << '\n';
            };
            dump(datagen::synth_trait_lexicon(cfg), "trait_lexicon.json");
            dump(datagen::synth_attribute_lexicon(cfg), "attribute_lexicon.json");
        }
    } else if (mode == "temporal_split" || mode == "community_split") {
        const Dataset raw = load_dataset(j.at("input").get<std::string>());
        std::vector<Profile> profiles = raw.queries;
        profiles.insert(profiles.end(), raw.candidates.begin(), raw.candidates.end());

        std::set<std::string> excluded;
        if (j.contains("exclusion_list") && !j.at("exclusion_list").is_null()) {
            std::ifstream ex(j.at("exclusion_list").get<std::string>());
            if (!ex) throw ConfigError("cannot open exclusion list");
            std::string name;
            while (std::getline(ex, name))
                if (!name.empty()) excluded.insert(text::to_lower(name));
        }
        const bool apply_filters = j.value("apply_author_filters", false);

        for (const auto& p : profiles) {
            if (apply_filters) {
                const auto stats = datagen::AuthorStats::from_profile(p);
                if (!datagen::author_passes_filters(stats, p.profile_id, excluded)) continue;
            }
            std::optional<datagen::SplitResult> split;
            if (mode == "temporal_split") {
                datagen::SplitSpec spec;
                spec.gap_days = j.value("gap_days", std::int64_t{365});
                spec.min_side = j.value("min_side", std::size_t{100});
                split = datagen::temporal_split(p, spec);
            } else {
                const auto main_set = j.at("main").get<std::set<std::string>>();
                const auto alt_set = j.at("alt").get<std::set<std::string>>();
                const auto catalog = pipeline::load_catalog(j.at("catalog").get<std::string>());
                split = datagen::community_split(p, main_set, alt_set,
                                                 j.value("min_overlap", std::size_t{1}), catalog);
            }
            if (!split) continue;
            d.truth.emplace(split->query_half.profile_id, split->candidate_half.profile_id);
            d.queries.push_back(std::move(split->query_half));
            d.candidates.push_back(std::move(split->candidate_half));
        }
    } else {
        throw ConfigError("unknown datagen mode: " + mode);
    }

    auto by_id = [](const Profile& a, const Profile& b) { return a.profile_id < b.profile_id; };
    std::sort(d.queries.begin(), d.queries.end(), by_id);
    std::sort(d.candidates.begin(), d.candidates.end(), by_id);
    write_dataset(d, out_path);
    std::cout << "wrote " << d.queries.size() << " queries, " << d.candidates.size()
              << " candidates, " << d.truth.size() << " truth links (pi=" << d.match_prior()
              << ") to " << out_path << "\n";
    return 0;
}

int cmd_extract(const std::string& dataset_path, const std::string& out_path,
                const std::string& kind_name, const std::optional<std::string>& lexicon_path,
                const std::optional<std::string>& catalog_path,
                const std::optional<std::string>& endpoint, const std::string& template_id,
                int jobs) {
    const Dataset d = load_dataset(dataset_path);
    std::vector<Profile> profiles = d.queries;
    profiles.insert(profiles.end(), d.candidates.begin(), d.candidates.end());

    std::vector<FeatureSummary> summaries;
    if (endpoint) {
        remote::HttpExtractorBackend backend(*endpoint);
        std::vector<std::string> refused;
        summaries = pipeline::extract_with_backend(profiles, backend, template_id, jobs, &refused);
        if (!refused.empty())
            std::cerr << refused.size() << " profile(s) dropped after backend refusal\n";
    } else {
        const SummaryKind kind = summary_kind_from_name(kind_name);
        std::map<std::string, std::string> lexicon;
        std::vector<std::string> catalog;
        if (kind == SummaryKind::reviews) {
            if (!catalog_path) throw ConfigError("reviews extraction needs --catalog");
            catalog = pipeline::load_catalog(*catalog_path);
        } else {
            if (!lexicon_path) throw ConfigError("offline extraction needs --lexicon");
            lexicon = pipeline::load_lexicon(*lexicon_path);
        }
        summaries = pipeline::extract_offline(profiles, kind, lexicon, catalog, jobs);
    }
    write_summaries(summaries, out_path);
    std::cout << "wrote " << summaries.size() << " summaries to " << out_path << "\n";
    return 0;
}

int cmd_match(const pipeline::RunConfig& cfg, bool dump_rankings) {
    pipeline::PipelineContext ctx = pipeline::build_context(cfg);
    std::vector<calibrate::TranscriptEntry> transcript;
    const std::vector<MatchDecision> ordered = pipeline::run_match(ctx, &transcript);
    fs::create_directories(cfg.out_dir);
    write_decisions(ordered, cfg.out_dir / "decisions.jsonl");
    if (dump_rankings && pipeline::is_baseline(cfg.pipeline)) {
        std::vector<pipeline::RankedRow> rows;
        pipeline::match_baseline(ctx, &rows);
        pipeline::write_rankings_csv(rows, cfg.out_dir / "rankings.csv");
    }
    std::cout << "wrote " << ordered.size() << " decisions to "
              << (cfg.out_dir / "decisions.jsonl").string() << "\n";
    return 0;
}

int cmd_calibrate(const std::string& decisions_path, const std::string& dataset_path,
                  const std::string& out_dir, int rounds, std::uint64_t seed,
                  const std::optional<std::string>& judge_endpoint) {
    const std::vector<MatchDecision> decisions = load_decisions(decisions_path);
    const Dataset d = load_dataset(dataset_path);

    std::unique_ptr<reason::JudgeBackend> judge;
    if (judge_endpoint) {
        judge = std::make_unique<remote::HttpJudge>(*judge_endpoint);
    } else {
        reason::OracleJudgeConfig oracle;
        oracle.seed = derive_seed(seed, "calibrate");
        judge = std::make_unique<reason::OracleJudge>(oracle, d.truth);
    }
    calibrate::TournamentConfig tcfg;
    tcfg.rounds = rounds;
    tcfg.seed = seed;
    const calibrate::TournamentResult result =
        calibrate::tournament_sort(decisions, *judge, tcfg);

    fs::create_directories(out_dir);
    write_decisions(result.decisions, fs::path(out_dir) / "decisions_calibrated.jsonl");
    std::ofstream tout(fs::path(out_dir) / "transcript.jsonl", std::ios::trunc);
    for (const auto& t : result.transcript) {
        ordered_json tj = {{"round", t.round},
                           {"pair_a", t.pair_a},
                           {"pair_b", t.pair_b},
                           {"winner", std::string(1, t.winner)}};
        tout << tj.dump() << '\n';
    }
    std::cout << "tournament finished; " << result.transcript.size() << " comparisons, "
              << result.skipped_comparisons << " skipped\n";
    return 0;
}

int cmd_eval(const std::string& decisions_path, const std::string& dataset_path,
             const std::string& out_dir, const std::optional<std::string>& scaling_sizes,
             std::size_t draws, const std::optional<std::string>& config_path,
             const std::optional<std::string>& fit_exclude,
             const std::optional<std::string>& extrapolate_sizes,
             std::optional<std::size_t> topk_recall, const CommonOverrides& o) {
    const Dataset d = load_dataset(dataset_path);
    const std::vector<MatchDecision> decisions = load_decisions(decisions_path);

    fs::create_directories(out_dir);
    const eval::EvalRates rates = eval::compute_rates(decisions, d.truth);
    ordered_json rates_json = {
        {"tpr", rates.tpr ? ordered_json(*rates.tpr) : ordered_json(nullptr)},
        {"fmr", rates.fmr ? ordered_json(*rates.fmr) : ordered_json(nullptr)},
        {"fpir", rates.fpir ? ordered_json(*rates.fpir) : ordered_json(nullptr)},
        {"m_matchable", rates.m_matchable},
        {"n_nonmatchable", rates.n_nonmatchable}};
    std::ofstream rout(fs::path(out_dir) / "rates.json", std::ios::trunc);
    rout << rates_json.dump(2) << '\n';
    pipeline::write_pr_csv(eval::pr_curve(decisions, d.truth),
                           fs::path(out_dir) / "pr_curve.csv");

    if (topk_recall) {
        if (!config_path) throw ConfigError("--topk-recall needs --config for the pipeline");
        const pipeline::RunConfig cfg = load_with_overrides(*config_path, o);
        pipeline::PipelineContext ctx = pipeline::build_context(cfg);
        const auto curve = search::topk_recall_curve(ctx.query_summaries, ctx.dataset.truth,
                                                     ctx.index, *ctx.embedder, *topk_recall);
        std::ofstream kout(fs::path(out_dir) / "topk_recall.csv", std::ios::trunc);
        kout << "k,recall\n";
        kout.precision(17);
        for (const auto& p : curve) kout << p.k << ',' << p.recall << '\n';
    }

    if (scaling_sizes) {
        if (!config_path) throw ConfigError("--scaling-sizes needs --config for the pipeline");
        const pipeline::RunConfig cfg = load_with_overrides(*config_path, o);
        pipeline::PipelineContext ctx = pipeline::build_context(cfg);
        const std::vector<std::size_t> sizes = parse_sizes(*scaling_sizes);
        const std::vector<eval::ScalingRow> rows = eval::pool_scaling_study(
            ctx.dataset, pipeline::make_pool_matcher(ctx), sizes, draws,
            derive_seed(cfg.seed, "eval"));
        pipeline::write_scaling_csv(rows, fs::path(out_dir) / "scaling.csv");

        // Per-size mean and spread, then a log-linear fit per precision target.
        std::set<std::size_t> excluded;
        if (fit_exclude)
            for (std::size_t s : parse_sizes(*fit_exclude)) excluded.insert(s);
        struct Agg {
            double sum = 0, sumsq = 0, lo = 1e300, hi = -1e300;
            std::size_t count = 0;
        };
        std::map<double, std::vector<std::pair<double, double>>> fit_points;
        std::map<std::size_t, std::map<double, Agg>> agg;
        for (const auto& row : rows)
            for (const auto& [target, recall] : row.recall_at) {
                Agg& a = agg[row.size][target];
                a.sum += recall;
                a.sumsq += recall * recall;
                a.lo = std::min(a.lo, recall);
                a.hi = std::max(a.hi, recall);
                ++a.count;
            }
        ordered_json summary = ordered_json::array();
        for (const auto& [size, per_target] : agg) {
            ordered_json entry = {{"size", size}};
            ordered_json targets_json = ordered_json::array();
            for (const auto& [target, a] : per_target) {
                const double mean = a.sum / static_cast<double>(a.count);
                const double var = a.sumsq / static_cast<double>(a.count) - mean * mean;
                targets_json.push_back({{"target", target},
                                        {"mean_recall", mean},
                                        {"stddev", std::sqrt(std::max(var, 0.0))},
                                        {"min", a.lo},
                                        {"max", a.hi}});
                if (!excluded.count(size))
                    fit_points[target].emplace_back(static_cast<double>(size), mean * 100.0);
            }
            entry["per_target"] = std::move(targets_json);
            summary.push_back(std::move(entry));
        }
        ordered_json fits = ordered_json::array();
        for (const auto& [target, pts] : fit_points) {
            if (pts.size() < 2) continue;
            const eval::ScalingFit fit = eval::loglinear_fit(pts);
            ordered_json fj = {{"target", target}, {"a", fit.slope}, {"b", fit.intercept}};
            if (extrapolate_sizes) {
                ordered_json ext = ordered_json::array();
                for (std::size_t n : parse_sizes(*extrapolate_sizes))
                    ext.push_back({{"size", n},
                                   {"recall_percent",
                                    eval::extrapolate(fit, static_cast<double>(n))}});
                fj["extrapolations"] = std::move(ext);
            }
            fits.push_back(std::move(fj));
        }
        ordered_json scaling_json = {{"summary", summary}, {"fits", fits}};
        std::ofstream sout(fs::path(out_dir) / "scaling_summary.json", std::ios::trunc);
        sout << scaling_json.dump(2) << '\n';
    }
    std::cout << "eval artifacts written to " << out_dir << "\n";
    return 0;
}

int cmd_report(const std::string& decisions_path, const std::string& dataset_path,
               const std::string& targets_csv, const std::string& out_path) {
    const Dataset d = load_dataset(dataset_path);
    std::vector<MatchDecision> decisions = load_decisions(decisions_path);

    std::set<std::string> known;
    for (const auto& q : d.queries) known.insert(q.profile_id);
    for (const auto& dec : decisions)
        if (!known.count(dec.query_id))
            throw ValidationError("decision names unknown query: " + dec.query_id);

    std::sort(decisions.begin(), decisions.end(),
              [](const MatchDecision& a, const MatchDecision& b) {
                  const double ca =
                      a.confidence.value_or(-std::numeric_limits<double>::infinity());
                  const double cb =
                      b.confidence.value_or(-std::numeric_limits<double>::infinity());
                  if (ca != cb) return ca > cb;
                  return a.query_id < b.query_id;
              });
    const ordered_json report =
        pipeline::make_report(decisions, d.truth, parse_targets(targets_csv));
    if (out_path == "-") {
        std::cout << report.dump(2) << "\n";
    } else {
        fs::path p(out_path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::trunc);
        out << report.dump(2) << '\n';
        std::cout << "report written to " << out_path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"record-linkage evaluation framework"};
    app.set_version_flag("--version", kArtifactVersion);
    app.require_subcommand(1);

    auto* datagen_cmd = app.add_subcommand("datagen", "generate or split a ground-truth dataset");
    std::string dg_config, dg_out = "dataset.jsonl";
    std::optional<std::uint64_t> dg_seed;
    bool dg_lexicons = false;
    datagen_cmd->add_option("--config", dg_config, "datagen config JSON")->required();
    datagen_cmd->add_option("--out", dg_out, "output dataset JSONL");
    datagen_cmd->add_option("--seed", dg_seed, "override generator seed");
    datagen_cmd->add_flag("--lexicons", dg_lexicons,
                          "also write the generator's trait/attribute lexicons (synth mode)");

    auto* extract_cmd = app.add_subcommand("extract", "extract feature summaries");
    std::string ex_dataset, ex_out = "summaries.jsonl", ex_kind = "traits",
                ex_template = "default";
    std::optional<std::string> ex_lexicon, ex_catalog, ex_endpoint;
    int ex_jobs = 1;
    extract_cmd->add_option("--dataset", ex_dataset, "dataset JSONL")->required();
    extract_cmd->add_option("--out", ex_out, "output summaries JSONL");
    extract_cmd->add_option("--kind", ex_kind, "traits|reviews|attributes");
    extract_cmd->add_option("--lexicon", ex_lexicon,
                            "tag->keyword JSON map for offline extraction");
    extract_cmd->add_option("--catalog", ex_catalog, "title list for reviews extraction");
    extract_cmd->add_option("--endpoint", ex_endpoint, "remote extractor base URL");
    extract_cmd->add_option("--template-id", ex_template, "remote template id");
    extract_cmd->add_option("--jobs", ex_jobs, "worker thread bound");

    auto* match_cmd = app.add_subcommand("match", "run a matching pipeline to decisions");
    std::string m_config;
    bool m_rankings = false;
    CommonOverrides m_over;
    match_cmd->add_option("--config", m_config, "run config JSON")->required();
    match_cmd->add_flag("--rankings", m_rankings, "also dump full baseline rankings CSV");
    add_overrides(match_cmd, m_over);

    auto* cal_cmd = app.add_subcommand("calibrate", "tournament-sort existing decisions");
    std::string c_decisions, c_dataset, c_out = "out";
    int c_rounds = 15;
    std::uint64_t c_seed = 0;
    std::optional<std::string> c_judge;
    cal_cmd->add_option("--decisions", c_decisions, "decisions JSONL")->required();
    cal_cmd->add_option("--dataset", c_dataset, "dataset JSONL (oracle truth)")->required();
    cal_cmd->add_option("--out", c_out, "output directory");
    cal_cmd->add_option("--rounds", c_rounds, "tournament rounds");
    cal_cmd->add_option("--seed", c_seed, "seed");
    cal_cmd->add_option("--judge-endpoint", c_judge, "remote comparator base URL");

    auto* eval_cmd = app.add_subcommand("eval", "metrics and scaling studies");
    std::string e_decisions, e_dataset, e_out = "out";
    std::optional<std::string> e_sizes, e_config, e_exclude, e_extrapolate;
    std::size_t e_draws = 3;
    CommonOverrides e_over;
    eval_cmd->add_option("--decisions", e_decisions, "decisions JSONL")->required();
    eval_cmd->add_option("--dataset", e_dataset, "dataset JSONL")->required();
    eval_cmd->add_option("--out", e_out, "output directory");
    eval_cmd->add_option("--scaling-sizes", e_sizes, "comma-separated pool sizes");
    eval_cmd->add_option("--draws", e_draws, "random pool draws per size");
    eval_cmd->add_option("--config", e_config, "run config for the scaling method");
    eval_cmd->add_option("--fit-exclude", e_exclude, "sizes excluded from the log-linear fit");
    eval_cmd->add_option("--extrapolate", e_extrapolate, "pool sizes to extrapolate recall to");
    std::optional<std::size_t> e_topk;
    eval_cmd->add_option("--topk-recall", e_topk,
                         "write the shortlist top-k recall curve up to this k (needs --config)");
    add_overrides(eval_cmd, e_over, /*with_out=*/false);

    auto* report_cmd = app.add_subcommand("report", "recall@precision with intervals");
    std::string r_decisions, r_dataset, r_targets = "0.90,0.98,0.99", r_out = "-";
    report_cmd->add_option("--decisions", r_decisions, "decisions JSONL")->required();
    report_cmd->add_option("--dataset", r_dataset, "dataset JSONL")->required();
    report_cmd->add_option("--precision-targets", r_targets, "comma-separated targets");
    report_cmd->add_option("--out", r_out, "output path or - for stdout");

    auto* run_cmd =
        app.add_subcommand("run", "full pipeline: generate/extract/match/eval/report");
    std::string run_config;
    CommonOverrides run_over;
    run_cmd->add_option("--config", run_config, "run config JSON")->required();
    add_overrides(run_cmd, run_over);

    CLI11_PARSE(app, argc, argv);

    try {
        if (datagen_cmd->parsed()) return cmd_datagen(dg_config, dg_out, dg_seed, dg_lexicons);
        if (extract_cmd->parsed())
            return cmd_extract(ex_dataset, ex_out, ex_kind, ex_lexicon, ex_catalog, ex_endpoint,
                               ex_template, ex_jobs);
        if (match_cmd->parsed())
            return cmd_match(load_with_overrides(m_config, m_over), m_rankings);
        if (cal_cmd->parsed())
            return cmd_calibrate(c_decisions, c_dataset, c_out, c_rounds, c_seed, c_judge);
        if (eval_cmd->parsed())
            return cmd_eval(e_decisions, e_dataset, e_out, e_sizes, e_draws, e_config, e_exclude,
                            e_extrapolate, e_topk, e_over);
        if (report_cmd->parsed()) return cmd_report(r_decisions, r_dataset, r_targets, r_out);
        if (run_cmd->parsed()) return pipeline::run(load_with_overrides(run_config, run_over));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
