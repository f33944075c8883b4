#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "linkage/errors.hpp"
#include "linkage/evals.hpp"
#include "linkage/jsonl.hpp"
#include "linkage/pipeline.hpp"

using namespace linkage;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

pipeline::RunConfig small_config(pipeline::PipelineKind kind, std::uint64_t seed) {
    pipeline::RunConfig cfg;
    cfg.synth = datagen::SynthConfig{};
    cfg.synth->n_matchable = 30;
    cfg.synth->n_candidate_distractors = 30;
    cfg.synth->n_query_distractors = 20;
    cfg.synth->trait_persistence = 0.7;
    cfg.synth->traits_per_user = 7;
    cfg.synth->trait_pool_size = 150;
    cfg.pipeline = kind;
    cfg.k = 10;
    cfg.seed = seed;
    cfg.oracle.select_accuracy = 0.9;
    cfg.oracle.verify_tpr = 0.95;
    cfg.oracle.verify_fpr = 0.02;
    cfg.tournament.rounds = 10;
    return cfg;
}

} // namespace

TEST_CASE("offline runs are bit-reproducible") {
    const fs::path out_a = fs::temp_directory_path() / "linkage_run_a";
    const fs::path out_b = fs::temp_directory_path() / "linkage_run_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    pipeline::RunConfig cfg = small_config(pipeline::PipelineKind::search_reason_calibrate, 404);
    cfg.out_dir = out_a;
    REQUIRE(pipeline::run(cfg) == 0);
    cfg.out_dir = out_b;
    REQUIRE(pipeline::run(cfg) == 0);

    for (const char* name : {"dataset.jsonl", "decisions.jsonl", "report.json", "rates.json",
                             "pr_curve.csv", "summaries_queries.jsonl", "transcript.jsonl"}) {
        INFO(name);
        CHECK(slurp(out_a / name) == slurp(out_b / name));
        CHECK_FALSE(slurp(out_a / name).empty());
    }

    // Manifests differ only in the out path; normalize it.
    auto manifest = [&](const fs::path& p) {
        auto j = nlohmann::ordered_json::parse(slurp(p / "manifest.json"));
        j["config"]["out"] = "";
        return j;
    };
    CHECK(manifest(out_a) == manifest(out_b));
}

TEST_CASE("offline mode rejects network endpoints before any work") {
    pipeline::RunConfig cfg = small_config(pipeline::PipelineKind::search_only, 1);
    cfg.endpoints.judge = "http://example.invalid";
    CHECK_THROWS_AS(pipeline::validate_config(cfg), ConfigError);

    const fs::path out = fs::temp_directory_path() / "linkage_reject";
    fs::remove_all(out);
    cfg.out_dir = out;
    CHECK(pipeline::run(cfg) != 0);
    const auto manifest = nlohmann::ordered_json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("stages").at(0).at("status") == "failed");
    CHECK_FALSE(fs::exists(out / "decisions.jsonl"));
}

TEST_CASE("config validation catches contradictions") {
    pipeline::RunConfig none;
    CHECK_THROWS_AS(pipeline::validate_config(none), ConfigError);

    pipeline::RunConfig both = small_config(pipeline::PipelineKind::search_only, 2);
    both.dataset_path = "also.jsonl";
    CHECK_THROWS_AS(pipeline::validate_config(both), ConfigError);

    pipeline::RunConfig bad_k = small_config(pipeline::PipelineKind::search_only, 3);
    bad_k.k = 0;
    CHECK_THROWS_AS(pipeline::validate_config(bad_k), ConfigError);

    pipeline::RunConfig bad_source = small_config(pipeline::PipelineKind::search_only, 4);
    bad_source.confidence_source = "vibes";
    CHECK_THROWS_AS(pipeline::validate_config(bad_source), ConfigError);
}

TEST_CASE("the auth token never appears in any output artifact") {
    const fs::path out = fs::temp_directory_path() / "linkage_token";
    fs::remove_all(out);
    const char* token = "super-secret-token-material";
    setenv("LINKAGE_AUTH_TOKEN", token, 1);
    pipeline::RunConfig cfg = small_config(pipeline::PipelineKind::search_reason, 55);
    cfg.out_dir = out;
    REQUIRE(pipeline::run(cfg) == 0);
    unsetenv("LINKAGE_AUTH_TOKEN");

    for (const auto& entry : fs::directory_iterator(out)) {
        INFO(entry.path().string());
        CHECK(slurp(entry.path()).find(token) == std::string::npos);
    }
}

TEST_CASE("manifest is complete enough to re-run the experiment") {
    const fs::path out = fs::temp_directory_path() / "linkage_manifest";
    fs::remove_all(out);
    pipeline::RunConfig cfg = small_config(pipeline::PipelineKind::search_reason, 77);
    cfg.out_dir = out;
    REQUIRE(pipeline::run(cfg) == 0);

    const auto manifest = nlohmann::ordered_json::parse(slurp(out / "manifest.json"));
    const auto& cj = manifest.at("config");
    CHECK(cj.at("seed") == 77);
    CHECK(cj.at("pipeline") == "search_reason");
    CHECK(cj.at("k") == 10);
    CHECK(cj.at("synth").at("n_matchable") == 30);
    CHECK(cj.at("oracle").at("verify_fpr") == doctest::Approx(0.02));
    for (const auto& stage : manifest.at("stages")) CHECK(stage.at("status") == "ok");
}

TEST_CASE("worker count does not change any decision") {
    for (auto kind : {pipeline::PipelineKind::baseline_jaccard,
                      pipeline::PipelineKind::search_only,
                      pipeline::PipelineKind::search_reason_calibrate}) {
        pipeline::RunConfig serial = small_config(kind, 1234);
        pipeline::RunConfig threaded = serial;
        threaded.jobs = 4;

        const auto a = pipeline::run_match(pipeline::build_context(serial));
        const auto b = pipeline::run_match(pipeline::build_context(threaded));
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].query_id == b[i].query_id);
            CHECK(a[i].guess == b[i].guess);
            CHECK(a[i].confidence == b[i].confidence);
            CHECK(a[i].scores == b[i].scores);
        }
    }
}

TEST_CASE("reason pipeline outperforms search alone on planted data") {
    pipeline::RunConfig search_cfg = small_config(pipeline::PipelineKind::search_only, 11);
    pipeline::RunConfig reason_cfg = small_config(pipeline::PipelineKind::search_reason, 11);

    const auto search_ctx = pipeline::build_context(search_cfg);
    const auto reason_ctx = pipeline::build_context(reason_cfg);
    const auto search_run = pipeline::run_match(search_ctx);
    const auto reason_run = pipeline::run_match(reason_ctx);

    const double search_recall = eval::recall_at_precision(
        eval::pr_curve(search_run, search_ctx.dataset.truth), 0.90);
    const double reason_recall = eval::recall_at_precision(
        eval::pr_curve(reason_run, reason_ctx.dataset.truth), 0.90);
    CHECK(reason_recall >= search_recall);
}

namespace {

// Judge whose transport dies for exactly one query.
struct PartiallyDeadJudge final : reason::JudgeBackend {
    std::string dead_query;
    explicit PartiallyDeadJudge(std::string q) : dead_query(std::move(q)) {}
    reason::SelectResponse select(const reason::SelectRequest& req) override {
        if (req.query_id == dead_query) throw TransportError("backend unreachable");
        reason::SelectResponse r;
        r.choice = 1;
        r.confidence = 0.9;
        return r;
    }
    reason::VerifyResponse verify(const reason::VerifyRequest&) override {
        return {true, 0.9};
    }
    reason::CompareWinner compare(const reason::ComparePair&,
                                  const reason::ComparePair&) override {
        return reason::CompareWinner::A;
    }
};

} // namespace

TEST_CASE("a per-query transport failure abstains and is recorded; the run continues") {
    pipeline::RunConfig cfg = small_config(pipeline::PipelineKind::search_reason, 88);
    pipeline::PipelineContext ctx = pipeline::build_context(cfg);
    const std::string victim = ctx.dataset.queries.front().profile_id;
    ctx.judge = std::make_unique<PartiallyDeadJudge>(victim);

    std::vector<std::string> failures;
    const auto decisions = pipeline::match_reason(ctx, &failures);
    REQUIRE(decisions.size() == ctx.dataset.queries.size());
    REQUIRE(failures.size() == 1);
    CHECK(failures[0].find(victim) != std::string::npos);

    std::size_t guesses = 0;
    for (const auto& d : decisions) {
        if (d.query_id == victim) CHECK_FALSE(d.is_guess());
        if (d.is_guess()) ++guesses;
    }
    CHECK(guesses == decisions.size() - 1);
}

TEST_CASE("report fixtures") {
    SUBCASE("perfect run reports full recall with a Wilson interval at n = M") {
        TruthMap truth = {{"q1", "c1"}, {"q2", "c2"}};
        std::vector<MatchDecision> ds;
        for (const auto& [q, c] : truth) {
            MatchDecision d;
            d.query_id = q;
            d.guess = c;
            d.confidence = 0.99;
            d.stage = "reason";
            ds.push_back(d);
        }
        const auto report = pipeline::make_report(ds, truth, {0.99});
        CHECK(report.at("recall_at_precision").at(0).at("recall") == doctest::Approx(1.0));
        const auto [lo, hi] = eval::wilson_ci(2, 2);
        CHECK(report.at("recall_at_precision").at(0).at("wilson_low") == doctest::Approx(lo));
        CHECK(report.at("recall_at_precision").at(0).at("wilson_high") == doctest::Approx(hi));
    }
    SUBCASE("empty decision lists yield an all-zero report") {
        const auto report = pipeline::make_report({}, {}, {0.9});
        CHECK(report.at("decisions") == 0);
        CHECK(report.at("m_matchable") == 0);
        CHECK(report.at("recall_at_precision").at(0).at("recall") == 0.0);
    }
    SUBCASE("pi sweep is monotone non-increasing as matches get rarer") {
        eval::EvalRates r;
        r.tpr = 0.4;
        r.fmr = 0.02;
        r.fpir = 0.02;
        double prev = 1.1;
        for (double pi : {1.0, 0.5, 0.1, 0.01, 0.001, 0.0001}) {
            const auto p = eval::precision_of_pi(r, pi);
            REQUIRE(p.has_value());
            CHECK(*p <= prev + 1e-12);
            prev = *p;
        }
    }
}

namespace {

struct SelectOnlyProbe final : reason::JudgeBackend {
    bool verify_called = false;
    reason::SelectResponse select(const reason::SelectRequest&) override {
        reason::SelectResponse r;
        r.choice = 1;
        r.confidence = 0.77;
        return r;
    }
    reason::VerifyResponse verify(const reason::VerifyRequest&) override {
        verify_called = true;
        return {true, 0.5};
    }
    reason::CompareWinner compare(const reason::ComparePair&,
                                  const reason::ComparePair&) override {
        return reason::CompareWinner::A;
    }
};

} // namespace

TEST_CASE("select-only wiring skips verification and keeps the select confidence") {
    pipeline::RunConfig cfg = small_config(pipeline::PipelineKind::search_reason, 21);
    cfg.use_verify = false;
    pipeline::PipelineContext ctx = pipeline::build_context(cfg);
    auto probe = std::make_unique<SelectOnlyProbe>();
    SelectOnlyProbe* raw = probe.get();
    ctx.judge = std::move(probe);

    const auto decisions = pipeline::match_reason(ctx);
    CHECK_FALSE(raw->verify_called);
    for (const auto& d : decisions) {
        REQUIRE(d.is_guess());
        CHECK(*d.confidence == doctest::Approx(0.77));
        CHECK(d.scores.at(score::judge_confidence) == doctest::Approx(0.77));
    }
}

TEST_CASE("the manifest config re-runs to identical outputs") {
    const fs::path first = fs::temp_directory_path() / "linkage_rerun_a";
    const fs::path second = fs::temp_directory_path() / "linkage_rerun_b";
    fs::remove_all(first);
    fs::remove_all(second);

    pipeline::RunConfig cfg = small_config(pipeline::PipelineKind::search_reason, 3141);
    cfg.out_dir = first;
    REQUIRE(pipeline::run(cfg) == 0);

    // Round-trip the config through the manifest, as an operator would.
    const auto manifest = nlohmann::ordered_json::parse(slurp(first / "manifest.json"));
    const fs::path rerun_config = fs::temp_directory_path() / "linkage_rerun.json";
    std::ofstream(rerun_config) << manifest.at("config").dump();
    pipeline::RunConfig reloaded = pipeline::load_run_config(rerun_config);
    reloaded.out_dir = second;
    REQUIRE(pipeline::run(reloaded) == 0);

    for (const char* name : {"dataset.jsonl", "decisions.jsonl", "report.json"}) {
        INFO(name);
        CHECK(slurp(first / name) == slurp(second / name));
    }
}

TEST_CASE("shared-title projection narrows what the judge sees") {
    // Two candidates review the same titles; with projection on, unrelated
    // reviews disappear from the shortlist text.
    pipeline::RunConfig cfg;
    cfg.dataset_path = (fs::temp_directory_path() / "linkage_proj.jsonl").string();
    Dataset d;
    d.queries.push_back({"q0", Side::query,
                         {{100, "movies", "Dune was a masterpiece"},
                          {200, "movies", "Heat was brilliant"}},
                         std::nullopt});
    d.candidates.push_back({"c0", Side::candidate,
                            {{5000, "movies", "rewatched Dune, loved it"},
                             {6000, "movies", "Alien was boring"}},
                            std::nullopt});
    d.candidates.push_back({"c1", Side::candidate,
                            {{7000, "movies", "Heat is great"},
                             {8000, "movies", "Taxi Driver was dull"}},
                            std::nullopt});
    d.truth["q0"] = "c0";
    write_dataset(d, cfg.dataset_path.value());

    const auto catalog_path = fs::temp_directory_path() / "linkage_catalog.txt";
    std::ofstream(catalog_path) << "Dune\nHeat\nAlien\nTaxi Driver\n";
    cfg.catalog_path = catalog_path.string();
    cfg.extract_kind = SummaryKind::reviews;
    cfg.pipeline = pipeline::PipelineKind::search_reason;
    cfg.k = 2;
    cfg.shared_title_projection = true;
    cfg.seed = 5;

    const auto ctx = pipeline::build_context(cfg);
    REQUIRE(ctx.query_by_id.count("q0"));
    const auto* qsum = ctx.query_by_id.at("q0");
    CHECK(qsum->kind == SummaryKind::reviews);
    REQUIRE(qsum->reviews.size() == 2);

    // Decision still lands on the true candidate under a perfect oracle.
    const auto decisions = pipeline::match_reason(ctx);
    REQUIRE(decisions.size() == 1);
    REQUIRE(decisions[0].is_guess());
    CHECK(*decisions[0].guess == "c0");
}

#ifdef LINKAGE_CLI_BIN
TEST_CASE("cli runs end to end and reports") {
    const fs::path dir = fs::temp_directory_path() / "linkage_cli_smoke";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const fs::path config = dir / "run.json";
    std::ofstream(config) << R"({
      "synth": {"n_matchable": 15, "n_candidate_distractors": 10, "trait_pool_size": 80,
                 "traits_per_user": 6, "trait_persistence": 0.8, "noise_traits_per_half": 1},
      "pipeline": "search_reason",
      "k": 8,
      "seed": 99,
      "offline": true,
      "oracle": {"select_accuracy": 0.95, "verify_tpr": 0.95, "verify_fpr": 0.02}
    })";

    auto shell = [](const std::string& cmd) { return std::system(cmd.c_str()); };
    const std::string bin = LINKAGE_CLI_BIN;

    CHECK(shell(bin + " run --config " + config.string() + " --out " + (dir / "out").string() +
                " > /dev/null") == 0);
    CHECK(fs::exists(dir / "out" / "decisions.jsonl"));
    CHECK(fs::exists(dir / "out" / "manifest.json"));

    CHECK(shell(bin + " report --decisions " + (dir / "out" / "decisions.jsonl").string() +
                " --dataset " + (dir / "out" / "dataset.jsonl").string() +
                " --precision-targets 0.90,0.99 --out " + (dir / "report.json").string() +
                " > /dev/null") == 0);
    CHECK(fs::exists(dir / "report.json"));

    CHECK(shell(bin + " eval --decisions " + (dir / "out" / "decisions.jsonl").string() +
                " --dataset " + (dir / "out" / "dataset.jsonl").string() + " --out " +
                (dir / "eval").string() + " > /dev/null") == 0);
    CHECK(fs::exists(dir / "eval" / "pr_curve.csv"));

    // Bad config: offline with an endpoint set.
    const fs::path bad = dir / "bad.json";
    std::ofstream(bad) << R"({"synth": {"n_matchable": 5}, "offline": true,
                              "endpoints": {"judge": "http://example.invalid"}})";
    CHECK(shell(bin + " run --config " + bad.string() + " --out " + (dir / "bad_out").string() +
                " > /dev/null 2>&1") != 0);
}

TEST_CASE("cli stage subcommands chain file to file") {
    const fs::path dir = fs::temp_directory_path() / "linkage_cli_stages";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto shell = [](const std::string& cmd) { return std::system(cmd.c_str()); };
    const std::string bin = LINKAGE_CLI_BIN;

    // datagen with lexicon dump
    const fs::path dg = dir / "datagen.json";
    std::ofstream(dg) << R"({"mode": "synth", "seed": 12, "n_matchable": 12,
                             "n_candidate_distractors": 8, "trait_pool_size": 60,
                             "traits_per_user": 5, "trait_persistence": 0.9,
                             "noise_traits_per_half": 1})";
    CHECK(shell(bin + " datagen --config " + dg.string() + " --out " +
                (dir / "dataset.jsonl").string() + " --lexicons > /dev/null") == 0);
    REQUIRE(fs::exists(dir / "dataset.jsonl"));
    REQUIRE(fs::exists(dir / "trait_lexicon.json"));
    REQUIRE(fs::exists(dir / "attribute_lexicon.json"));

    // standalone extract against the dumped lexicon
    CHECK(shell(bin + " extract --dataset " + (dir / "dataset.jsonl").string() + " --kind traits" +
                " --lexicon " + (dir / "trait_lexicon.json").string() + " --out " +
                (dir / "summaries.jsonl").string() + " > /dev/null") == 0);
    CHECK_FALSE(load_summaries(dir / "summaries.jsonl").empty());

    // baseline match over the dataset, with full rankings
    const fs::path mc = dir / "match.json";
    std::ofstream(mc) << R"({"dataset": ")" << (dir / "dataset.jsonl").string()
                      << R"(", "pipeline": "baseline_jaccard", "seed": 12,
                          "lexicon": ")" << (dir / "attribute_lexicon.json").string()
                      << R"(", "extract_kind": "attributes"})";
    CHECK(shell(bin + " match --config " + mc.string() + " --out " + (dir / "m").string() +
                " --rankings > /dev/null") == 0);
    CHECK(fs::exists(dir / "m" / "decisions.jsonl"));
    CHECK(fs::exists(dir / "m" / "rankings.csv"));

    // reason match, then tournament calibration over its decisions
    const fs::path rc = dir / "reason.json";
    std::ofstream(rc) << R"({"dataset": ")" << (dir / "dataset.jsonl").string()
                      << R"(", "pipeline": "search_reason", "k": 8, "seed": 12,
                          "lexicon": ")" << (dir / "trait_lexicon.json").string()
                      << R"(", "oracle": {"select_accuracy": 0.9, "verify_tpr": 0.95,
                          "verify_fpr": 0.05}})";
    CHECK(shell(bin + " match --config " + rc.string() + " --out " + (dir / "r").string() +
                " > /dev/null") == 0);
    CHECK(shell(bin + " calibrate --decisions " + (dir / "r" / "decisions.jsonl").string() +
                " --dataset " + (dir / "dataset.jsonl").string() + " --out " +
                (dir / "cal").string() + " --rounds 8 --seed 12 > /dev/null") == 0);
    REQUIRE(fs::exists(dir / "cal" / "decisions_calibrated.jsonl"));
    REQUIRE(fs::exists(dir / "cal" / "transcript.jsonl"));
    const auto calibrated = load_decisions(dir / "cal" / "decisions_calibrated.jsonl");
    bool any_rated = false;
    for (const auto& d : calibrated)
        if (d.stage == "calibrate") any_rated = true;
    CHECK(any_rated);

    // eval with the shortlist recall diagnostic
    CHECK(shell(bin + " eval --decisions " + (dir / "r" / "decisions.jsonl").string() +
                " --dataset " + (dir / "dataset.jsonl").string() + " --out " +
                (dir / "ev").string() + " --config " + rc.string() +
                " --topk-recall 5 > /dev/null") == 0);
    CHECK(fs::exists(dir / "ev" / "topk_recall.csv"));

    // report rejects decisions that name queries outside the dataset
    const fs::path alien = dir / "alien.jsonl";
    std::ofstream(alien)
        << R"({"query_id": "nobody", "guess": "c1", "confidence": 0.5, "stage": "x", "scores": {}})"
        << "\n";
    CHECK(shell(bin + " report --decisions " + alien.string() + " --dataset " +
                (dir / "dataset.jsonl").string() + " > /dev/null 2>&1") != 0);
}
#endif
