#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>
#include <thread>

#include "linkage/datagen.hpp"
#include "linkage/errors.hpp"
#include "linkage/extract.hpp"
#include "linkage/remote.hpp"
#include "linkage/search_index.hpp"

// httplib after Eigen-bearing headers (glibc resolv.h macro clash).
#include <httplib.h>
#include <json.hpp>

using namespace linkage;
using namespace linkage::search;

namespace {

FeatureSummary trait_summary(const std::string& id, std::vector<std::string> traits) {
    FeatureSummary s;
    s.profile_id = id;
    s.kind = SummaryKind::traits;
    s.traits = std::move(traits);
    return s;
}

} // namespace

TEST_CASE("hash embedding is deterministic and order-invariant") {
    const Embedding a = hash_embed("keeps bees, restores clocks", 64, 9);
    const Embedding b = hash_embed("keeps bees, restores clocks", 64, 9);
    CHECK(a.vec == b.vec);

    const Embedding c = hash_embed("restores clocks keeps bees", 64, 9);
    CHECK(a.vec == c.vec);   // bag of tokens

    const Embedding other_seed = hash_embed("keeps bees, restores clocks", 64, 10);
    CHECK(a.vec != other_seed.vec);
}

TEST_CASE("hash embedding is unit norm or degenerate") {
    const Embedding e = hash_embed("one two three four", 32, 1);
    CHECK_FALSE(e.degenerate);
    CHECK(e.vec.cast<double>().norm() == doctest::Approx(1.0).epsilon(1e-6));

    const Embedding zero = hash_embed("   ", 32, 1);
    CHECK(zero.degenerate);
    CHECK(zero.vec.isZero());

    CHECK_THROWS_AS(hash_embed("text", 4, 1), DomainError);
}

TEST_CASE("disjoint token sets are near-orthogonal on average over seeds") {
    double total = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        const Embedding a = hash_embed("alpha bravo charlie delta", 128, s);
        const Embedding b = hash_embed("echo foxtrot golf hotel", 128, s);
        total += a.vec.cast<double>().dot(b.vec.cast<double>());
    }
    CHECK(std::abs(total / seeds) < 0.1);
}

namespace {

struct FixedEmbedder final : EmbedderBackend {
    int d;
    std::uint64_t seed;
    bool break_second_batch = false;
    int calls = 0;
    FixedEmbedder(int d_, std::uint64_t s) : d(d_), seed(s) {}
    int dim() const override { return d; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        ++calls;
        const int use_dim = (break_second_batch && calls > 1) ? d + 8 : d;
        std::vector<Embedding> out;
        for (const auto& t : texts) out.push_back(hash_embed(t, use_dim, seed));
        return out;
    }
};

} // namespace

TEST_CASE("index build sorts rows by id and excludes degenerate summaries") {
    FixedEmbedder backend(64, 3);
    std::vector<FeatureSummary> summaries = {
        trait_summary("zeta", {"keeps_bees"}),
        trait_summary("alpha", {"restores_clocks"}),
        trait_summary("mid", {}),   // empty -> degenerate
    };
    const SearchIndex index = build_index(summaries, backend);
    REQUIRE(index.size() == 2);
    CHECK(index.candidate_ids == std::vector<std::string>{"alpha", "zeta"});
    REQUIRE(index.excluded_ids.size() == 1);
    CHECK(index.excluded_ids[0] == "mid");

    // Input order does not matter.
    std::swap(summaries[0], summaries[1]);
    FixedEmbedder backend2(64, 3);
    const SearchIndex again = build_index(summaries, backend2);
    CHECK(again.candidate_ids == index.candidate_ids);
    CHECK(again.rows == index.rows);
}

TEST_CASE("index build rejects dimension mismatches across batches") {
    FixedEmbedder backend(64, 3);
    backend.break_second_batch = true;
    std::vector<FeatureSummary> summaries;
    for (int i = 0; i < 5; ++i)
        summaries.push_back(trait_summary("s" + std::to_string(i),
                                          {"tag_" + std::to_string(i)}));
    CHECK_THROWS_AS(build_index(summaries, backend, /*batch_size=*/2), ValidationError);
}

TEST_CASE("querying a stored row returns it first with cosine one") {
    FixedEmbedder backend(64, 5);
    std::vector<FeatureSummary> summaries;
    for (int i = 0; i < 10; ++i)
        summaries.push_back(trait_summary("c" + std::to_string(i),
                                          {"tag_" + std::to_string(i), "shared_tag"}));
    const SearchIndex index = build_index(summaries, backend);

    const Embedding q = backend.embed({summary_text(summaries[3])}).front();
    const auto hits = query_topk(index, q, 3);
    CHECK(hits[0].candidate_id == "c3");
    CHECK(hits[0].cosine == doctest::Approx(1.0).epsilon(1e-6));

    CHECK_THROWS_AS(query_topk(index, q, 0), DomainError);
    CHECK_THROWS_AS(query_topk(index, q, index.size() + 1), DomainError);
}

TEST_CASE("full-pool query is a sorted permutation") {
    FixedEmbedder backend(32, 8);
    std::vector<FeatureSummary> summaries;
    for (int i = 0; i < 12; ++i)
        summaries.push_back(trait_summary("c" + std::to_string(i), {"t" + std::to_string(i % 5)}));
    const SearchIndex index = build_index(summaries, backend);
    const Embedding q = hash_embed("t0 t1 probes", 32, 8);
    const auto hits = query_topk(index, q, index.size());

    std::set<std::string> seen;
    for (const auto& h : hits) CHECK(seen.insert(h.candidate_id).second);
    CHECK(seen.size() == index.size());
    for (std::size_t i = 1; i < hits.size(); ++i) {
        CHECK(hits[i - 1].cosine >= hits[i].cosine);
        if (hits[i - 1].cosine == hits[i].cosine)
            CHECK(hits[i - 1].candidate_id < hits[i].candidate_id);
        CHECK(hits[i].cosine >= -1.0 - 1e-9);
        CHECK(hits[i].cosine <= 1.0 + 1e-9);
    }
}

TEST_CASE("top-k matches a brute-force full sort on random pools") {
    std::mt19937_64 rng(17);
    FixedEmbedder backend(48, 21);
    std::vector<FeatureSummary> summaries;
    for (int i = 0; i < 50; ++i) {
        std::vector<std::string> traits;
        const std::size_t n = 1 + rng() % 6;
        for (std::size_t t = 0; t < n; ++t)
            traits.push_back("w" + std::to_string(rng() % 30));
        summaries.push_back(trait_summary("c" + std::to_string(100 + i), traits));
    }
    const SearchIndex index = build_index(summaries, backend);

    for (int trial = 0; trial < 20; ++trial) {
        const Embedding q =
            hash_embed("w" + std::to_string(rng() % 30) + " w" + std::to_string(rng() % 30), 48,
                       21);
        if (q.degenerate) continue;
        const auto top5 = query_topk(index, q, 5);
        const auto full = query_topk(index, q, index.size());
        for (int i = 0; i < 5; ++i) {
            CHECK(top5[static_cast<std::size_t>(i)].candidate_id ==
                  full[static_cast<std::size_t>(i)].candidate_id);
            CHECK(top5[static_cast<std::size_t>(i)].cosine ==
                  doctest::Approx(full[static_cast<std::size_t>(i)].cosine));
        }

        // Independent check of the leader against every row.
        const Eigen::VectorXd qd = q.vec.cast<double>();
        double best = -2;
        for (Eigen::Index r = 0; r < index.rows.rows(); ++r)
            best = std::max(best, index.rows.row(r).cast<double>().dot(qd));
        CHECK(top5[0].cosine == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("pool-restricted query only sees the pool") {
    FixedEmbedder backend(32, 2);
    std::vector<FeatureSummary> summaries;
    for (int i = 0; i < 8; ++i)
        summaries.push_back(trait_summary("c" + std::to_string(i), {"t" + std::to_string(i)}));
    const SearchIndex index = build_index(summaries, backend);

    const Embedding q = backend.embed({summary_text(summaries[6])}).front();
    const std::vector<std::string> pool = {"c0", "c1", "c6"};
    const auto hits = query_topk_within(index, q, 3, pool);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].candidate_id == "c6");
    for (const auto& h : hits)
        CHECK(std::find(pool.begin(), pool.end(), h.candidate_id) != pool.end());
}

TEST_CASE("index persistence round-trips exactly") {
    FixedEmbedder backend(40, 33);
    std::vector<FeatureSummary> summaries;
    for (int i = 0; i < 7; ++i)
        summaries.push_back(trait_summary("id_" + std::to_string(i),
                                          {"alpha_" + std::to_string(i), "beta"}));
    const SearchIndex index = build_index(summaries, backend);

    const auto path = std::filesystem::temp_directory_path() / "linkage_index_rt.bin";
    save_index(index, path);
    const SearchIndex back = load_index(path);
    CHECK(back.candidate_ids == index.candidate_ids);
    CHECK(back.rows == index.rows);
    CHECK(back.dim() == index.dim());

    CHECK_THROWS_AS(load_index(std::filesystem::temp_directory_path() / "missing.bin"),
                    ParseError);
}

TEST_CASE("top-k recall curve is monotone and saturates on planted data") {
    datagen::SynthConfig cfg;
    cfg.seed = 77;
    cfg.n_matchable = 30;
    cfg.trait_persistence = 1.0;
    cfg.noise_traits_per_half = 0;
    cfg.traits_per_user = 6;
    const Dataset d = datagen::synth_generate(cfg);
    const auto lexicon = datagen::synth_trait_lexicon(cfg);

    std::vector<FeatureSummary> qs, cs;
    for (const auto& p : d.queries) qs.push_back(extract::extract_traits_deterministic(p, lexicon));
    for (const auto& p : d.candidates)
        cs.push_back(extract::extract_traits_deterministic(p, lexicon));

    FixedEmbedder backend(128, 55);
    const SearchIndex index = build_index(cs, backend);
    const auto curve = topk_recall_curve(qs, d.truth, index, backend, 10);

    REQUIRE_FALSE(curve.empty());
    for (std::size_t i = 1; i < curve.size(); ++i)
        CHECK(curve[i].recall >= curve[i - 1].recall);
    // Identical trait sets on both halves embed identically; rank 1.
    CHECK(curve.front().recall == doctest::Approx(1.0));
    CHECK(curve.back().recall == doctest::Approx(1.0));
}

TEST_CASE("recall curve is zero when truth never retrieves") {
    FixedEmbedder backend(64, 4);
    std::vector<FeatureSummary> cs = {trait_summary("c0", {"aaa"}), trait_summary("c1", {"bbb"})};
    const SearchIndex index = build_index(cs, backend);
    std::vector<FeatureSummary> qs = {trait_summary("q0", {"zzz"})};
    TruthMap truth = {{"q0", "ghost"}};   // target not even indexed
    const auto curve = topk_recall_curve(qs, truth, index, backend, 2);
    for (const auto& p : curve) CHECK(p.recall == doctest::Approx(0.0));
}

TEST_CASE("http embedder speaks the embed wire format") {
    httplib::Server server;
    server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        REQUIRE(body.at("texts").is_array());
        nlohmann::json vectors = nlohmann::json::array();
        for (std::size_t i = 0; i < body.at("texts").size(); ++i)
            vectors.push_back({3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
        res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    remote::RemoteOptions opts;
    opts.max_retries = 0;
    remote::HttpEmbedder embedder("http://127.0.0.1:" + std::to_string(port), opts);
    const auto embs = embedder.embed({"first", "second"});
    REQUIRE(embs.size() == 2);
    CHECK(embedder.dim() == 8);
    CHECK(embs[0].vec.cast<double>().norm() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(embs[0].vec[0] == doctest::Approx(0.6f));
    CHECK(embs[0].vec[1] == doctest::Approx(0.8f));

    server.stop();
    t.join();
}
