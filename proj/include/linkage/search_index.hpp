#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "linkage/embed.hpp"
#include "linkage/types.hpp"

namespace linkage::search {

using RowMatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Exact cosine-similarity index over the candidate pool. Rows are unit-norm
// and ordered by candidate_id; immutable after build, safe to query
// concurrently.
struct SearchIndex {
    std::vector<std::string> candidate_ids;    // ascending
    RowMatrixF rows;                           // one unit-norm row per id
    std::vector<std::string> excluded_ids;     // degenerate summaries, not retrievable

    int dim() const { return static_cast<int>(rows.cols()); }
    std::size_t size() const { return candidate_ids.size(); }
};

// Embeds candidate summaries in chunks and assembles the index. Degenerate
// (empty-text) summaries are recorded in excluded_ids rather than indexed.
// Throws ValidationError on a dimension mismatch across batches.
SearchIndex build_index(const std::vector<FeatureSummary>& summaries,
                        EmbedderBackend& backend, std::size_t batch_size = 64);

struct Hit {
    std::string candidate_id;
    double cosine = 0.0;
};

// Exact top-k by cosine, descending, ties broken by ascending candidate_id.
// Requires 1 <= k <= index size.
std::vector<Hit> query_topk(const SearchIndex& index, const Embedding& q, std::size_t k);

// Same, restricted to the candidate ids in `pool` (ids absent from the index
// are ignored). Requires 1 <= k <= matched pool size.
std::vector<Hit> query_topk_within(const SearchIndex& index, const Embedding& q, std::size_t k,
                                   const std::vector<std::string>& pool);

// Binary persistence: header (magic, version, dim, count), candidate_id
// table, then row-major little-endian float32 data.
void save_index(const SearchIndex& index, const std::filesystem::path& path);
SearchIndex load_index(const std::filesystem::path& path);

struct RecallPoint {
    std::size_t k = 0;
    double recall = 0.0;
};

// Fraction of matchable queries whose true candidate appears in the top-k,
// for k = 1..k_max. Monotone non-decreasing in k.
std::vector<RecallPoint> topk_recall_curve(const std::vector<FeatureSummary>& query_summaries,
                                           const TruthMap& truth, const SearchIndex& index,
                                           EmbedderBackend& backend, std::size_t k_max);

} // namespace linkage::search
