#include "linkage/search_index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "linkage/errors.hpp"

namespace linkage::search {

Embedding hash_embed(std::string_view textual, int dim, std::uint64_t seed) {
    if (dim < 8) throw DomainError("hash_embed: dim must be >= 8");
    Embedding e;
    e.vec = hash_embed_vector<float>(textual, dim, seed);
    e.degenerate = e.vec.isZero(0.0f);
    return e;
}

HashEmbedder::HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 8) throw DomainError("HashEmbedder: dim must be >= 8");
}

std::vector<Embedding> HashEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embed(t, dim_, seed_));
    return out;
}

SearchIndex build_index(const std::vector<FeatureSummary>& summaries,
                        EmbedderBackend& backend, std::size_t batch_size) {
    if (summaries.empty()) throw ValidationError("build_index: no summaries");
    if (batch_size == 0) batch_size = 1;

    std::vector<const FeatureSummary*> ordered;
    ordered.reserve(summaries.size());
    for (const auto& s : summaries) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(), [](const FeatureSummary* a, const FeatureSummary* b) {
        return a->profile_id < b->profile_id;
    });

    SearchIndex index;
    std::vector<std::pair<std::string, Embedding>> rows;
    int dim = -1;
    for (std::size_t start = 0; start < ordered.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, ordered.size());
        std::vector<std::string> texts;
        for (std::size_t i = start; i < end; ++i) texts.push_back(summary_text(*ordered[i]));
        const std::vector<Embedding> batch = backend.embed(texts);
        if (batch.size() != texts.size())
            throw ProtocolError("embedder returned wrong batch size");
        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (dim < 0) dim = batch[i].dim();
            if (batch[i].dim() != dim)
                throw ValidationError("embedding dimension mismatch across batches");
            const FeatureSummary& s = *ordered[start + i];
            if (batch[i].degenerate || summary_text(s).empty()) {
                index.excluded_ids.push_back(s.profile_id);
            } else {
                rows.emplace_back(s.profile_id, batch[i]);
            }
        }
    }
    if (rows.empty()) throw ValidationError("build_index: all summaries degenerate");

    index.candidate_ids.reserve(rows.size());
    index.rows.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        index.candidate_ids.push_back(rows[i].first);
        Eigen::VectorXf v = rows[i].second.vec;
        const double norm = v.cast<double>().norm();
        if (norm > 0.0) v /= static_cast<float>(norm);
        index.rows.row(static_cast<Eigen::Index>(i)) = v.transpose();
    }
    return index;
}

namespace {

std::vector<Hit> topk_over(const SearchIndex& index, const Embedding& q, std::size_t k,
                           const std::vector<std::size_t>& row_ids) {
    if (k < 1 || k > row_ids.size())
        throw DomainError("query_topk: k out of range");
    if (q.dim() != index.dim())
        throw DomainError("query_topk: query dimension mismatch");

    // Scores accumulate in double so equal vectors hit cosine 1 within 1e-6.
    const Eigen::VectorXd qd = q.vec.cast<double>();
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(row_ids.size());
    for (std::size_t r : row_ids) {
        const double c =
            index.rows.row(static_cast<Eigen::Index>(r)).cast<double>().dot(qd);
        scored.emplace_back(c, r);
    }
    auto better = [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return index.candidate_ids[a.second] < index.candidate_ids[b.second];
    };
    if (k < scored.size())
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                          scored.end(), better);
    else
        std::sort(scored.begin(), scored.end(), better);

    std::vector<Hit> hits;
    hits.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        hits.push_back({index.candidate_ids[scored[i].second], scored[i].first});
    return hits;
}

} // namespace

std::vector<Hit> query_topk(const SearchIndex& index, const Embedding& q, std::size_t k) {
    std::vector<std::size_t> all(index.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return topk_over(index, q, k, all);
}

std::vector<Hit> query_topk_within(const SearchIndex& index, const Embedding& q, std::size_t k,
                                   const std::vector<std::string>& pool) {
    std::vector<std::size_t> rows;
    rows.reserve(pool.size());
    for (const auto& id : pool) {
        const auto it = std::lower_bound(index.candidate_ids.begin(), index.candidate_ids.end(), id);
        if (it != index.candidate_ids.end() && *it == id)
            rows.push_back(static_cast<std::size_t>(it - index.candidate_ids.begin()));
    }
    return topk_over(index, q, k, rows);
}

namespace {

constexpr char kMagic[8] = {'L', 'N', 'K', 'I', 'N', 'D', 'X', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const char* what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw ParseError(std::string("index file truncated at ") + what);
    return v;
}

} // namespace

void save_index(const SearchIndex& index, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put(out, static_cast<std::uint32_t>(index.dim()));
    put(out, static_cast<std::uint64_t>(index.size()));
    for (const auto& id : index.candidate_ids) {
        put(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    out.write(reinterpret_cast<const char*>(index.rows.data()),
              static_cast<std::streamsize>(sizeof(float) * index.size() *
                                           static_cast<std::size_t>(index.dim())));
}

SearchIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError("not an index file: " + path.string());
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kVersion) throw ParseError("unsupported index version");
    const auto dim = get<std::uint32_t>(in, "dim");
    const auto count = get<std::uint64_t>(in, "count");

    SearchIndex index;
    index.candidate_ids.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(in, "id length");
        std::string id(len, '\0');
        if (!in.read(id.data(), len)) throw ParseError("index file truncated in id table");
        index.candidate_ids.push_back(std::move(id));
    }
    index.rows.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    const auto bytes = static_cast<std::streamsize>(sizeof(float) * count * dim);
    if (!in.read(reinterpret_cast<char*>(index.rows.data()), bytes))
        throw ParseError("index file truncated in row data");
    return index;
}

std::vector<RecallPoint> topk_recall_curve(const std::vector<FeatureSummary>& query_summaries,
                                           const TruthMap& truth, const SearchIndex& index,
                                           EmbedderBackend& backend, std::size_t k_max) {
    if (truth.empty()) throw ValidationError("topk_recall_curve: empty truth");
    k_max = std::min(k_max, index.size());

    std::map<std::string, const FeatureSummary*> by_id;
    for (const auto& s : query_summaries) by_id.emplace(s.profile_id, &s);

    std::vector<std::size_t> hits_at(k_max + 1, 0);
    std::size_t matchable = 0;
    for (const auto& [qid, cid] : truth) {
        auto it = by_id.find(qid);
        if (it == by_id.end()) continue;
        ++matchable;
        const Embedding q = backend.embed({summary_text(*it->second)}).front();
        if (q.degenerate) continue;
        const std::vector<Hit> top = query_topk(index, q, k_max);
        for (std::size_t i = 0; i < top.size(); ++i) {
            if (top[i].candidate_id == cid) {
                ++hits_at[i + 1];
                break;
            }
        }
    }
    std::vector<RecallPoint> curve;
    std::size_t cum = 0;
    for (std::size_t k = 1; k <= k_max; ++k) {
        cum += hits_at[k];
        curve.push_back(
            {k, matchable ? static_cast<double>(cum) / static_cast<double>(matchable) : 0.0});
    }
    return curve;
}

} // namespace linkage::search
