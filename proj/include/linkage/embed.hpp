#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "linkage/rng.hpp"
#include "linkage/text.hpp"

namespace linkage::search {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// A unit-norm embedding, or an all-zero vector flagged degenerate when the
// source text had no tokens.
struct Embedding {
    Eigen::VectorXf vec;
    bool degenerate = false;

    int dim() const { return static_cast<int>(vec.size()); }
};

// Seeded feature-hashing embedder: bag of lowercase alphanumeric tokens,
// each token hashed to one coordinate and a sign, accumulated and
// L2-normalized. Deterministic in (text, dim, seed) and invariant to token
// order.
template <typename Scalar = float>
Vec<Scalar> hash_embed_vector(std::string_view textual, int dim, std::uint64_t seed) {
    Vec<Scalar> v = Vec<Scalar>::Zero(dim);
    for (const auto& tok : text::tokenize(textual)) {
        const std::uint64_t h = splitmix64(seed ^ fnv1a64(tok));
        const auto idx = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim));
        const Scalar sign = (h >> 63) ? Scalar(1) : Scalar(-1);
        v[idx] += sign;
    }
    const auto norm = v.template cast<double>().norm();
    if (norm > 0.0) v /= static_cast<Scalar>(norm);
    return v;
}

Embedding hash_embed(std::string_view textual, int dim, std::uint64_t seed);

// Batch embedding source. Offline implementations are deterministic; remote
// ones are opaque. All outputs of one instance share a single dimension.
class EmbedderBackend {
public:
    virtual ~EmbedderBackend() = default;
    virtual int dim() const = 0;
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
};

class HashEmbedder final : public EmbedderBackend {
public:
    HashEmbedder(int dim, std::uint64_t seed);
    int dim() const override { return dim_; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

private:
    int dim_;
    std::uint64_t seed_;
};

} // namespace linkage::search
