#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace linkage {

// splitmix64: cheap, well-mixed 64-bit step. Used to derive independent
// sub-streams from one root seed so stages and per-item workers can be
// re-run in isolation with identical results.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream key for (seed, label): order-independent, collision-resistant enough
// for experiment reproducibility.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    return splitmix64(seed ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t n) {
    return splitmix64(derive_seed(seed, label) ^ splitmix64(n));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

} // namespace linkage
