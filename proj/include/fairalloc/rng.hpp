#pragma once

// Portable random streams. std::mt19937_64 has a fully specified output
// sequence, but the standard distributions do not, so every transform from raw
// 64-bit words to uniforms, Gaussians, Bernoullis and permutations is spelled
// out here. Substreams are keyed by hashing (seed, index...) with SplitMix64.

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace fairalloc::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Order-sensitive hash of a seed and any number of stream coordinates.
template <typename... Ix>
constexpr std::uint64_t substream(std::uint64_t seed, Ix... ix) noexcept {
    std::uint64_t h = splitmix64(seed);
    ((h = splitmix64(h ^ static_cast<std::uint64_t>(ix))), ...);
    return h;
}

/// Uniform on the open interval (0,1) from the top 53 bits.
constexpr double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal quantile by inverse CDF: Phi^{-1}(u) = -sqrt(2) erfc^{-1}(2u).
inline double normal_quantile(double u) {
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

class Stream {
public:
    explicit Stream(std::uint64_t key) : engine_(key) {}

    std::uint64_t bits() { return engine_(); }
    double uniform() { return to_open_unit(engine_()); }
    double normal() { return normal_quantile(uniform()); }
    bool bernoulli(double p) { return uniform() < p; }

    /// Unbiased integer in [0, bound) by rejection on the top of the range.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

private:
    std::mt19937_64 engine_;
};

/// Fisher-Yates permutation of 0..n-1 driven by a Stream.
inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t key) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Stream s(key);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(s.below(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

} // namespace fairalloc::rng
