#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace groundlab {

// mt19937_64 raw output is pinned by the standard; the helpers below avoid
// std::*_distribution so sampled sequences are identical across standard
// library implementations.
using Rng = std::mt19937_64;

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_real(rng);
}

// Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the result
// unbiased and portable.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(rng());  // full 64-bit range
    const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % span);
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return lo + static_cast<std::int64_t>(v % span);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
}

// Standard normal via Box-Muller; the spare value is discarded.
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform_real(rng);
    while (u1 <= 0.0) u1 = uniform_real(rng);
    const double u2 = uniform_real(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
}

inline bool bernoulli(Rng& rng, double p) { return uniform_real(rng) < p; }

// Fisher-Yates with the portable integer helper.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[uniform_index(rng, v.size())];
}

}  // namespace groundlab
