#pragma once

// Deterministic random helpers. std::mt19937 has a standardized output
// sequence, but the std distributions do not, so every draw that must be
// reproducible across platforms goes through the functions below.

#include <cstdint>
#include <random>
#include <vector>

namespace bts {

using Rng = std::mt19937;

// Uniform in [0, 1) with 32 bits of resolution.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng()) * (1.0 / 4294967296.0);
}

// Uniform in [lo, hi).
inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n). Rejection sampling, exact.
inline std::uint32_t uniform_below(Rng& rng, std::uint32_t n) {
    if (n <= 1) return 0;
    const std::uint32_t limit = 0xFFFFFFFFu - (0xFFFFFFFFu % n) - 1;
    std::uint32_t r = rng();
    while (r > limit) r = rng();
    return r % n;
}

inline bool bernoulli(Rng& rng, double p) {
    return uniform01(rng) < p;
}

// Fisher-Yates, descending index order.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = uniform_below(rng, static_cast<std::uint32_t>(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace bts
