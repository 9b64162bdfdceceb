#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace clcrec {

// All randomness in the project flows from one root seed. Named substreams
// (split, init, batch, negatives, hybrid, ...) let components be varied
// independently without perturbing each other.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

using Rng = std::mt19937_64;

inline Rng substream(std::uint64_t root_seed, std::string_view name) {
    return Rng(splitmix64(root_seed ^ fnv1a(name)));
}

// Deterministic across standard library implementations, unlike
// std::uniform_int_distribution.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    // unbiased rejection sampling over [0, n)
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

inline double standard_normal(Rng& rng) {
    // Box-Muller, polar form
    for (;;) {
        const double a = uniform_real(rng, -1.0, 1.0);
        const double b = uniform_real(rng, -1.0, 1.0);
        const double s = a * a + b * b;
        if (s > 0.0 && s < 1.0) {
            return a * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

inline bool bernoulli(Rng& rng, double p) {
    return uniform_real(rng, 0.0, 1.0) < p;
}

}  // namespace clcrec
