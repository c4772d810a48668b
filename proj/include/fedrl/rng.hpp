#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fedrl {

// All randomness in the library flows from a single top-level seed.
// Streams are derived by hashing the seed together with an integer path
// (e.g. {agent, iteration}) through splitmix64, so per-agent / per-round
// streams are independent and reproducible regardless of execution order.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t p : path) s = splitmix64(s ^ (p + 0x632be59bd9b4e019ULL));
    return s;
}

using RngStream = std::mt19937_64;

inline RngStream make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> path = {}) {
    return RngStream(derive_seed(base, path));
}

// Uniform double in [0,1). Implemented directly from the engine output so
// results do not depend on the standard library's distribution internals.
inline double uniform01(RngStream& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(RngStream& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Standard normal via Box-Muller.
inline double normal01(RngStream& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Draws an index from an unnormalized nonnegative weight vector by CDF walk.
template <typename Vec>
int sample_categorical(RngStream& rng, const Vec& weights) {
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(weights.size()); ++i) total += weights[i];
    double u = uniform01(rng) * total;
    for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
        u -= weights[i];
        if (u <= 0.0) return i;
    }
    return static_cast<int>(weights.size()) - 1;
}

// Flat Dirichlet(1,...,1) row via normalized exponentials.
inline std::vector<double> dirichlet_flat(RngStream& rng, int dim) {
    std::vector<double> x(dim);
    double total = 0.0;
    for (int i = 0; i < dim; ++i) {
        double u = uniform01(rng);
        while (u <= 0.0) u = uniform01(rng);
        x[i] = -std::log(u);
        total += x[i];
    }
    for (int i = 0; i < dim; ++i) x[i] /= total;
    return x;
}

}  // namespace fedrl
