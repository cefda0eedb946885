#pragma once

#include <cstdint>
#include <random>

namespace dadl {

using Rng = std::mt19937_64;

// Mixes a base seed with a stream index so sub-tasks (per-example attack
// init, per-epoch shuffles) get decorrelated but reproducible streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(rng);
}

// Normal draw rejected outside two standard deviations.
inline double truncated_normal(Rng& rng, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    for (;;) {
        double v = d(rng);
        if (v >= -2.0 * stddev && v <= 2.0 * stddev) return v;
    }
}

}  // namespace dadl
