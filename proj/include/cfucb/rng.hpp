#pragma once

#include <cstdint>
#include <random>

namespace cfucb {

using Engine = std::mt19937_64;

// splitmix64 step (Vigna). Used for seed derivation and as a cheap
// counter-based generator in the Monte Carlo kernels, where every trial
// needs its own independent stream regardless of scheduling order.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic substream seed from a base seed and a salt. Distinct salts
// (module tags, user ids, trial indices) give statistically independent
// streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL + (salt << 1));
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b >> 1);
}

inline Engine make_engine(std::uint64_t base, std::uint64_t salt) {
    return Engine(derive_seed(base, salt));
}

// Small self-contained generator for trial-parallel kernels.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() { return splitmix64(state); }

    // Uniform in [0, 1).
    double uniform01() { return (next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), n >= 1. Lemire's multiply-shift with
    // rejection, exact for any n.
    std::uint64_t bounded(std::uint64_t n) {
        std::uint64_t x = next();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = next();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }
};

// Substream salts for the simulation harness. Keeping them in one place
// makes replications reproducible component by component: changing how
// rewards are drawn does not disturb profile or arrival generation.
namespace seed_salt {
inline constexpr std::uint64_t profiles = 0x50524f46;       // "PROF"
inline constexpr std::uint64_t arrival_params = 0x41525250; // "ARRP"
inline constexpr std::uint64_t arrival_stream = 0x41525253; // "ARRS"
inline constexpr std::uint64_t rewards = 0x52455741;        // "REWA"
} // namespace seed_salt

} // namespace cfucb
