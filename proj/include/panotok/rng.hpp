#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace panotok {

// splitmix64, used to spread seed material before it enters mt19937_64.
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

// Deterministic RNG wrapper. mt19937_64 output is pinned by the standard;
// all mappings to ranges are done here so results are identical on every
// platform (std::*_distribution is implementation-defined and never used).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Named substream: derives an independent stream from (seed, tag, index).
    static Rng substream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
        std::uint64_t h = splitmix64(seed ^ fnv1a64(tag));
        return Rng(splitmix64(h ^ splitmix64(index)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n), rejection sampled (unbiased, deterministic).
    std::uint64_t uniform_u64(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform real in [0, 1) with 53 random bits.
    double uniform_real() { return double(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (no cached spare: call cost is irrelevant
    // here and statelessness keeps replay simple).
    double normal() {
        double u1, u2;
        do {
            u1 = uniform_real();
        } while (u1 <= 0.0);
        u2 = uniform_real();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) { return uniform_real() < p; }

private:
    std::mt19937_64 engine_;
};

}  // namespace panotok
