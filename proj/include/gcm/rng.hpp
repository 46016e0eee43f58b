#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace gcm {

// splitmix64 step; used both as the generator core and for seed mixing.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Order-sensitive combination of seed components. Plain xor would collide
// for swapped (node, layer) pairs, so each part goes through a mix round.
inline uint64_t seed_mix(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0x8F1BBCDC1357ACE9ULL;
    for (uint64_t p : parts) {
        h = splitmix64(h ^ (p + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
    }
    return h;
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Small deterministic PRNG. The standard <random> distributions are
// implementation-defined, so everything that must reproduce bit-exactly
// (datasets, sampling, dropout) goes through this.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [0, bound); bound must be positive.
    int uniform_int(int bound) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<unsigned __int128>(bound)) >> 64);
    }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Knuth's method; fine for the small means used here.
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        double limit = std::exp(-mean);
        double prod = 1.0;
        int n = -1;
        do {
            ++n;
            prod *= uniform();
        } while (prod > limit);
        return n;
    }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

} // namespace gcm
