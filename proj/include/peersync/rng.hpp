#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace peersync {

// Deterministic PRNG used everywhere randomness is needed. The standard
// <random> distributions are implementation-defined, which would break the
// byte-identical-reports contract across toolchains, so the few draws we
// need are implemented here against a fixed-algorithm generator.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** seeded via splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        // Rejection-free Lemire reduction would bias at word scale; plain
        // modulo bias is negligible for our n but rejection keeps it exact.
        if (n == 0) return 0;
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    double exponential(double rate) {
        // Inverse CDF; 1 - u avoids log(0).
        return -std::log(1.0 - next_double()) / rate;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// FNV-1a, for deriving independent substreams from (seed, label) pairs so
// per-image and per-node streams do not depend on iteration order.
inline uint64_t stream_seed(uint64_t seed, std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace peersync
