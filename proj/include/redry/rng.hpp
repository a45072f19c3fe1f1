#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace redry {

// Portable randomness. mt19937_64 output is pinned by the standard, but the
// standard *distributions* are not, so every draw here is built directly from
// the raw 64-bit stream. Identical seeds give identical streams on every
// platform and standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, one value per call (the sibling value is discarded to keep
    // the stream position independent of call parity).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer on [0, n) without modulo bias.
    uint64_t uniform_index(uint64_t n) {
        if (n == 0) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Stable per-item seed derivation (splitmix64 finalizer over a mixed key).
    static uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t index = 0) {
        uint64_t z = master ^ (stream * 0x9e3779b97f4a7c15ull) ^ (index + 0x2545f4914f6cdd1dull);
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace redry
