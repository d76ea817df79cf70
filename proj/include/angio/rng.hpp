#pragma once

#include <cstdint>
#include <cmath>

namespace angio {

/// Deterministic RNG with explicitly-coded distributions.
///
/// std::mt19937_64 is portable but the <random> distributions are
/// implementation-defined, so every draw here is spelled out to make
/// seeded runs bit-identical across compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        // splitmix64 state init, then run as splitmix64 stream
        state_ = seed;
        has_gauss_ = false;
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n >= 1. Modulo bias is < 2^-53 for any sane n.
    uint64_t uniform_index(uint64_t n) { return uint64_t(uniform() * double(n)) % n; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (cached pair).
    double normal() {
        if (has_gauss_) {
            has_gauss_ = false;
            return gauss_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        gauss_ = r * std::sin(a);
        has_gauss_ = true;
        return r * std::cos(a);
    }

    /// Derive an independent stream (for per-case seeding).
    uint64_t fork(uint64_t salt) {
        uint64_t z = state_ ^ (0xD1B54A32D192ED03ULL * (salt + 1));
        z = (z ^ (z >> 29)) * 0xFF51AFD7ED558CCDULL;
        return z ^ (z >> 32);
    }

    /// Fisher-Yates shuffle, explicit so orders are portable.
    template <class Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_ = 0;
    bool has_gauss_ = false;
    double gauss_ = 0.0;
};

} // namespace angio
