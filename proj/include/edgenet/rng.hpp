#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace edgenet {

// Seeded random source with hand-rolled distributions.
//
// std::uniform_real_distribution and friends are implementation-defined, so
// every draw here is specified in terms of raw mt19937_64 output. Identical
// seeds produce identical streams on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be >= 1.
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Derive an independent child stream. Uses splitmix64 so that nearby
    // stream ids do not correlate.
    Rng split(uint64_t stream) const {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

    // Deterministic Fisher-Yates shuffle.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace edgenet
