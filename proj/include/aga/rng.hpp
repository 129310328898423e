#pragma once

#include <cmath>
#include <cstdint>

#include "aga/error.hpp"

namespace aga {

// Counter-based generator: output i is a hash of (seed, i), so streams are
// reproducible bit-for-bit across platforms and independent of call history
// length. The mixer is SplitMix64.
class Rng {
  public:
    enum class Algorithm : uint32_t { kSplitMix64 = 0 };

    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }
    Algorithm algorithm() const { return Algorithm::kSplitMix64; }

    uint64_t next_u64() {
        uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller. One draw consumes two uniforms.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Knuth's product method; large means are split so the loop stays short.
    int poisson(double lambda) {
        if (lambda < 0.0) throw NumericError("poisson: negative rate");
        int total = 0;
        while (lambda > 30.0) {
            total += poisson(lambda * 0.5);
            lambda *= 0.5;
        }
        const double limit = std::exp(-lambda);
        double p = 1.0;
        int k = 0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return total + k - 1;
    }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Derive an independent stream; used to decorrelate sub-generators.
    Rng fork(uint64_t stream) const {
        uint64_t z = seed_ ^ (0xA3EC647659359ACDull + stream * 0xD1B54A32D192ED03ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

  private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace aga
