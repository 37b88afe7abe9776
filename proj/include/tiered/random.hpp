#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tiered {

// std distributions are implementation-defined; these helpers keep every
// seeded stream bit-identical across standard libraries.

/// Uniform double in the open interval (0, 1).
inline double uniform_open(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

/// Standard normal via the Marsaglia polar method; caches the spare draw.
class NormalSampler {
  public:
    double operator()(std::mt19937_64& rng) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform_open(rng) - 1.0;
            v = 2.0 * uniform_open(rng) - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

  private:
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Exponential variate with the given rate.
inline double exponential(std::mt19937_64& rng, double rate) {
    return -std::log(uniform_open(rng)) / rate;
}

} // namespace tiered
