#pragma once

// Seeded random number generation.  The generator is std::mt19937_64
// (19937-bit state); normal variates come from inverting the standard
// normal CDF on the generator's uniforms, so a given seed produces the
// same stream regardless of standard-library internals.

#include <cstdint>
#include <random>

#include "special.hpp"

namespace locbayes {

namespace detail {
// splitmix64 mix, used to derive independent substream seeds
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(detail::mix_seed(seed)) {}

    /// Uniform on the open interval (0,1).
    double uniform() {
        return (static_cast<double>(gen_()) + 0.5) * 0x1p-64;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() { return normal_quantile(uniform()); }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Poisson count by sequential inversion (exact, O(mean)).
    long poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: mean must be >= 0");
        if (mean == 0.0) return 0;
        double l = std::exp(-mean);
        if (l > 0.0) {
            long k = 0;
            double p = uniform();
            while (p > l) {
                ++k;
                p *= uniform();
            }
            return k;
        }
        // very large mean: split into halves to keep exp(-mean) representable
        return poisson(0.5 * mean) + poisson(0.5 * mean);
    }

    /// Deterministic substream generator for stream index `idx`,
    /// independent of how much of this stream has been consumed.
    Rng substream(std::uint64_t idx) const {
        return Rng(seed_ ^ detail::mix_seed(idx + 1));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace locbayes
