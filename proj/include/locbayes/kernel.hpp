#pragma once

// Kernel functions on [-1/2, 1/2] and the rescaled influence weights
// w_i(x) = Kbar((x_i - x)/h) with Kbar(z) = K(z)/K(0), so a point at the
// evaluation location has weight 1 and points outside the window have
// weight 0.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace locbayes {

enum class KernelType { Uniform, Epanechnikov };

/// A symmetric probability-density kernel supported on [-1/2, 1/2]
/// together with its closed-form constants: K(0), R_K = int K^2,
/// the kernel standard deviation, and the moments k2, k4.
struct Kernel {
    KernelType type;
    double k0;      // K(0)
    double r_k;     // int K(z)^2 dz
    double sigma_k; // sqrt(k2)
    double k2;      // int z^2 K(z) dz
    double k4;      // int z^4 K(z) dz

    static Kernel uniform() {
        return Kernel{KernelType::Uniform, 1.0, 1.0, std::sqrt(1.0 / 12.0),
                      1.0 / 12.0, 1.0 / 80.0};
    }

    // K(z) = (3/2)(1 - 4 z^2): the kernel minimising sigma_K * R_K among
    // densities on [-1/2, 1/2], hence the default everywhere.
    static Kernel epanechnikov() {
        return Kernel{KernelType::Epanechnikov, 1.5, 1.2, std::sqrt(0.05),
                      0.05, 3.0 / 560.0};
    }

    static Kernel parse(const std::string& name) {
        if (name == "uniform") return uniform();
        if (name == "epanechnikov") return epanechnikov();
        throw std::invalid_argument("unknown kernel \"" + name +
                                    "\" (expected uniform|epanechnikov)");
    }

    const char* name() const {
        return type == KernelType::Uniform ? "uniform" : "epanechnikov";
    }

    /// Density K(z).  The support test carries an ulp-sized tolerance so
    /// points sitting exactly on a window edge are not lost to rounding.
    double density(double z) const {
        if (std::fabs(z) > 0.5 + 1e-12) return 0.0;
        switch (type) {
        case KernelType::Uniform: return 1.0;
        case KernelType::Epanechnikov:
            return std::max(0.0, 1.5 * (1.0 - 4.0 * z * z));
        }
        return 0.0;
    }

    /// Rescaled kernel Kbar(z) = K(z)/K(0), equal to 1 at z = 0.
    double rescaled(double z) const { return density(z) / k0; }

    /// Influence weight w_i(x) = Kbar((xi - x)/h).
    double influence(double h, double xi, double x) const {
        if (!(h > 0.0)) throw std::invalid_argument("influence: h must be positive");
        return rescaled((xi - x) / h);
    }
};

} // namespace locbayes
