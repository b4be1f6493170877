#pragma once

// Normal-model multiplicative correction: locally m(t) = m0(t) a with a
// normal prior a ~ N(1, sigma^2/w0).  The conjugate posterior gives
// m_hat(x) = m0(x) (w0 + u0 a_tilde)/(w0 + u0) with u0 = sum w m0(x_i)^2
// and a_tilde the weighted regression of y on m0.

#include <cmath>
#include <limits>
#include <vector>

#include "dataset.hpp"
#include "kernel.hpp"
#include "level_model.hpp"

namespace locbayes {

struct MultCorrectionStats {
    double s0 = 0.0;
    double u0 = 0.0;      // sum w m0(x_i)^2
    double uy = 0.0;      // sum w m0(x_i) y_i
    double q0 = 0.0;      // residual sum at the fitted correction
    double a_tilde = 0.0; // uy / u0

    bool has_fit() const { return u0 > 0.0; }
};

template <typename StartFn>
inline MultCorrectionStats mult_correction_stats(const Dataset& data, double x, double h,
                                                 const Kernel& kernel, StartFn&& m0_at) {
    MultCorrectionStats st;
    double syy = 0.0;
    for (int i = 0; i < data.size(); ++i) {
        double w = kernel.influence(h, data.xv(i), x);
        if (w <= 0.0) continue;
        double m0i = m0_at(data.xv(i));
        st.s0 += w;
        st.u0 += w * m0i * m0i;
        st.uy += w * m0i * data.y[i];
        syy += w * data.y[i] * data.y[i];
    }
    if (st.u0 > 0.0) {
        st.a_tilde = st.uy / st.u0;
        st.q0 = std::max(0.0, syy - st.a_tilde * st.a_tilde * st.u0);
    }
    return st;
}

/// Posterior-mean estimate m0(x) (w0 + u0 a_tilde)/(w0 + u0); the second
/// factor is the shrunken correction, between min(1, a_tilde) and
/// max(1, a_tilde).
inline double mult_correction_estimate(const MultCorrectionStats& stats, double m0_x,
                                       double w0) {
    if (w0 < 0.0) throw std::invalid_argument("mult_correction_estimate: w0 must be >= 0");
    if (std::isinf(w0)) return m0_x;
    if (!(w0 + stats.u0 > 0.0))
        throw std::runtime_error("mult_correction_estimate: no information");
    if (stats.u0 == 0.0) return m0_x;
    return m0_x * (w0 + stats.u0 * stats.a_tilde) / (w0 + stats.u0);
}

/// Fit statistic u0 (a_tilde - 1)^2, pooled and truncated the same way as
/// in the level model.
inline double mult_correction_p0(const MultCorrectionStats& stats) {
    double d = stats.a_tilde - 1.0;
    return stats.u0 * d * d;
}

/// Local empirical-Bayes precision from the level-model convention:
/// prior weight rho = min(1, sigma2/P0) and w0 = u0 rho/(1-rho), infinite
/// when the correction is indistinguishable from 1.
inline double mult_correction_eb_w0(double sigma2, const MultCorrectionStats& stats) {
    double p0 = mult_correction_p0(stats);
    if (p0 <= sigma2) return std::numeric_limits<double>::infinity();
    double rho = sigma2 / p0;
    return stats.u0 * rho / (1.0 - rho);
}

/// Pooled scale estimate for the correction model: residual sums around
/// the fitted corrections with one parameter per cell.
inline SigmaInference mult_correction_pooled_sigma(const std::vector<MultCorrectionStats>& cells) {
    std::vector<double> q0s, s0s;
    for (const auto& c : cells)
        if (c.has_fit()) {
            q0s.push_back(c.q0);
            s0s.push_back(c.s0);
        }
    return pooled_sigma(q0s, s0s, 0);
}

} // namespace locbayes
