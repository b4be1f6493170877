#pragma once

// Window selection: a goodness-of-fit driven adaptive rule that expands
// the local window as long as the order-p residual sum stays below the
// chi-square quantile it would follow under a locally polynomial truth,
// plus post-smoothing of the selected widths.

#include <algorithm>
#include <cmath>
#include <vector>

#include "dataset.hpp"
#include "kernel.hpp"
#include "local_fit.hpp"
#include "special.hpp"
#include "util.hpp"

namespace locbayes {

struct BandwidthRule {
    enum class Mode { Fixed, Adaptive } mode = Mode::Fixed;
    double fixed_h = 0.0;
    double level = 0.80; // quantile level for the fit test
    int order = 1;       // local polynomial order used in the test
    double growth = 1.2;
    double h0_override = 0.0; // optional explicit minimum width
};

/// Smallest window width around x containing at least `points` data
/// points (twice the distance to the points-th nearest covariate).
inline double min_window_width(const Dataset& data, double x, int points) {
    if (points > data.size())
        throw std::invalid_argument("min_window_width: not enough data points");
    std::vector<double> dist(data.size());
    for (int i = 0; i < data.size(); ++i) dist[i] = std::fabs(data.xv(i) - x);
    std::nth_element(dist.begin(), dist.begin() + (points - 1), dist.end());
    return 2.0 * dist[points - 1];
}

/// Expand the window at x geometrically from the minimum width while the
/// order-p fit statistic Q0/sigma2 stays at or below the chi-square
/// quantile with s0 - (p+1) degrees of freedom (uniform weights, so s0
/// counts the points in the window).  Returns the last passing width.
inline double adaptive_window(const Dataset& data, double x, double sigma2,
                              const BandwidthRule& rule) {
    if (!(sigma2 > 0.0))
        throw std::invalid_argument("adaptive_window: need a positive pilot sigma2");
    int p = rule.order;
    if (p < 0 || p > kMaxLocalOrder)
        throw std::invalid_argument("adaptive_window: order must be in 0..3");
    int min_points = std::max(5, 2 * (p + 1));
    if (data.size() < p + 2)
        throw std::runtime_error("adaptive_window: fewer than p+2 data points");
    Kernel uniform = Kernel::uniform();
    double range = data.x_max() - data.x_min();
    double h_max = 2.0 * std::max(range, 1e-12);
    double h = rule.h0_override > 0.0
                   ? rule.h0_override
                   : min_window_width(data, x, std::min(min_points, data.size()));
    if (!(h > 0.0)) h = 1e-8 * std::max(range, 1.0);
    h = std::min(h, h_max);

    auto test_pass = [&](double width, bool& testable) {
        LocalDesign d = local_design(data, x, width, uniform, p);
        double dof = d.s0() - (p + 1.0);
        if (dof < 1.0) {
            testable = false;
            return false;
        }
        LocalFitResult fit;
        try {
            fit = local_poly_fit(d, p);
        } catch (const std::runtime_error&) {
            testable = false;
            return false;
        }
        testable = true;
        return fit.q0 / sigma2 <= chi2_quantile(rule.level, dof);
    };

    // grow until the statistic is testable at all
    bool testable = false;
    bool pass = test_pass(h, testable);
    while (!testable && h < h_max) {
        h = std::min(h * rule.growth, h_max);
        pass = test_pass(h, testable);
    }
    if (!testable)
        throw std::runtime_error("adaptive_window: no testable window up to the data range");
    if (!pass) return h;

    double last_passing = h;
    while (h < h_max) {
        h = std::min(h * rule.growth, h_max);
        bool t2 = false;
        if (test_pass(h, t2) && t2)
            last_passing = h;
        else
            break;
    }
    return last_passing;
}

/// Post-smoothing of selected widths over the evaluation grid.
inline std::vector<double> smooth_bandwidths(const std::vector<double>& h, int window) {
    return moving_average(h, window);
}

} // namespace locbayes
