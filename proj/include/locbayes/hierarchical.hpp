#pragma once

// Outer Monte-Carlo average over sampled start curves: draw likely
// coefficient vectors from the start-curve posterior, run the inner
// empirical-Bayes estimator once per draw against cached local designs,
// and average the resulting curves pointwise.  A point-mass posterior
// reproduces the plug-in estimate exactly.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "level_model.hpp"
#include "linear_model.hpp"
#include "poisson_model.hpp"
#include "start_curve.hpp"
#include "util.hpp"

namespace locbayes {

enum class LevelEbMode { Local, Global, Parametric, Stein };

struct HierarchicalConfig {
    int draws = 100;
    std::uint64_t seed = 1;
    bool plugin_only = false; // evaluate at xi_hat instead of averaging
};

struct HierarchicalCurve {
    std::vector<double> estimate;
    std::vector<double> prior_weight;
    std::vector<double> slope; // empty unless the inner model fits one
    std::vector<double> mc_se; // zero for plug-in runs
    int draws_used = 0;
    int draws_skipped = 0;
};

namespace detail {

// Means are accumulated as first + mean(deviations from the first draw),
// so identical draws average to the identical value bit for bit.
struct DrawAccumulator {
    std::vector<double> first;
    std::vector<double> dev_sum;
    std::vector<double> dev_sq;
    int count = 0;

    explicit DrawAccumulator(int size)
        : first(size, 0.0), dev_sum(size, 0.0), dev_sq(size, 0.0) {}

    void add(const std::vector<double>& v) {
        if (count == 0) {
            first = v;
        } else {
            for (std::size_t i = 0; i < v.size(); ++i) {
                double d = v[i] - first[i];
                dev_sum[i] += d;
                dev_sq[i] += d * d;
            }
        }
        ++count;
    }

    std::vector<double> mean() const {
        std::vector<double> out(first.size());
        for (std::size_t i = 0; i < first.size(); ++i)
            out[i] = first[i] + dev_sum[i] / count;
        return out;
    }

    // standard error of the mean from the draw variance
    std::vector<double> se() const {
        std::vector<double> out(first.size(), 0.0);
        if (count < 2) return out;
        for (std::size_t i = 0; i < first.size(); ++i) {
            double m = dev_sum[i] / count;
            double var = (dev_sq[i] - count * m * m) / (count - 1);
            out[i] = var > 0.0 ? std::sqrt(var / count) : 0.0;
        }
        return out;
    }
};

// Runs fn once per sampled start curve (or once at xi_hat for plug-in),
// skipping draws whose inner estimator fails; more than 20% skipped
// draws abort the run.
template <typename DrawFn>
HierarchicalCurve average_over_draws(const HierarchicalConfig& cfg,
                                     const StartCurvePosterior& start, int grid_size,
                                     bool with_slope, DrawFn&& fn) {
    HierarchicalCurve out;
    if (cfg.plugin_only) {
        std::vector<double> est(grid_size), w(grid_size), sl(grid_size);
        if (!fn(start.xi, est, w, with_slope ? &sl : nullptr))
            throw std::runtime_error("hierarchical: plug-in estimate failed");
        out.estimate = est;
        out.prior_weight = w;
        if (with_slope) out.slope = sl;
        out.mc_se.assign(grid_size, 0.0);
        out.draws_used = 1;
        return out;
    }
    if (cfg.draws < 1)
        throw std::invalid_argument("hierarchical: draws must be >= 1");
    std::vector<VectorXd> draws = sample_start_curves(start, cfg.draws, cfg.seed);

    std::vector<std::vector<double>> ests(draws.size()), ws(draws.size()), sls(draws.size());
    std::vector<char> ok(draws.size(), 0);
    parallel_for(static_cast<int>(draws.size()), [&](int m) {
        std::vector<double> est(grid_size), w(grid_size), sl(grid_size);
        bool good = false;
        try {
            good = fn(draws[m], est, w, with_slope ? &sl : nullptr);
        } catch (const std::exception&) {
            good = false;
        }
        if (good) {
            ests[m] = std::move(est);
            ws[m] = std::move(w);
            if (with_slope) sls[m] = std::move(sl);
            ok[m] = 1;
        }
    });

    DrawAccumulator acc_est(grid_size), acc_w(grid_size), acc_sl(grid_size);
    for (std::size_t m = 0; m < draws.size(); ++m) {
        if (!ok[m]) {
            ++out.draws_skipped;
            continue;
        }
        acc_est.add(ests[m]);
        acc_w.add(ws[m]);
        if (with_slope) acc_sl.add(sls[m]);
        ++out.draws_used;
    }
    if (out.draws_used == 0 ||
        out.draws_skipped > 0.2 * static_cast<double>(draws.size()))
        throw std::runtime_error("hierarchical: too many skipped draws (" +
                                 std::to_string(out.draws_skipped) + " of " +
                                 std::to_string(draws.size()) + ")");
    out.estimate = acc_est.mean();
    out.prior_weight = acc_w.mean();
    out.mc_se = acc_est.se();
    if (with_slope) out.slope = acc_sl.mean();
    return out;
}

} // namespace detail

struct LevelGridPoint {
    double x = 0.0;
    double s0 = 0.0;
    double m_tilde = 0.0;
};

/// Hierarchical level estimate: per draw, the empirical-Bayes level
/// scheme runs against the cached cell and grid summaries with the start
/// curve evaluated at the drawn coefficients; the curves are averaged.
inline HierarchicalCurve final_level_estimate(const HierarchicalConfig& cfg,
                                              const StartCurvePosterior& start,
                                              const std::vector<LevelCellSummary>& cells,
                                              const SigmaInference& sigma,
                                              const std::vector<LevelGridPoint>& grid,
                                              LevelEbMode mode) {
    int g = static_cast<int>(grid.size());
    auto draw_fn = [&](const VectorXd& xi, std::vector<double>& est,
                       std::vector<double>& weight, std::vector<double>*) {
        std::vector<double> m0_mid(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j)
            m0_mid[j] = start.basis.value(xi, cells[j].x0);
        switch (mode) {
        case LevelEbMode::Local:
            for (int i = 0; i < g; ++i) {
                double m0x = start.basis.value(xi, grid[i].x);
                LevelEbResult r =
                    eb_level_estimate(sigma.sigma2, grid[i].s0, grid[i].m_tilde, m0x);
                est[i] = r.estimate;
                weight[i] = r.rho;
            }
            break;
        case LevelEbMode::Global: {
            double w = global_shrink_weight(sigma.sigma2, cells, m0_mid);
            for (int i = 0; i < g; ++i) {
                double m0x = start.basis.value(xi, grid[i].x);
                est[i] = w * m0x + (1.0 - w) * grid[i].m_tilde;
                weight[i] = w;
            }
            break;
        }
        case LevelEbMode::Parametric: {
            std::vector<double> r_mid(cells.size(), 1.0);
            for (int i = 0; i < g; ++i) {
                double m0x = start.basis.value(xi, grid[i].x);
                LevelEbResult r = parametric_shrink_estimate(
                    sigma.sigma2, cells, m0_mid, r_mid, grid[i].s0, 1.0, m0x,
                    grid[i].m_tilde);
                est[i] = r.estimate;
                weight[i] = r.rho;
            }
            break;
        }
        case LevelEbMode::Stein: {
            double z = 0.0;
            int k = 0;
            for (std::size_t j = 0; j < cells.size(); ++j) {
                if (!cells[j].valid) continue;
                z += level_p0(cells[j].s0, cells[j].m_tilde, m0_mid[j]);
                ++k;
            }
            for (int i = 0; i < g; ++i) {
                double m0x = start.basis.value(xi, grid[i].x);
                est[i] = stein_estimate(sigma.sigma2, cells, m0_mid, m0x,
                                        grid[i].m_tilde);
                double w = z > 0.0 ? (k - 2.0) * sigma.sigma2 / z : 1.0;
                weight[i] = std::min(1.0, std::max(0.0, w));
            }
            break;
        }
        }
        return true;
    };
    return detail::average_over_draws(cfg, start, g, false, draw_fn);
}

struct LinearGridPoint {
    double x = 0.0;
    Matrix2d s = Matrix2d::Zero();
    Vector2d fit = Vector2d::Zero();
    Matrix2d a = Matrix2d::Identity(); // precision shape A_x at this x
};

/// Hierarchical linear estimate: per draw, the scalar prior precision is
/// refit by profile likelihood against the drawn start curve, and the
/// structured conjugate posterior is evaluated on the grid.
inline HierarchicalCurve final_linear_estimate(const HierarchicalConfig& cfg,
                                               const StartCurvePosterior& start,
                                               const std::vector<LinearCellSummary>& cells,
                                               const std::vector<Matrix2d>& a_at_cells,
                                               const SigmaInference& sigma,
                                               const std::vector<LinearGridPoint>& grid) {
    if (cells.size() != a_at_cells.size())
        throw std::invalid_argument("final_linear_estimate: size mismatch");
    int g = static_cast<int>(grid.size());
    auto draw_fn = [&](const VectorXd& xi, std::vector<double>& est,
                       std::vector<double>& weight, std::vector<double>* slope) {
        std::vector<W0FitCell> fit_cells;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!cells[j].valid) continue;
            W0FitCell c;
            c.d = cells[j].fit - Vector2d(start.basis.value(xi, cells[j].x0),
                                          start.basis.deriv(xi, cells[j].x0));
            c.s = cells[j].s;
            c.a = a_at_cells[j];
            c.s0 = cells[j].s0;
            fit_cells.push_back(c);
        }
        if (fit_cells.empty()) return false;
        double w0 = fit_w0_profile(sigma.sigma2, fit_cells);
        for (int i = 0; i < g; ++i) {
            LinearPrior prior;
            prior.a0 = start.basis.value(xi, grid[i].x);
            prior.b0 = start.basis.deriv(xi, grid[i].x);
            prior.w0 = w0 * grid[i].a;
            LinearPosterior post = linear_posterior(prior, grid[i].s, grid[i].fit);
            est[i] = post.mean[0];
            if (slope) (*slope)[i] = post.mean[1];
            Matrix2d prior_w = post.precision.inverse() * prior.w0;
            weight[i] = prior_w(0, 0);
        }
        return true;
    };
    return detail::average_over_draws(cfg, start, g, true, draw_fn);
}

struct PoissonGridPoint {
    double x = 0.0;
    PoissonLocalStats stats;
};

struct PoissonCellSummary {
    double x0 = 0.0;
    PoissonLocalStats stats;
    bool valid = false;
};

/// Hierarchical Poisson level estimate with the local or pooled
/// empirical-Bayes inner scheme; start curves are log-linear, so every
/// drawn curve stays positive.
inline HierarchicalCurve final_poisson_estimate(const HierarchicalConfig& cfg,
                                                const StartCurvePosterior& start,
                                                const std::vector<PoissonCellSummary>& cells,
                                                const std::vector<PoissonGridPoint>& grid,
                                                bool pooled) {
    int g = static_cast<int>(grid.size());
    auto draw_fn = [&](const VectorXd& xi, std::vector<double>& est,
                       std::vector<double>& weight, std::vector<double>*) {
        auto m0_at = [&](double x) { return std::exp(start.basis.value(xi, x)); };
        double pbar0 = 0.0;
        if (pooled) {
            int k = 0;
            for (const auto& c : cells) {
                if (!c.valid) continue;
                pbar0 += poisson_p0(c.stats, m0_at(c.x0));
                ++k;
            }
            if (k < 1) return false;
            pbar0 /= k;
        }
        for (int i = 0; i < g; ++i) {
            double m0x = m0_at(grid[i].x);
            PoissonEbResult r = pooled ? poisson_eb_global(grid[i].stats, m0x, pbar0)
                                       : poisson_eb_local(grid[i].stats, m0x);
            est[i] = r.estimate;
            weight[i] = r.prior_weight;
        }
        return true;
    };
    return detail::average_over_draws(cfg, start, g, false, draw_fn);
}

} // namespace locbayes
