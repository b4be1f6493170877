#pragma once

// Local Bayes methods for Poisson regression: the Gamma-conjugate local
// level model, empirical-Bayes precision estimates with local and pooled
// variants, the log-linear start-curve MLE with model-robust covariance,
// a local log-linear slope posterior evaluated by quadrature, and the
// multiplicative-correction model.

#include <cmath>
#include <vector>

#include "dataset.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "start_curve.hpp"

namespace locbayes {

/// Gamma prior for the local Poisson level with mean m0 and variance
/// m0/w0, i.e. parameters (w0 m0, w0).
struct GammaPrior {
    double shape = 0.0;
    double rate = 0.0;

    static GammaPrior from_level(double w0, double m0) {
        if (w0 < 0.0) throw std::invalid_argument("GammaPrior: w0 must be >= 0");
        if (w0 > 0.0 && !(m0 > 0.0))
            throw std::invalid_argument("GammaPrior: m0 must be positive");
        return GammaPrior{w0 * m0, w0};
    }
};

struct PoissonLocalStats {
    double s0 = 0.0;
    double t0 = 0.0;
    double wy = 0.0; // sum w_i y_i

    double m_tilde() const {
        if (!(s0 > 0.0)) throw std::runtime_error("PoissonLocalStats: empty neighborhood");
        return wy / s0;
    }
};

inline PoissonLocalStats poisson_local_stats(const Dataset& data, double x, double h,
                                             const Kernel& kernel) {
    PoissonLocalStats st;
    for (int i = 0; i < data.size(); ++i) {
        double w = kernel.influence(h, data.xv(i), x);
        if (w <= 0.0) continue;
        st.s0 += w;
        st.t0 += w * w;
        st.wy += w * data.y[i];
    }
    return st;
}

/// Throws unless every response is a nonnegative integer count.
inline void validate_counts(const Dataset& data) {
    for (double v : data.y)
        if (v < 0.0 || std::floor(v) != v)
            throw std::invalid_argument("count data required: responses must be nonnegative integers");
}

struct PoissonPosterior {
    double shape = 0.0; // w0 m0 + sum w y
    double rate = 0.0;  // w0 + s0

    double mean() const {
        if (!(rate > 0.0)) throw std::runtime_error("PoissonPosterior: zero information");
        return shape / rate;
    }
    double variance() const { return shape / (rate * rate); }
};

/// Conjugate update: Gamma(w0 m0 + sum w y, w0 + s0).
inline PoissonPosterior poisson_level_posterior(const GammaPrior& prior,
                                                const PoissonLocalStats& stats) {
    if (!(prior.rate + stats.s0 > 0.0))
        throw std::runtime_error("poisson_level_posterior: no information");
    return PoissonPosterior{prior.shape + stats.wy, prior.rate + stats.s0};
}

/// Local goodness-of-fit statistic (s0/m0)(m_tilde - m0)^2, whose mean is
/// t0/s0 + s0/w0.
inline double poisson_p0(const PoissonLocalStats& stats, double m0) {
    if (!(m0 > 0.0)) throw std::invalid_argument("poisson_p0: m0 must be positive");
    double d = stats.m_tilde() - m0;
    return stats.s0 / m0 * d * d;
}

struct PoissonEbResult {
    double estimate = 0.0;
    double prior_weight = 0.0;
    double w0 = 0.0; // inf when the prior fits perfectly
};

/// Local empirical-Bayes estimate: solve P0 = t0/s0 + s0/w0 for w0 and
/// plug into the conjugate mean.  A nonpositive excess P0 - t0/s0 means
/// the prior fits perfectly (w0 = infinity, estimate = m0).
inline PoissonEbResult poisson_eb_local(const PoissonLocalStats& stats, double m0) {
    double excess = poisson_p0(stats, m0) - stats.t0 / stats.s0;
    if (excess <= 0.0)
        return PoissonEbResult{m0, 1.0, std::numeric_limits<double>::infinity()};
    double weight = 1.0 / (1.0 + excess);
    double estimate = weight * m0 + (1.0 - weight) * stats.m_tilde();
    return PoissonEbResult{estimate, weight, stats.s0 / excess};
}

/// Pooled variant: weight 1/Pbar0 on the start value, truncated into
/// [0,1], with Pbar0 the average of the per-cell P0 statistics.
inline PoissonEbResult poisson_eb_global(const PoissonLocalStats& stats, double m0,
                                         double pbar0) {
    double weight = pbar0 > 1.0 ? 1.0 / pbar0 : 1.0;
    double estimate = weight * m0 + (1.0 - weight) * stats.m_tilde();
    double w0 = weight >= 1.0 ? std::numeric_limits<double>::infinity()
                              : stats.s0 * weight / (1.0 - weight);
    return PoissonEbResult{estimate, weight, w0};
}

/// Poisson log-linear fit: xi maximises the likelihood with mean
/// exp(xi' z(x)) by Newton iteration with step halving.  V is the
/// model-robust sandwich covariance (valid without assuming the mean is
/// log-linear); the posterior of xi is approximately N(xi, V/n).
inline StartCurvePosterior loglinear_mle_and_cov(const Dataset& data,
                                                 const LinearBasis& basis) {
    validate_counts(data);
    int p = basis.size();
    int n = data.size();
    std::vector<VectorXd> zs(n);
    for (int i = 0; i < n; ++i) zs[i] = basis.z(data.xv(i));

    VectorXd xi = VectorXd::Zero(p);
    xi[0] = std::log(data.y_mean() + 0.5);

    auto loglik = [&](const VectorXd& v) {
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            double eta = v.dot(zs[i]);
            ll += data.y[i] * eta - std::exp(eta);
        }
        return ll;
    };

    double ll = loglik(xi);
    double grad_norm = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 100; ++it) {
        VectorXd grad = VectorXd::Zero(p);
        MatrixXd hess = MatrixXd::Zero(p, p);
        for (int i = 0; i < n; ++i) {
            double mu = std::exp(xi.dot(zs[i]));
            grad.noalias() += (data.y[i] - mu) * zs[i];
            hess.noalias() += mu * zs[i] * zs[i].transpose();
        }
        grad_norm = grad.norm();
        if (grad_norm < 1e-9 * std::max(1.0, std::fabs(ll))) break;
        VectorXd step = solve_spd(hess, grad, "loglinear_mle (singular information)");
        double scale = 1.0;
        bool accepted = false;
        for (int half = 0; half < 40 && !accepted; ++half) {
            VectorXd trial = xi + scale * step;
            double ll_trial = loglik(trial);
            if (std::isfinite(ll_trial) && ll_trial >= ll) {
                xi = trial;
                ll = ll_trial;
                accepted = true;
            }
            scale *= 0.5;
        }
        if (!accepted) break; // stuck; the stationarity check below decides
    }
    {
        VectorXd grad = VectorXd::Zero(p);
        for (int i = 0; i < n; ++i)
            grad.noalias() += (data.y[i] - std::exp(xi.dot(zs[i]))) * zs[i];
        grad_norm = grad.norm();
    }
    if (!(grad_norm < 1e-6 * std::max(1.0, std::fabs(ll))))
        throw std::runtime_error("loglinear_mle: Newton iteration did not converge "
                                 "(possible separation)");

    MatrixXd bread = MatrixXd::Zero(p, p);
    MatrixXd meat = MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i) {
        double mu = std::exp(xi.dot(zs[i]));
        double r = data.y[i] - mu;
        bread.noalias() += mu * zs[i] * zs[i].transpose();
        meat.noalias() += (r * r) * zs[i] * zs[i].transpose();
    }
    bread /= n;
    meat /= n;
    Eigen::LDLT<MatrixXd> ldlt(bread);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("loglinear_mle: singular information matrix");
    MatrixXd v = ldlt.solve(ldlt.solve(meat).transpose()).transpose();
    return StartCurvePosterior{basis, xi, symmetrize(v) / n};
}

/// Grid prior for the local slope b; defaults match the window scale.
struct SlopePriorGrid {
    double mean = 0.0;
    double sd = 0.0;    // 0 means "use 2/h"
    int points = 401;
    double span = 5.0;  // grid half-width in prior standard deviations
};

struct LoglinearLocalPosterior {
    std::vector<double> b;        // grid
    std::vector<double> density;  // normalized posterior of the slope
    double mean_m = 0.0;          // posterior mean of m(x)
    double sd_m = 0.0;            // posterior standard deviation of m(x)
};

/// Local model m(t) = a exp{b (t - x)} with a Gamma prior on a and a
/// normal prior on b.  The slope posterior is evaluated on a grid and
/// normalized by quadrature; the estimate of m(x) integrates the
/// conditional conjugate mean over it.
inline LoglinearLocalPosterior loglinear_local_posterior(const Dataset& data, double x,
                                                         double h, const Kernel& kernel,
                                                         double w0, double m0,
                                                         SlopePriorGrid prior = {}) {
    if (!(h > 0.0))
        throw std::invalid_argument("loglinear_local_posterior: h must be positive");
    if (w0 > 0.0 && !(m0 > 0.0))
        throw std::invalid_argument("loglinear_local_posterior: m0 must be positive");
    if (prior.points < 3)
        throw std::invalid_argument("loglinear_local_posterior: need >= 3 grid points");
    double sd = prior.sd > 0.0 ? prior.sd : 2.0 / h;

    // local sums that do not depend on b
    std::vector<double> ws, dxs;
    double s0 = 0.0, wy = 0.0, wxy = 0.0;
    for (int i = 0; i < data.size(); ++i) {
        double w = kernel.influence(h, data.xv(i), x);
        if (w <= 0.0) continue;
        double dx = data.xv(i) - x;
        ws.push_back(w);
        dxs.push_back(dx);
        s0 += w;
        wy += w * data.y[i];
        wxy += w * dx * data.y[i];
    }
    if (!(w0 + s0 > 0.0))
        throw std::runtime_error("loglinear_local_posterior: no information");

    LoglinearLocalPosterior out;
    int np = prior.points;
    out.b.resize(np);
    out.density.resize(np);
    std::vector<double> log_post(np);
    double shape = w0 * m0 + wy;
    double lo = prior.mean - prior.span * sd;
    double hi = prior.mean + prior.span * sd;
    for (int g = 0; g < np; ++g) {
        double b = lo + (hi - lo) * g / (np - 1);
        out.b[g] = b;
        double denom = w0;
        for (std::size_t i = 0; i < ws.size(); ++i)
            denom += ws[i] * std::exp(b * dxs[i]);
        double zp = (b - prior.mean) / sd;
        log_post[g] = -0.5 * zp * zp + b * wxy - shape * std::log(denom);
    }
    double mx = *std::max_element(log_post.begin(), log_post.end());
    double step = (hi - lo) / (np - 1);
    double total = 0.0;
    for (int g = 0; g < np; ++g) {
        out.density[g] = std::exp(log_post[g] - mx);
        total += out.density[g] * (g == 0 || g == np - 1 ? 0.5 : 1.0) * step;
    }
    if (!(total > 0.0))
        throw std::runtime_error("loglinear_local_posterior: degenerate slope posterior");
    for (double& d : out.density) d /= total;

    // reject a visibly truncated posterior
    double edge_mass = 0.5 * (out.density.front() + out.density[1]) * step +
                       0.5 * (out.density.back() + out.density[np - 2]) * step;
    if (edge_mass > 0.01)
        throw std::runtime_error("loglinear_local_posterior: slope grid too small "
                                 "(posterior mass at the edges)");

    double mean = 0.0, second = 0.0;
    for (int g = 0; g < np; ++g) {
        double denom = w0;
        for (std::size_t i = 0; i < ws.size(); ++i)
            denom += ws[i] * std::exp(out.b[g] * dxs[i]);
        double cond_mean = shape / denom;
        double cond_var = shape / (denom * denom);
        double wq = out.density[g] * (g == 0 || g == np - 1 ? 0.5 : 1.0) * step;
        mean += wq * cond_mean;
        second += wq * (cond_var + cond_mean * cond_mean);
    }
    out.mean_m = mean;
    out.sd_m = std::sqrt(std::max(0.0, second - mean * mean));
    return out;
}

/// Local multiplicative-correction sums: the conjugate update for the
/// correction factor a in m(t) = m0(t) a needs sum w y and sum w m0(x_i).
struct PoissonMultStats {
    double s0 = 0.0;
    double wy = 0.0; // sum w_i y_i
    double wm = 0.0; // sum w_i m0(x_i)
};

template <typename StartFn>
inline PoissonMultStats poisson_mult_stats(const Dataset& data, double x, double h,
                                           const Kernel& kernel, StartFn&& m0_at) {
    PoissonMultStats st;
    for (int i = 0; i < data.size(); ++i) {
        double w = kernel.influence(h, data.xv(i), x);
        if (w <= 0.0) continue;
        double m0i = m0_at(data.xv(i));
        if (!(m0i > 0.0))
            throw std::invalid_argument("poisson_mult_stats: m0 must be positive on N(x)");
        st.s0 += w;
        st.wy += w * data.y[i];
        st.wm += w * m0i;
    }
    return st;
}

/// Bayes estimate under a Gamma(w0, w0) prior centred at 1 for the local
/// correction factor: m0(x) (w0 + sum w y) / (w0 + sum w m0(x_i)).
inline double poisson_mult_estimate(const PoissonMultStats& stats, double m0_x, double w0) {
    if (w0 < 0.0) throw std::invalid_argument("poisson_mult_estimate: w0 must be >= 0");
    if (std::isinf(w0)) return m0_x; // correction pinned at 1
    if (!(w0 + stats.wm > 0.0))
        throw std::runtime_error("poisson_mult_estimate: zero denominator");
    return m0_x * (w0 + stats.wy) / (w0 + stats.wm);
}

/// Fit statistic for the multiplicative model, approximately
/// 1 + (sum w m0)/w0 in expectation.
inline double poisson_mult_p0(const PoissonMultStats& stats, double m0_x) {
    if (!(m0_x > 0.0)) throw std::invalid_argument("poisson_mult_p0: m0 must be positive");
    if (!(stats.wm > 0.0))
        throw std::runtime_error("poisson_mult_p0: empty neighborhood");
    double ratio = stats.wy / stats.wm; // = m_bar(x)/m0(x)
    double d = ratio - 1.0;
    return stats.wm * d * d;
}

/// Empirical-Bayes precision for the multiplicative model; infinity when
/// the fit statistic does not exceed its perfect-fit mean of 1.
inline double poisson_mult_eb_w0(const PoissonMultStats& stats, double m0_x) {
    double p0 = poisson_mult_p0(stats, m0_x);
    if (p0 <= 1.0) return std::numeric_limits<double>::infinity();
    return stats.wm / (p0 - 1.0);
}

} // namespace locbayes
