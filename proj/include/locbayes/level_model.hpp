#pragma once

// Local-constant normal model.  The local level a at x carries a normal
// prior with mean m0(x) and variance sigma^2/w0; combined with the kernel
// smoothed local likelihood this gives a conjugate normal posterior whose
// mean interpolates between the start value and the locally weighted mean.
// Empirical-Bayes machinery estimates sigma and the prior precision from
// the marginal distribution of the cell data, with local, globally pooled,
// parametric and Stein-type variants.

#include <cmath>
#include <limits>
#include <vector>

#include "dataset.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "local_fit.hpp"
#include "special.hpp"
#include "util.hpp"

namespace locbayes {

/// Local prior for the level at one location: start value m0 and
/// nonnegative precision w0.  w0 = 0 is the flat prior (the posterior
/// mean is then the locally weighted mean); w0 = infinity pins the
/// estimate to m0.
struct LevelPrior {
    double m0 = 0.0;
    double w0 = 0.0;
};

/// Conjugate posterior of the local level given local data and sigma:
/// normal with the stated mean and variance sigma^2/precision.
struct LevelPosterior {
    double mean = 0.0;
    double precision = 0.0; // w0 + s0
    double rho = 0.0;       // prior weight w0/(w0+s0)
};

inline LevelPosterior level_posterior(const LevelPrior& prior, const LocalDesign& design) {
    double s0 = design.s0();
    if (!(prior.w0 >= 0.0))
        throw std::invalid_argument("level_posterior: w0 must be nonnegative");
    if (std::isinf(prior.w0))
        return LevelPosterior{prior.m0, std::numeric_limits<double>::infinity(), 1.0};
    if (!(prior.w0 + s0 > 0.0))
        throw std::runtime_error("level_posterior: no information (w0 = 0 and empty neighborhood)");
    double mean = s0 > 0.0
                      ? (prior.w0 * prior.m0 + s0 * nw_fit(design)) / (prior.w0 + s0)
                      : prior.m0;
    return LevelPosterior{mean, prior.w0 + s0, prior.w0 / (prior.w0 + s0)};
}

/// Per-cell summary used by all pooled estimators: midpoint, window
/// width, weight sums, the local mean and its residual sum.
struct LevelCellSummary {
    double x0 = 0.0;
    double h = 0.0;
    double s0 = 0.0;
    double t0 = 0.0;
    double q0 = 0.0;
    double m_tilde = 0.0;
    bool valid = false; // false when the neighborhood is empty
};

inline std::vector<LevelCellSummary> level_cell_summaries(const Dataset& data,
                                                          const CellPartition& cells,
                                                          const Kernel& kernel) {
    std::vector<LevelCellSummary> out(cells.count());
    for (int j = 0; j < cells.count(); ++j) {
        LevelCellSummary& c = out[j];
        c.x0 = cells.midpoints[j];
        c.h = cells.widths[j];
        LocalDesign d = local_design(data, c.x0, c.h, kernel, 0);
        c.s0 = d.s0();
        c.t0 = d.t0();
        if (c.s0 > 0.0) {
            LocalFitResult fit = local_poly_fit(d, 0);
            c.m_tilde = fit.level();
            c.q0 = fit.q0;
            c.valid = true;
        }
    }
    return out;
}

/// Pooled scale estimate and (optional) Gamma prior bookkeeping for
/// lambda = 1/sigma^2.  alpha = beta = 0 is the noninformative choice.
struct SigmaInference {
    double sigma2 = 0.0;
    double dof = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

/// Maximum-marginal-likelihood scale estimate pooled over cells:
/// sigma2 = sum Q0 / sum (s0 - (order+1)).  Cells with s0 below the
/// parameter count are dropped.
inline SigmaInference pooled_sigma(const std::vector<double>& q0s,
                                   const std::vector<double>& s0s, int order) {
    if (q0s.size() != s0s.size())
        throw std::invalid_argument("pooled_sigma: size mismatch");
    double params = order + 1.0;
    double num = 0.0, dof = 0.0;
    for (std::size_t j = 0; j < q0s.size(); ++j) {
        if (s0s[j] < params) continue;
        num += q0s[j];
        dof += s0s[j] - params;
    }
    if (!(dof > 0.0))
        throw std::runtime_error("pooled_sigma: nonpositive pooled degrees of freedom");
    return SigmaInference{num / dof, dof, 0.0, 0.0};
}

inline SigmaInference pooled_sigma(const std::vector<LevelCellSummary>& cells) {
    std::vector<double> q0s, s0s;
    for (const auto& c : cells)
        if (c.valid) {
            q0s.push_back(c.q0);
            s0s.push_back(c.s0);
        }
    return pooled_sigma(q0s, s0s, 0);
}

/// Local goodness-of-fit statistic P0 = s0 (m_tilde - m0)^2.
inline double level_p0(double s0, double m_tilde, double m0) {
    double d = m_tilde - m0;
    return s0 * d * d;
}

/// Empirical-Bayes prior weight rho = min(1, sigma2 / P0); rho = 1 when
/// the data agree with the start value so well that P0 <= sigma2.
inline double local_rho(const SigmaInference& sigma, const LocalDesign& design, double m0) {
    if (!(design.s0() > 0.0))
        throw std::runtime_error("local_rho: empty neighborhood");
    double p0 = level_p0(design.s0(), nw_fit(design), m0);
    if (p0 <= 0.0) return 1.0;
    return std::min(1.0, sigma.sigma2 / p0);
}

inline double local_rho(double sigma2, double s0, double m_tilde, double m0) {
    double p0 = level_p0(s0, m_tilde, m0);
    if (p0 <= 0.0) return 1.0;
    return std::min(1.0, sigma2 / p0);
}

struct LevelEbResult {
    double estimate = 0.0;
    double rho = 0.0;
};

/// Bayes-empirical-Bayes level estimate: rho m0 + (1-rho) m_tilde with
/// rho from local_rho.  Returns m0 exactly when P0 <= sigma2.
inline LevelEbResult eb_level_estimate(double sigma2, double s0, double m_tilde, double m0) {
    if (!(s0 > 0.0))
        throw std::runtime_error("eb_level_estimate: empty neighborhood");
    double rho = local_rho(sigma2, s0, m_tilde, m0);
    if (rho >= 1.0) return LevelEbResult{m0, 1.0};
    return LevelEbResult{rho * m0 + (1.0 - rho) * m_tilde, rho};
}

/// Pooled prior weight: k sigma2 / sum_cells s0 (m_tilde - m0)^2,
/// truncated into [0,1].  m0s holds the start values at the midpoints.
inline double global_shrink_weight(double sigma2, const std::vector<LevelCellSummary>& cells,
                                   const std::vector<double>& m0s) {
    if (cells.size() != m0s.size())
        throw std::invalid_argument("global_shrink_weight: size mismatch");
    double denom = 0.0;
    int k = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!cells[j].valid) continue;
        denom += level_p0(cells[j].s0, cells[j].m_tilde, m0s[j]);
        ++k;
    }
    if (k < 1) throw std::runtime_error("global_shrink_weight: no valid cells");
    if (denom <= 0.0) return 1.0;
    return std::min(1.0, std::max(0.0, k * sigma2 / denom));
}

inline LevelEbResult global_shrink_estimate(double sigma2,
                                            const std::vector<LevelCellSummary>& cells,
                                            const std::vector<double>& m0s, double m0_x,
                                            double m_tilde_x) {
    double w = global_shrink_weight(sigma2, cells, m0s);
    return LevelEbResult{w * m0_x + (1.0 - w) * m_tilde_x, w};
}

/// Shrinkage with a parametric prior-variance shape: the prior variance
/// at x is modelled as sigma^2 r(x)/w0.  The pooled statistic
/// Pbar0/sigma2 = 1 + c/w0 with c = mean of s0 r over cells identifies
/// w0; the resulting weights are truncated into [0,1].
inline LevelEbResult parametric_shrink_estimate(double sigma2,
                                                const std::vector<LevelCellSummary>& cells,
                                                const std::vector<double>& m0s,
                                                const std::vector<double>& r_mids,
                                                double s0_x, double r_x, double m0_x,
                                                double m_tilde_x) {
    if (cells.size() != m0s.size() || cells.size() != r_mids.size())
        throw std::invalid_argument("parametric_shrink_estimate: size mismatch");
    if (!(r_x > 0.0))
        throw std::invalid_argument("parametric_shrink_estimate: r(x) must be positive");
    double pbar = 0.0, c = 0.0;
    int k = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!cells[j].valid) continue;
        if (!(r_mids[j] > 0.0))
            throw std::invalid_argument("parametric_shrink_estimate: r must be positive");
        pbar += level_p0(cells[j].s0, cells[j].m_tilde, m0s[j]);
        c += cells[j].s0 * r_mids[j];
        ++k;
    }
    if (k < 1) throw std::runtime_error("parametric_shrink_estimate: no valid cells");
    pbar /= k;
    c /= k;
    double excess = pbar / sigma2 - 1.0; // equals c/w0 in expectation
    if (excess <= 0.0 || c <= 0.0)
        return LevelEbResult{m0_x, 1.0}; // prior fits everywhere
    double g = s0_x * r_x * excess / c;  // s0 r / w0_hat
    double weight_m0 = 1.0 / (1.0 + g);
    return LevelEbResult{weight_m0 * m0_x + (1.0 - weight_m0) * m_tilde_x, weight_m0};
}

/// Stein-type estimate: shrink the locally weighted mean toward the start
/// curve with coefficient (k-2) sigma2 over the pooled fit statistic.
/// Dominates the plain local mean in total squared-error risk once k >= 3.
inline double stein_estimate(double sigma2, const std::vector<LevelCellSummary>& cells,
                             const std::vector<double>& m0s, double m0_x, double m_tilde_x) {
    if (cells.size() != m0s.size())
        throw std::invalid_argument("stein_estimate: size mismatch");
    double z = 0.0;
    int k = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!cells[j].valid) continue;
        z += level_p0(cells[j].s0, cells[j].m_tilde, m0s[j]);
        ++k;
    }
    if (k < 1) throw std::runtime_error("stein_estimate: no valid cells");
    if (z <= 0.0) return m0_x;
    return m_tilde_x - (k - 2.0) * sigma2 * (m_tilde_x - m0_x) / z;
}

/// Posterior for lambda = 1/sigma^2 under a Gamma(alpha/2, beta/2) prior,
/// pooled over cells, plus the resulting point estimate of sigma^2 and
/// the degrees of freedom nu for the t credible bands.
struct SigmaPosterior {
    double shape = 0.0;  // alpha/2 + sum s0 / 2
    double rate = 0.0;   // beta/2 + sum (Q0 + rho P0) / 2
    double sigma2 = 0.0; // rate/shape * ... = (beta + sum(Q0 + rho P0)) / (alpha + sum s0)
    double nu = 0.0;     // alpha + sum s0
};

inline SigmaPosterior sigma_bayes_gamma(double alpha, double beta,
                                        const std::vector<LevelCellSummary>& cells,
                                        const std::vector<double>& m0s,
                                        const std::vector<double>& rhos) {
    if (alpha < 0.0 || beta < 0.0)
        throw std::invalid_argument("sigma_bayes_gamma: alpha, beta must be >= 0");
    if (cells.size() != m0s.size() || cells.size() != rhos.size())
        throw std::invalid_argument("sigma_bayes_gamma: size mismatch");
    double sum_s0 = 0.0, sum_q = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!cells[j].valid) continue;
        sum_s0 += cells[j].s0;
        sum_q += cells[j].q0 + rhos[j] * level_p0(cells[j].s0, cells[j].m_tilde, m0s[j]);
    }
    SigmaPosterior p;
    p.shape = 0.5 * (alpha + sum_s0);
    p.rate = 0.5 * (beta + sum_q);
    p.nu = alpha + sum_s0;
    if (!(alpha + sum_s0 > 0.0))
        throw std::runtime_error("sigma_bayes_gamma: no information about sigma");
    p.sigma2 = (beta + sum_q) / (alpha + sum_s0);
    return p;
}

/// Pointwise credible interval from the t distribution of the level
/// after integrating out sigma: mean +- sigma_hat t_{nu,(1+level)/2}
/// / sqrt(precision).
inline std::pair<double, double> level_credible_interval(const LevelPosterior& post,
                                                         double sigma_hat2, double nu,
                                                         double level) {
    if (!(nu > 0.0))
        throw std::invalid_argument("level_credible_interval: nu must be positive");
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("level_credible_interval: level must be in (0,1)");
    if (std::isinf(post.precision)) return {post.mean, post.mean};
    double t = student_t_quantile(0.5 * (1.0 + level), nu);
    double half = std::sqrt(sigma_hat2 / post.precision) * t;
    return {post.mean - half, post.mean + half};
}

/// Joint posterior means at the cell midpoints when the k local levels
/// carry a correlated normal prior with precision matrix sigma^2-scaled
/// T0 (uniform weights assumed): solve (T0 + D) m = T0 m0 + D m_tilde
/// with D = diag(s0).
inline VectorXd correlated_prior_posterior(const MatrixXd& t0, const VectorXd& m0,
                                           const VectorXd& s0, const VectorXd& m_tilde) {
    int k = static_cast<int>(m0.size());
    if (t0.rows() != k || t0.cols() != k || s0.size() != k || m_tilde.size() != k)
        throw std::invalid_argument("correlated_prior_posterior: size mismatch");
    MatrixXd a = symmetrize(t0);
    for (int j = 0; j < k; ++j) a(j, j) += s0[j];
    VectorXd rhs = symmetrize(t0) * m0;
    for (int j = 0; j < k; ++j) rhs[j] += s0[j] * m_tilde[j];
    return solve_full(a, rhs, "correlated_prior_posterior");
}

/// Optional post-smoothing of the empirical-Bayes prior weights over
/// midpoints (off by default in the fitting pipeline).
inline std::vector<double> smooth_rhos(const std::vector<double>& rhos, int window = 3) {
    return moving_average(rhos, window);
}

} // namespace locbayes
