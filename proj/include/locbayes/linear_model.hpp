#pragma once

// Local-linear normal model.  The local (level, slope) pair carries a
// bivariate normal prior centred at the start curve's value and
// derivative with precision matrix sigma^-2-scaled W0; the conjugate
// posterior mean is the matrix-weighted combination of prior centre and
// the local linear fit.  Prior precision is inferred empirically either
// through pooled matrix shrinkage or through a structured one-parameter
// family W0 = w0 A_x fitted by profile marginal likelihood or by
// regression on the per-cell trace statistics.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dataset.hpp"
#include "kernel.hpp"
#include "level_model.hpp"
#include "linalg.hpp"
#include "local_fit.hpp"
#include "start_curve.hpp"

namespace locbayes {

using Eigen::Matrix2d;
using Eigen::Vector2d;

struct LinearPrior {
    double a0 = 0.0; // start value m0(x)
    double b0 = 0.0; // start slope m0'(x)
    Matrix2d w0 = Matrix2d::Zero();
};

struct LinearPosterior {
    Vector2d mean = Vector2d::Zero();
    Matrix2d precision = Matrix2d::Zero(); // W0 + S(x)
};

/// Conjugate posterior mean {W0+S}^{-1} {W0 (a0,b0) + S (a_tilde,b_tilde)}.
inline LinearPosterior linear_posterior(const LinearPrior& prior, const Matrix2d& s,
                                        const Vector2d& fit) {
    Matrix2d total = prior.w0 + s;
    Vector2d rhs = prior.w0 * Vector2d(prior.a0, prior.b0) + s * fit;
    Eigen::FullPivLU<Matrix2d> lu(total);
    if (!lu.isInvertible())
        throw std::runtime_error("linear_posterior: singular W0 + S");
    return LinearPosterior{lu.solve(rhs), total};
}

/// Goodness-of-fit matrix d d' S with d = (m_tilde - m0, b_tilde - m0');
/// unbiased for sigma^2 {S^{-1} T + W0^{-1} S}.
inline Matrix2d p0_matrix(const Vector2d& d, const Matrix2d& s) {
    return (d * d.transpose()) * s;
}

/// The trace statistic d'S d; with uniform weights its expectation under
/// the prior is sigma^2 (2 + tr(W0^{-1} S)).
inline double p0_trace_stat(const Vector2d& d, const Matrix2d& s) {
    return d.dot(s * d);
}

/// Per-cell summary for the linear model.
struct LinearCellSummary {
    double x0 = 0.0;
    double h = 0.0;
    double s0 = 0.0;
    Matrix2d s = Matrix2d::Zero();
    Matrix2d t = Matrix2d::Zero();
    Vector2d fit = Vector2d::Zero(); // (m_tilde, b_tilde)
    double q0 = 0.0;
    bool valid = false; // false when the local design is degenerate
};

inline std::vector<LinearCellSummary> linear_cell_summaries(const Dataset& data,
                                                            const CellPartition& cells,
                                                            const Kernel& kernel) {
    std::vector<LinearCellSummary> out(cells.count());
    for (int j = 0; j < cells.count(); ++j) {
        LinearCellSummary& c = out[j];
        c.x0 = cells.midpoints[j];
        c.h = cells.widths[j];
        LocalDesign d = local_design(data, c.x0, c.h, kernel, 1);
        c.s0 = d.s0();
        c.s = d.moment_matrix();
        c.t = d.squared_weight_matrix();
        try {
            LocalFitResult fit = ll_fit(d);
            c.fit = Vector2d(fit.coef[0], fit.coef[1]);
            c.q0 = fit.q0;
            c.valid = true;
        } catch (const std::runtime_error&) {
            c.valid = false;
        }
    }
    return out;
}

inline SigmaInference pooled_sigma_linear(const std::vector<LinearCellSummary>& cells) {
    std::vector<double> q0s, s0s;
    for (const auto& c : cells)
        if (c.valid) {
            q0s.push_back(c.q0);
            s0s.push_back(c.s0);
        }
    return pooled_sigma(q0s, s0s, 1);
}

/// Sentinel precision standing in for w0 = infinity: large enough that
/// the posterior is numerically pinned at the prior.
inline double w0_sentinel(double mean_s0) {
    return 1e12 * std::max(mean_s0, 1.0);
}

struct MatrixShrinkResult {
    Vector2d estimate = Vector2d::Zero();
    Matrix2d weight = Matrix2d::Zero(); // clamped prior-weight matrix
    bool level_fallback = false;        // pooled matrix was singular
};

/// Pooled matrix shrinkage: weight matrix sigma2 Pbar0^{-1} (symmetrized,
/// eigenvalues clamped into [0,1]) applied to the prior pair, the
/// complement to the local fit.  Falls back to scalar shrinkage of the
/// level component when the pooled matrix is singular.
inline MatrixShrinkResult matrix_shrink_estimate(double sigma2,
                                                 const std::vector<LinearCellSummary>& cells,
                                                 const std::vector<double>& m0s,
                                                 const std::vector<double>& b0s,
                                                 const Vector2d& prior_at_x,
                                                 const Vector2d& fit_at_x) {
    if (cells.size() != m0s.size() || cells.size() != b0s.size())
        throw std::invalid_argument("matrix_shrink_estimate: size mismatch");
    Matrix2d pbar = Matrix2d::Zero();
    int k = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!cells[j].valid) continue;
        Vector2d d = cells[j].fit - Vector2d(m0s[j], b0s[j]);
        pbar += p0_matrix(d, cells[j].s);
        ++k;
    }
    if (k < 1) throw std::runtime_error("matrix_shrink_estimate: no valid cells");
    pbar /= k;

    MatrixShrinkResult r;
    Matrix2d pbar_sym = symmetrize(pbar);
    Eigen::FullPivLU<Matrix2d> lu(pbar_sym);
    if (!lu.isInvertible()) {
        // scalar shrinkage of the level component only
        double denom = 0.0;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!cells[j].valid) continue;
            double d0 = cells[j].fit[0] - m0s[j];
            denom += cells[j].s0 * d0 * d0;
        }
        double w = denom > 0.0 ? std::min(1.0, std::max(0.0, k * sigma2 / denom)) : 1.0;
        r.estimate = Vector2d(w * prior_at_x[0] + (1.0 - w) * fit_at_x[0], fit_at_x[1]);
        r.weight = Matrix2d::Zero();
        r.weight(0, 0) = w;
        r.level_fallback = true;
        return r;
    }
    Matrix2d raw = sigma2 * lu.inverse();
    r.weight = spectral_clamp(raw, 0.0, 1.0);
    r.estimate = r.weight * prior_at_x + (Matrix2d::Identity() - r.weight) * fit_at_x;
    return r;
}

/// Precision shape for a straight-line start curve fitted on a previous
/// sample: W0x = w0 A_x with
///   A_x = [ 1, -(x-xbar); -(x-xbar), v2 + (x-xbar)^2 ],
/// whose inverse is the familiar regression-line covariance shape.
inline Matrix2d precision_structure_linear(double xbar, double v2, double x) {
    if (!(v2 > 0.0))
        throw std::invalid_argument("precision_structure_linear: v2 must be positive");
    double c = x - xbar;
    Matrix2d a;
    a << 1.0, -c, -c, v2 + c * c;
    return a;
}

/// Covariance shape (the matrix multiplying 1/w0) for a general linearly
/// structured start curve: entries z'Kz, z'Kz*, z*'Kz* with K the inverse
/// basis Gram matrix, z = z(x) and z* = z'(x).
inline Matrix2d basis_covariance_shape(const VectorXd& z, const VectorXd& zstar,
                                       const MatrixXd& gram_inv) {
    Matrix2d b;
    b(0, 0) = z.dot(gram_inv * z);
    b(0, 1) = b(1, 0) = z.dot(gram_inv * zstar);
    b(1, 1) = zstar.dot(gram_inv * zstar);
    return b;
}

/// Inverse of n^{-1} sum z(x_i) z(x_i)'.
inline MatrixXd basis_gram_inverse(const Dataset& data, const LinearBasis& basis) {
    int p = basis.size();
    MatrixXd gram = MatrixXd::Zero(p, p);
    for (int i = 0; i < data.size(); ++i) {
        VectorXd zi = basis.z(data.xv(i));
        gram.noalias() += zi * zi.transpose();
    }
    gram /= data.size();
    Eigen::FullPivLU<MatrixXd> lu(gram);
    if (!lu.isInvertible())
        throw std::runtime_error("basis_gram_inverse: singular Gram matrix");
    return lu.inverse();
}

inline Matrix2d precision_structure_basis(const LinearBasis& basis, const Dataset& data,
                                          double x) {
    MatrixXd ginv = basis_gram_inverse(data, basis);
    return basis_covariance_shape(basis.z(x), basis.dz(x), ginv);
}

/// One cell's ingredients for fitting the scalar prior precision w0 under
/// the structured family W0x = w0 A_x.
struct W0FitCell {
    Vector2d d = Vector2d::Zero(); // (m_tilde - m0, b_tilde - m0')
    Matrix2d s = Matrix2d::Zero();
    Matrix2d a = Matrix2d::Zero();
    double s0 = 0.0;
};

namespace detail {

// Combined marginal log likelihood of the cells as a function of w0
// (additive constants dropped):
//   sum log det(w0 A)/det(w0 A + S) - sigma^-2 sum d' [S (S + w0 A)^{-1} w0 A] d
inline double w0_profile_objective(double w0, const std::vector<W0FitCell>& cells,
                                   double sigma2) {
    double obj = 0.0;
    for (const auto& c : cells) {
        Matrix2d wa = w0 * c.a;
        Matrix2d sum = wa + c.s;
        double det_wa = wa.determinant();
        double det_sum = sum.determinant();
        if (!(det_sum > 0.0)) return -std::numeric_limits<double>::infinity();
        if (det_wa > 0.0)
            obj += std::log(det_wa / det_sum);
        else
            return -std::numeric_limits<double>::infinity();
        // (w0^-1 A^-1 + S^-1)^-1 = S (S + wa)^{-1} wa, stable at both limits
        Matrix2d inner = c.s * sum.inverse() * wa;
        obj -= c.d.dot(inner * c.d) / sigma2;
    }
    return obj;
}

} // namespace detail

/// Profile-likelihood fit of the scalar prior precision, maximising the
/// combined marginal likelihood over log10 w0 in [-6, 12] by grid
/// bracketing plus golden-section refinement (tolerance 1e-6 in log
/// space).  Returns the sentinel precision when the objective keeps
/// increasing at the upper end (the prior fits essentially perfectly).
inline double fit_w0_profile(double sigma2, const std::vector<W0FitCell>& cells) {
    if (cells.empty()) throw std::invalid_argument("fit_w0_profile: no cells");
    double mean_s0 = 0.0;
    for (const auto& c : cells) mean_s0 += c.s0;
    mean_s0 /= cells.size();

    const double lo = -6.0, hi = 12.0;
    auto value = [&](double u) {
        return detail::w0_profile_objective(std::pow(10.0, u), cells, sigma2);
    };
    const int coarse = 73;
    double best_u = lo, best_v = -std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (int i = 0; i < coarse; ++i) {
        double u = lo + (hi - lo) * i / (coarse - 1);
        double v = value(u);
        if (v > best_v) {
            best_v = v;
            best_u = u;
            best_i = i;
        }
    }
    if (best_i == coarse - 1) return w0_sentinel(mean_s0);
    double a = lo + (hi - lo) * std::max(0, best_i - 1) / (coarse - 1);
    double b = lo + (hi - lo) * std::min(coarse - 1, best_i + 1) / (coarse - 1);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = value(x1), f2 = value(x2);
    while (b - a > 1e-6) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = value(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = value(x1);
        }
    }
    (void)best_u;
    return std::pow(10.0, 0.5 * (a + b));
}

/// Regression estimate of w0 under the structured family: the per-cell
/// statistic d'S d / sigma2 - 2 has slope 1/w0 against tr(A^{-1} S)
/// (uniform weights assumed), so a least-squares line through the origin
/// identifies w0.  A nonpositive slope means the prior fits perfectly and
/// yields the sentinel precision.
inline double regression_w0_estimate(double sigma2, const std::vector<W0FitCell>& cells) {
    if (cells.size() < 2)
        throw std::invalid_argument("regression_w0_estimate: need >= 2 cells");
    double sxx = 0.0, sxy = 0.0, mean_s0 = 0.0;
    for (const auto& c : cells) {
        Eigen::FullPivLU<Matrix2d> lu(c.a);
        if (!lu.isInvertible())
            throw std::runtime_error("regression_w0_estimate: singular A_x");
        double reg = (lu.inverse() * c.s).trace();
        double lhs = p0_trace_stat(c.d, c.s) / sigma2 - 2.0;
        sxx += reg * reg;
        sxy += reg * lhs;
        mean_s0 += c.s0;
    }
    mean_s0 /= cells.size();
    if (!(sxx > 0.0))
        throw std::runtime_error("regression_w0_estimate: all regressors zero");
    double slope = sxy / sxx; // estimates 1/w0
    if (slope <= 0.0) return w0_sentinel(mean_s0);
    return 1.0 / slope;
}

/// Least-squares fit of the diagonal precision family
/// W0x = diag(w_a r_a(x), w_b r_b(x)): regress d'S d / sigma2 - 2 on the
/// two regressors s0/r_a and s2/r_b without intercept; nonpositive
/// coefficients map to the sentinel precision.
inline std::pair<double, double> fit_diagonal_precision(
    double sigma2, const std::vector<W0FitCell>& cells, const std::vector<double>& r_a,
    const std::vector<double>& r_b) {
    if (cells.size() != r_a.size() || cells.size() != r_b.size())
        throw std::invalid_argument("fit_diagonal_precision: size mismatch");
    if (cells.size() < 2)
        throw std::invalid_argument("fit_diagonal_precision: need >= 2 cells");
    Eigen::Matrix2d xtx = Eigen::Matrix2d::Zero();
    Eigen::Vector2d xty = Eigen::Vector2d::Zero();
    double mean_s0 = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!(r_a[j] > 0.0 && r_b[j] > 0.0))
            throw std::invalid_argument("fit_diagonal_precision: shape functions must be positive");
        double u = cells[j].s(0, 0) / r_a[j];
        double v = cells[j].s(1, 1) / r_b[j];
        double lhs = p0_trace_stat(cells[j].d, cells[j].s) / sigma2 - 2.0;
        xtx(0, 0) += u * u;
        xtx(0, 1) += u * v;
        xtx(1, 1) += v * v;
        xty[0] += u * lhs;
        xty[1] += v * lhs;
        mean_s0 += cells[j].s0;
    }
    xtx(1, 0) = xtx(0, 1);
    mean_s0 /= cells.size();
    Eigen::FullPivLU<Matrix2d> lu(xtx);
    if (!lu.isInvertible())
        throw std::runtime_error("fit_diagonal_precision: collinear regressors");
    Vector2d coef = lu.solve(xty); // (1/w_a, 1/w_b)
    double sentinel = w0_sentinel(mean_s0);
    double wa = coef[0] > 0.0 ? 1.0 / coef[0] : sentinel;
    double wb = coef[1] > 0.0 ? 1.0 / coef[1] : sentinel;
    return {wa, wb};
}

} // namespace locbayes
