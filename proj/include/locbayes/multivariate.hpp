#pragma once

// d-covariate extension of the local linear machinery: radial kernel
// neighborhoods, (d+1)-dimensional weighted moment matrices, the local
// hyperplane fit, the conjugate posterior and the pooled matrix
// shrinkage.  Covariates are usually standardized to unit sample
// variance before any of this runs; see Standardizer.

#include <cmath>
#include <vector>

#include "dataset.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "linear_model.hpp"

namespace locbayes {

/// Per-covariate affine standardization to zero mean and unit variance.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const Dataset& data) {
        int d = data.dim();
        Standardizer s;
        s.mean.assign(d, 0.0);
        s.scale.assign(d, 1.0);
        int n = data.size();
        for (int j = 0; j < d; ++j) {
            double m = 0.0;
            for (int i = 0; i < n; ++i) m += data.xv(i, j);
            m /= n;
            double v = 0.0;
            for (int i = 0; i < n; ++i) {
                double c = data.xv(i, j) - m;
                v += c * c;
            }
            v /= n;
            s.mean[j] = m;
            s.scale[j] = v > 0.0 ? std::sqrt(v) : 1.0;
        }
        return s;
    }

    Dataset apply(const Dataset& data) const {
        Dataset out = data;
        int d = data.dim();
        for (int i = 0; i < data.size(); ++i)
            for (int j = 0; j < d; ++j)
                out.x[static_cast<std::size_t>(i) * d + j] =
                    (data.xv(i, j) - mean[j]) / scale[j];
        return out;
    }

    std::vector<double> to_standardized(const std::vector<double>& x) const {
        std::vector<double> out(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            out[j] = (x[j] - mean[j]) / scale[j];
        return out;
    }
};

/// Weighted moments of the radial neighborhood of x: S holds the weight
/// sum, the centered first moments and the centered second-moment block;
/// T is the squared-weight analogue.
struct MultiLocalDesign {
    MatrixXd s;  // (d+1) x (d+1)
    MatrixXd t;  // squared-weight analogue
    VectorXd sy; // weighted response moments
    double syy = 0.0;

    double s0() const { return s(0, 0); }
    double t0() const { return t(0, 0); }
};

/// Radial weights w_i = Kbar(|x_i - x| / h); moments in x_i - x.
inline MultiLocalDesign multi_local_design(const Dataset& data,
                                           const std::vector<double>& x, double h,
                                           const Kernel& kernel) {
    if (!(h > 0.0)) throw std::invalid_argument("multi_local_design: h must be positive");
    int d = data.dim();
    if (static_cast<int>(x.size()) != d)
        throw std::invalid_argument("multi_local_design: dimension mismatch");
    MultiLocalDesign out;
    out.s = MatrixXd::Zero(d + 1, d + 1);
    out.t = MatrixXd::Zero(d + 1, d + 1);
    out.sy = VectorXd::Zero(d + 1);
    VectorXd u(d + 1);
    for (int i = 0; i < data.size(); ++i) {
        double r2 = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = data.xv(i, j) - x[j];
            r2 += c * c;
        }
        double w = kernel.rescaled(std::sqrt(r2) / h);
        if (w <= 0.0) continue;
        u[0] = 1.0;
        for (int j = 0; j < d; ++j) u[j + 1] = data.xv(i, j) - x[j];
        out.s.noalias() += w * u * u.transpose();
        out.t.noalias() += w * w * u * u.transpose();
        out.sy.noalias() += w * data.y[i] * u;
        out.syy += w * data.y[i] * data.y[i];
    }
    return out;
}

struct MultiFitResult {
    VectorXd coef; // (a, b_1..b_d)
    double q0 = 0.0;
    double s0 = 0.0;

    double level() const { return coef[0]; }
};

/// Weighted least-squares hyperplane fit a + b'(t - x).
inline MultiFitResult multi_ll_fit(const MultiLocalDesign& design) {
    double s0 = design.s0();
    if (!(s0 > 0.0)) throw std::runtime_error("multi_ll_fit: empty neighborhood");
    int dim = static_cast<int>(design.s.rows());
    double norm_det = design.s.determinant() / std::pow(s0, dim);
    if (!(norm_det > 1e-12))
        throw std::runtime_error("multi_ll_fit: degenerate local design");
    VectorXd coef = solve_full(design.s, design.sy, "multi_ll_fit");
    MultiFitResult r;
    r.coef = coef;
    r.s0 = s0;
    r.q0 = std::max(0.0, design.syy - 2.0 * coef.dot(design.sy) +
                             coef.dot(design.s * coef));
    return r;
}

struct MultiLinearPrior {
    VectorXd center; // (m0(x), grad m0(x))
    MatrixXd w0;     // (d+1) x (d+1) precision
};

struct MultiLinearPosterior {
    VectorXd mean;
    MatrixXd precision; // W0 + S
};

inline MultiLinearPosterior multi_linear_posterior(const MultiLinearPrior& prior,
                                                   const MultiLocalDesign& design,
                                                   const VectorXd& fit) {
    MatrixXd total = prior.w0 + design.s;
    VectorXd rhs = prior.w0 * prior.center + design.s * fit;
    return MultiLinearPosterior{solve_full(total, rhs, "multi_linear_posterior"), total};
}

struct MultiCellSummary {
    std::vector<double> x0;
    MatrixXd s;
    VectorXd fit;
    double q0 = 0.0;
    double s0 = 0.0;
    bool valid = false;
};

struct MultiShrinkResult {
    VectorXd estimate;
    MatrixXd weight;
    bool level_fallback = false;
};

/// (d+1)-dimensional analogue of the pooled matrix shrinkage, with the
/// same symmetrize-and-clamp truncation.
inline MultiShrinkResult multi_matrix_shrink(double sigma2,
                                             const std::vector<MultiCellSummary>& cells,
                                             const std::vector<VectorXd>& prior_at_cells,
                                             const VectorXd& prior_at_x,
                                             const VectorXd& fit_at_x) {
    if (cells.size() != prior_at_cells.size())
        throw std::invalid_argument("multi_matrix_shrink: size mismatch");
    int dim = static_cast<int>(prior_at_x.size());
    MatrixXd pbar = MatrixXd::Zero(dim, dim);
    int k = 0;
    double level_denom = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (!cells[j].valid) continue;
        VectorXd d = cells[j].fit - prior_at_cells[j];
        pbar.noalias() += (d * d.transpose()) * cells[j].s;
        double d0 = d[0];
        level_denom += cells[j].s0 * d0 * d0;
        ++k;
    }
    if (k < 1) throw std::runtime_error("multi_matrix_shrink: no valid cells");
    pbar /= k;

    MultiShrinkResult r;
    MatrixXd pbar_sym = symmetrize(pbar);
    Eigen::FullPivLU<MatrixXd> lu(pbar_sym);
    if (!lu.isInvertible()) {
        double w = level_denom > 0.0
                       ? std::min(1.0, std::max(0.0, k * sigma2 / level_denom))
                       : 1.0;
        r.estimate = fit_at_x;
        r.estimate[0] = w * prior_at_x[0] + (1.0 - w) * fit_at_x[0];
        r.weight = MatrixXd::Zero(dim, dim);
        r.weight(0, 0) = w;
        r.level_fallback = true;
        return r;
    }
    r.weight = spectral_clamp(sigma2 * lu.inverse(), 0.0, 1.0);
    r.estimate = r.weight * prior_at_x +
                 (MatrixXd::Identity(dim, dim) - r.weight) * fit_at_x;
    return r;
}

} // namespace locbayes
