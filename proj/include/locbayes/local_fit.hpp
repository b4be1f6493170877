#pragma once

// Weighted local moment sums and the frequentist local estimators: the
// locally weighted mean (local constant fit), the local linear fit, and
// general local polynomials up to order 3.  All moments are taken in
// powers of (x_i - x), which keeps the small normal-equation systems
// well conditioned.

#include <array>
#include <cmath>
#include <stdexcept>

#include "dataset.hpp"
#include "kernel.hpp"
#include "linalg.hpp"

namespace locbayes {

constexpr int kMaxLocalOrder = 3;

/// Weighted moments of one neighborhood N(x) = [x - h/2, x + h/2]:
///   s_j  = sum w_i (x_i - x)^j          j = 0..2p
///   t_j  = sum w_i^2 (x_i - x)^j        j = 0..2p
///   sy_j = sum w_i (x_i - x)^j y_i      j = 0..p
/// plus syy = sum w_i y_i^2 so residual sums follow from the moments.
struct LocalDesign {
    int order = 0;
    std::array<double, 2 * kMaxLocalOrder + 1> s{};
    std::array<double, 2 * kMaxLocalOrder + 1> t{};
    std::array<double, kMaxLocalOrder + 1> sy{};
    double syy = 0.0;

    double s0() const { return s[0]; }
    double t0() const { return t[0]; }

    /// Moment matrix S with entries s_{j+l}, j,l = 0..order.
    MatrixXd moment_matrix() const {
        MatrixXd m(order + 1, order + 1);
        for (int j = 0; j <= order; ++j)
            for (int l = 0; l <= order; ++l)
                m(j, l) = s[j + l];
        return m;
    }

    /// Squared-weight matrix T with entries t_{j+l}.
    MatrixXd squared_weight_matrix() const {
        MatrixXd m(order + 1, order + 1);
        for (int j = 0; j <= order; ++j)
            for (int l = 0; l <= order; ++l)
                m(j, l) = t[j + l];
        return m;
    }

    VectorXd response_vector() const {
        VectorXd v(order + 1);
        for (int j = 0; j <= order; ++j) v[j] = sy[j];
        return v;
    }
};

inline LocalDesign local_design(const Dataset& data, double x, double h,
                                const Kernel& kernel, int order) {
    if (!(h > 0.0)) throw std::invalid_argument("local_design: h must be positive");
    if (order < 0 || order > kMaxLocalOrder)
        throw std::invalid_argument("local_design: order must be in 0..3");
    if (data.dim() != 1)
        throw std::invalid_argument("local_design: univariate data required");
    LocalDesign d;
    d.order = order;
    for (int i = 0; i < data.size(); ++i) {
        double w = kernel.influence(h, data.xv(i), x);
        if (w <= 0.0) continue;
        double dx = data.xv(i) - x;
        double pw = 1.0;
        for (int j = 0; j <= 2 * order; ++j) {
            d.s[j] += w * pw;
            d.t[j] += w * w * pw;
            if (j <= order) d.sy[j] += w * pw * data.y[i];
            pw *= dx;
        }
        d.syy += w * data.y[i] * data.y[i];
    }
    return d;
}

/// Coefficients of a local polynomial fit; coef[0] estimates m(x),
/// coef[1] estimates m'(x).  q0 is the weighted residual sum at the fit.
struct LocalFitResult {
    VectorXd coef;
    double q0 = 0.0;
    double s0 = 0.0;

    double level() const { return coef[0]; }
    double slope() const { return coef.size() > 1 ? coef[1] : 0.0; }
};

/// Locally weighted mean: sum w_i y_i / sum w_i.
inline double nw_fit(const LocalDesign& design) {
    if (!(design.s0() > 0.0))
        throw std::runtime_error("nw_fit: empty neighborhood");
    return design.sy[0] / design.s0();
}

namespace detail {
inline double residual_sum(const LocalDesign& d, const VectorXd& beta) {
    // Q0 = syy - 2 b'sy + b'Sb, clamped at zero against cancellation
    MatrixXd s = d.moment_matrix();
    VectorXd sy = d.response_vector();
    double q0 = d.syy - 2.0 * beta.dot(sy) + beta.dot(s * beta);
    return q0 > 0.0 ? q0 : 0.0;
}
} // namespace detail

/// Local polynomial fit of the given order by weighted least squares.
inline LocalFitResult local_poly_fit(const LocalDesign& design, int order) {
    if (order != design.order)
        throw std::invalid_argument("local_poly_fit: order mismatch with design");
    if (order == 0) {
        LocalFitResult r;
        r.coef = VectorXd::Constant(1, nw_fit(design));
        r.s0 = design.s0();
        r.q0 = detail::residual_sum(design, r.coef);
        return r;
    }
    MatrixXd s = design.moment_matrix();
    double s0 = design.s0();
    if (!(s0 > 0.0)) throw std::runtime_error("local_poly_fit: empty neighborhood");
    if (order == 1) {
        // explicit 2x2 solve with the normalized-determinant guard
        double det = s(0, 0) * s(1, 1) - s(0, 1) * s(0, 1);
        if (!(det / (s0 * s0) > 1e-12))
            throw std::runtime_error("local_poly_fit: degenerate local design");
        LocalFitResult r;
        r.coef = VectorXd(2);
        r.coef[0] = (s(1, 1) * design.sy[0] - s(0, 1) * design.sy[1]) / det;
        r.coef[1] = (s(0, 0) * design.sy[1] - s(0, 1) * design.sy[0]) / det;
        r.s0 = s0;
        r.q0 = detail::residual_sum(design, r.coef);
        return r;
    }
    Eigen::LDLT<MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("local_poly_fit: degenerate local design");
    VectorXd beta = ldlt.solve(design.response_vector());
    double resid = (s * beta - design.response_vector()).norm();
    double scale = design.response_vector().norm() + s.norm() * beta.norm();
    if (scale > 0.0 && !(resid <= 1e-8 * scale))
        throw std::runtime_error("local_poly_fit: degenerate local design");
    LocalFitResult r;
    r.coef = beta;
    r.s0 = s0;
    r.q0 = detail::residual_sum(design, beta);
    return r;
}

/// Local linear fit (order 1).
inline LocalFitResult ll_fit(const LocalDesign& design) {
    return local_poly_fit(design, 1);
}

/// Classical kernel density estimate f_n(x) = n^{-1} sum h^{-1} K((x_i-x)/h).
/// The weight sum satisfies s0(x) = n h f_n(x) / K(0) exactly.
inline double density_estimate(const Dataset& data, double x, double h,
                               const Kernel& kernel) {
    if (!(h > 0.0))
        throw std::invalid_argument("density_estimate: h must be positive");
    double sum = 0.0;
    for (int i = 0; i < data.size(); ++i)
        sum += kernel.density((data.xv(i) - x) / h);
    return sum / (data.size() * h);
}

} // namespace locbayes
