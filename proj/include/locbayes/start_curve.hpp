#pragma once

// Parametric start curves m0(x, xi) = xi' z(x) in basis functions with
// g_1 identically 1, their least-squares fit, the model-robust sandwich
// covariance of the fitted coefficients, posterior sampling of likely
// start curves, and an automatic delete-knot spline basis.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace locbayes {

/// Basis {1, g_2, ..., g_p} with derivatives.  z(x) evaluates the basis,
/// dz(x) its derivative; the first function is always the constant 1.
class LinearBasis {
public:
    /// Centered polynomial basis {1, (x-c), ..., (x-c)^degree}.
    static LinearBasis polynomial(int degree, double center) {
        if (degree < 0) throw std::invalid_argument("LinearBasis: degree must be >= 0");
        LinearBasis b;
        b.kind_ = Kind::Powers;
        b.center_ = center;
        for (int j = 0; j <= degree; ++j) b.powers_.push_back(j);
        return b;
    }

    static LinearBasis constant() { return polynomial(0, 0.0); }

    /// Centered monomials with explicit exponents; exponent 0 is added in
    /// front if missing so the constant function stays first.
    static LinearBasis powers(std::vector<int> exps, double center) {
        LinearBasis b;
        b.kind_ = Kind::Powers;
        b.center_ = center;
        b.powers_.push_back(0);
        for (int e : exps) {
            if (e < 0) throw std::invalid_argument("LinearBasis: negative power");
            if (e != 0) b.powers_.push_back(e);
        }
        return b;
    }

    /// Truncated-cubic spline basis {1, t, t^2, t^3, ((t-k_j)+)^3} on the
    /// standardized coordinate t = (x-lo)/(hi-lo); knots are in t units.
    static LinearBasis truncated_cubic(std::vector<double> knots, double lo, double hi) {
        if (!(hi > lo)) throw std::invalid_argument("LinearBasis: empty spline range");
        LinearBasis b;
        b.kind_ = Kind::Spline;
        b.lo_ = lo;
        b.hi_ = hi;
        b.knots_ = std::move(knots);
        return b;
    }

    int size() const {
        return kind_ == Kind::Powers ? static_cast<int>(powers_.size())
                                     : 4 + static_cast<int>(knots_.size());
    }

    VectorXd z(double x) const {
        VectorXd v(size());
        if (kind_ == Kind::Powers) {
            for (std::size_t j = 0; j < powers_.size(); ++j)
                v[static_cast<int>(j)] = std::pow(x - center_, powers_[j]);
        } else {
            double t = (x - lo_) / (hi_ - lo_);
            v[0] = 1.0;
            v[1] = t;
            v[2] = t * t;
            v[3] = t * t * t;
            for (std::size_t j = 0; j < knots_.size(); ++j) {
                double u = t - knots_[j];
                v[4 + static_cast<int>(j)] = u > 0.0 ? u * u * u : 0.0;
            }
        }
        return v;
    }

    VectorXd dz(double x) const {
        VectorXd v(size());
        if (kind_ == Kind::Powers) {
            for (std::size_t j = 0; j < powers_.size(); ++j) {
                int p = powers_[j];
                v[static_cast<int>(j)] =
                    p == 0 ? 0.0 : p * std::pow(x - center_, p - 1);
            }
        } else {
            double span = hi_ - lo_;
            double t = (x - lo_) / span;
            v[0] = 0.0;
            v[1] = 1.0 / span;
            v[2] = 2.0 * t / span;
            v[3] = 3.0 * t * t / span;
            for (std::size_t j = 0; j < knots_.size(); ++j) {
                double u = t - knots_[j];
                v[4 + static_cast<int>(j)] = u > 0.0 ? 3.0 * u * u / span : 0.0;
            }
        }
        return v;
    }

    double value(const VectorXd& xi, double x) const { return xi.dot(z(x)); }
    double deriv(const VectorXd& xi, double x) const { return xi.dot(dz(x)); }

    const std::vector<double>& knots() const { return knots_; }

    std::string describe() const {
        std::ostringstream os;
        if (kind_ == Kind::Powers) {
            os << "powers:";
            for (std::size_t j = 0; j < powers_.size(); ++j)
                os << (j ? "," : "") << powers_[j];
            os << " center=" << center_;
        } else {
            os << "spline knots:";
            for (std::size_t j = 0; j < knots_.size(); ++j)
                os << (j ? "," : "") << knots_[j];
        }
        return os.str();
    }

private:
    enum class Kind { Powers, Spline };
    Kind kind_ = Kind::Powers;
    double center_ = 0.0;
    std::vector<int> powers_;
    double lo_ = 0.0, hi_ = 1.0;
    std::vector<double> knots_;
};

/// Ordinary least squares in the basis: (sum z z')^{-1} sum z y.
inline VectorXd basis_mle(const Dataset& data, const LinearBasis& basis) {
    int p = basis.size();
    MatrixXd gram = MatrixXd::Zero(p, p);
    VectorXd rhs = VectorXd::Zero(p);
    for (int i = 0; i < data.size(); ++i) {
        VectorXd zi = basis.z(data.xv(i));
        gram.noalias() += zi * zi.transpose();
        rhs.noalias() += zi * data.y[i];
    }
    return solve_spd(gram, rhs, "basis_mle (singular basis, delete functions)");
}

/// Model-robust covariance of the basis coefficients, valid outside the
/// parametric model: G^{-1} [n^{-1} sum r_i^2 z z'] G^{-1} with
/// G = n^{-1} sum z z' and residuals r_i at the fit.  The posterior of
/// the coefficients is (approximately) normal with covariance V/n.
inline MatrixXd sandwich_cov(const Dataset& data, const LinearBasis& basis,
                             const VectorXd& xi) {
    int p = basis.size();
    int n = data.size();
    MatrixXd gram = MatrixXd::Zero(p, p);
    MatrixXd meat = MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i) {
        VectorXd zi = basis.z(data.xv(i));
        double r = data.y[i] - xi.dot(zi);
        gram.noalias() += zi * zi.transpose();
        meat.noalias() += (r * r) * (zi * zi.transpose());
    }
    gram /= n;
    meat /= n;
    Eigen::LDLT<MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("sandwich_cov: singular basis Gram matrix");
    MatrixXd ginv_meat = ldlt.solve(meat);
    MatrixXd v = ldlt.solve(ginv_meat.transpose()).transpose();
    return symmetrize(v);
}

/// Fitted start curve with the posterior used for hierarchical averaging:
/// coefficients xi_hat and covariance V/n.
struct StartCurvePosterior {
    LinearBasis basis;
    VectorXd xi;
    MatrixXd cov; // V/n

    double value(double x) const { return basis.value(xi, x); }
    double deriv(double x) const { return basis.deriv(xi, x); }
};

inline StartCurvePosterior fit_start_curve(const Dataset& data, const LinearBasis& basis) {
    VectorXd xi = basis_mle(data, basis);
    MatrixXd v = sandwich_cov(data, basis, xi);
    return StartCurvePosterior{basis, xi, v / data.size()};
}

/// Independent draws from the normal posterior of the coefficients via a
/// symmetric square root (zero-floored eigenvalues, so degenerate
/// directions produce no variation).  Draw m uses substream m of `seed`,
/// making the set reproducible and order-independent.
inline std::vector<VectorXd> sample_start_curves(const StartCurvePosterior& post,
                                                 int draws, std::uint64_t seed) {
    if (draws < 1) throw std::invalid_argument("sample_start_curves: draws must be >= 1");
    MatrixXd root = symmetric_sqrt(post.cov);
    Rng base(seed);
    std::vector<VectorXd> out;
    out.reserve(draws);
    int p = static_cast<int>(post.xi.size());
    for (int m = 0; m < draws; ++m) {
        Rng sub = base.substream(static_cast<std::uint64_t>(m));
        VectorXd z(p);
        for (int j = 0; j < p; ++j) z[j] = sub.normal();
        out.push_back(post.xi + root * z);
    }
    return out;
}

namespace detail {
inline double basis_rss(const Dataset& data, const LinearBasis& basis) {
    int n = data.size();
    int p = basis.size();
    MatrixXd design(n, p);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        design.row(i) = basis.z(data.xv(i)).transpose();
        y[i] = data.y[i];
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    VectorXd beta = qr.solve(y);
    return (y - design * beta).squaredNorm();
}
} // namespace detail

/// Automatic spline start curve: place `max_knots` equally spaced interior
/// knots, then repeatedly delete the knot whose removal increases the
/// residual sum least, stopping once the increase exceeds log(n) times the
/// full-model residual variance (a consistent per-coefficient penalty;
/// a fixed factor lets spurious knots survive on smooth truths).  Returns
/// the surviving basis, possibly a plain cubic.
inline LinearBasis delete_knot_spline_basis(const Dataset& data, int max_knots) {
    if (max_knots < 0)
        throw std::invalid_argument("delete_knot_spline_basis: max_knots must be >= 0");
    if (data.size() <= max_knots + 4)
        throw std::invalid_argument("delete_knot_spline_basis: need n > max_knots + 4");
    double lo = data.x_min(), hi = data.x_max();
    if (!(hi > lo))
        throw std::invalid_argument("delete_knot_spline_basis: degenerate x range");
    std::vector<double> knots(max_knots);
    for (int j = 0; j < max_knots; ++j)
        knots[j] = (j + 1.0) / (max_knots + 1.0);
    LinearBasis full = LinearBasis::truncated_cubic(knots, lo, hi);
    double rss = detail::basis_rss(data, full);
    double dof = data.size() - full.size();
    double resid_var = rss / dof;
    double threshold = std::log(static_cast<double>(data.size())) * resid_var;

    std::vector<double> current = knots;
    while (!current.empty()) {
        double best_rss = std::numeric_limits<double>::infinity();
        int best_j = -1;
        for (std::size_t j = 0; j < current.size(); ++j) {
            std::vector<double> reduced;
            for (std::size_t l = 0; l < current.size(); ++l)
                if (l != j) reduced.push_back(current[l]);
            double r = detail::basis_rss(data, LinearBasis::truncated_cubic(reduced, lo, hi));
            if (r < best_rss) {
                best_rss = r;
                best_j = static_cast<int>(j);
            }
        }
        if (best_rss - rss > threshold) break;
        current.erase(current.begin() + best_j);
        rss = best_rss;
    }
    return LinearBasis::truncated_cubic(current, lo, hi);
}

} // namespace locbayes
