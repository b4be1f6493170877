#pragma once

// Small dense linear-algebra helpers on top of Eigen: solving the tiny
// symmetric systems that appear in local fits and posteriors, spectral
// clamping of shrinkage weight matrices, and symmetric square roots for
// multivariate normal sampling.

#include <Eigen/Dense>
#include <stdexcept>

namespace locbayes {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Solve A x = b for a small symmetric positive (semi)definite A,
/// throwing on (near-)singularity.
inline VectorXd solve_spd(const MatrixXd& a, const VectorXd& b,
                          const char* what = "solve_spd") {
    Eigen::LDLT<MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error(std::string(what) + ": matrix not positive definite");
    VectorXd x = ldlt.solve(b);
    double resid = (a * x - b).norm();
    double scale = b.norm() + a.norm() * x.norm();
    if (scale > 0.0 && !(resid <= 1e-8 * scale))
        throw std::runtime_error(std::string(what) + ": singular system");
    return x;
}

/// General small solve with rank check (column-pivoted QR).
inline VectorXd solve_full(const MatrixXd& a, const VectorXd& b,
                           const char* what = "solve_full") {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
    if (qr.rank() < a.cols())
        throw std::runtime_error(std::string(what) + ": singular system");
    return qr.solve(b);
}

inline MatrixXd symmetrize(const MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

/// Symmetrize, then clamp eigenvalues into [lo, hi] and reassemble.  Used
/// to truncate matrix shrinkage weights so both level and slope weights
/// stay in the unit interval.
inline MatrixXd spectral_clamp(const MatrixXd& m, double lo = 0.0, double hi = 1.0) {
    MatrixXd sym = symmetrize(m);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectral_clamp: eigendecomposition failed");
    VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i)
        ev[i] = std::min(hi, std::max(lo, ev[i]));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Symmetric square root of a positive semidefinite matrix, flooring tiny
/// negative eigenvalues at zero.
inline MatrixXd symmetric_sqrt(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("symmetric_sqrt: eigendecomposition failed");
    VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i)
        ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace locbayes
