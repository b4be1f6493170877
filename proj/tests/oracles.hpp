#pragma once

// Test-only reference computations, deliberately independent of the
// library implementation: brute-force grid minimization, Simpson
// quadrature, naive Gaussian elimination and small statistics helpers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracles {

// argmin of f over [lo,hi] by scan plus two rounds of refinement
inline double grid_minimize_1d(const std::function<double(double)>& f, double lo,
                               double hi, int points = 2001) {
    double best_x = lo, best_v = f(lo);
    for (int round = 0; round < 3; ++round) {
        for (int i = 0; i < points; ++i) {
            double x = lo + (hi - lo) * i / (points - 1);
            double v = f(x);
            if (v < best_v) {
                best_v = v;
                best_x = x;
            }
        }
        double step = (hi - lo) / (points - 1);
        lo = best_x - 2.0 * step;
        hi = best_x + 2.0 * step;
    }
    return best_x;
}

inline std::pair<double, double> grid_minimize_2d(
    const std::function<double(double, double)>& f, double alo, double ahi, double blo,
    double bhi, int points = 201) {
    double best_a = alo, best_b = blo, best_v = f(alo, blo);
    for (int round = 0; round < 4; ++round) {
        for (int i = 0; i < points; ++i) {
            for (int j = 0; j < points; ++j) {
                double a = alo + (ahi - alo) * i / (points - 1);
                double b = blo + (bhi - blo) * j / (points - 1);
                double v = f(a, b);
                if (v < best_v) {
                    best_v = v;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        double astep = (ahi - alo) / (points - 1);
        double bstep = (bhi - blo) / (points - 1);
        alo = best_a - 2.0 * astep;
        ahi = best_a + 2.0 * astep;
        blo = best_b - 2.0 * bstep;
        bhi = best_b + 2.0 * bstep;
    }
    return {best_a, best_b};
}

// composite Simpson rule; n is rounded up to an even interval count
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      int n = 2000) {
    if (n % 2) ++n;
    double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// plain Gaussian elimination with partial pivoting on std::vector storage
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
    int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        if (std::fabs(a[piv][col]) < 1e-14)
            throw std::runtime_error("gauss_solve: singular matrix");
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return x;
}

// Kolmogorov-Smirnov distance of a sample against Uniform(0,1)
inline double ks_uniform(std::vector<double> u) {
    std::sort(u.begin(), u.end());
    double d = 0.0;
    int n = static_cast<int>(u.size());
    for (int i = 0; i < n; ++i) {
        d = std::max(d, std::fabs(u[i] - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - u[i]));
    }
    return d;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sample_sd(const std::vector<double>& v) {
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
}

} // namespace oracles
