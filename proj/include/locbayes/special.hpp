#pragma once

// Special functions needed for the inference machinery: regularized
// incomplete gamma/beta, and the chi-square / Student-t / normal
// distribution functions with their quantile inverses.  Quantiles are
// obtained by numerical inversion of the CDFs (bracketed Newton with
// bisection safeguard).

#include <cmath>
#include <limits>
#include <stdexcept>

namespace locbayes {

namespace detail {

// Regularized lower incomplete gamma P(a,x) by series expansion.
// Converges quickly for x < a+1.
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16)
            break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a,x) by modified Lentz continued
// fraction.  Converges quickly for x > a+1.
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16)
            break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for the regularized incomplete beta function.
inline double beta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16)
            break;
    }
    return h;
}

} // namespace detail

/// Regularized lower incomplete gamma P(a,x) = gamma(a,x)/Gamma(a).
inline double gamma_p(double a, double x) {
    if (a <= 0.0) throw std::invalid_argument("gamma_p: a must be positive");
    if (x < 0.0) throw std::invalid_argument("gamma_p: x must be nonnegative");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cf(a, x);
}

/// Regularized incomplete beta I_x(a,b).
inline double beta_i(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0)
        throw std::invalid_argument("beta_i: parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_cf(a, b, x) / a;
    return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// Inverse standard normal CDF.  Rational approximation refined with one
/// Halley step against erfc, good to full double precision on (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

inline double chi2_cdf(double x, double dof) {
    if (dof <= 0.0) throw std::invalid_argument("chi2_cdf: dof must be positive");
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * dof, 0.5 * x);
}

/// Chi-square quantile by CDF inversion.  Wilson-Hilferty starting value,
/// then Newton iterations with a bisection safeguard; relative accuracy
/// better than 1e-10.
inline double chi2_quantile(double p, double dof) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("chi2_quantile: p must be in (0,1)");
    if (dof <= 0.0)
        throw std::invalid_argument("chi2_quantile: dof must be positive");
    const double a = 0.5 * dof;
    double z = normal_quantile(p);
    double t = 1.0 - 2.0 / (9.0 * dof) + z * std::sqrt(2.0 / (9.0 * dof));
    // Wilson-Hilferty start; small-x series inversion when that fails
    double x = (t > 0.0) ? dof * t * t * t
                         : 2.0 * std::exp((std::log(p) + std::lgamma(a + 1.0)) / a);
    if (!(x > 0.0) || !std::isfinite(x)) x = dof;
    double lo = 0.0, hi = std::max(x, dof);
    while (chi2_cdf(hi, dof) < p) {
        hi *= 2.0;
        if (hi > 1e300) break;
    }
    const double lg = std::lgamma(a);
    for (int it = 0; it < 200; ++it) {
        double f = chi2_cdf(x, dof) - p;
        if (f > 0.0) hi = x; else lo = x;
        // chi-square density at x
        double logpdf = (a - 1.0) * std::log(0.5 * x) - 0.5 * x - lg - std::log(2.0);
        double pdf = std::exp(logpdf);
        double step = (pdf > 0.0) ? f / pdf : 0.0;
        double xn = x - step;
        if (!(xn > lo && xn < hi))
            xn = 0.5 * (lo + hi);
        if (std::fabs(xn - x) <= 1e-13 * std::max(1.0, x)) {
            x = xn;
            break;
        }
        x = xn;
    }
    return x;
}

inline double student_t_cdf(double t, double dof) {
    if (dof <= 0.0) throw std::invalid_argument("student_t_cdf: dof must be positive");
    if (t == 0.0) return 0.5;
    double x = dof / (dof + t * t);
    double half_tail = 0.5 * beta_i(0.5 * dof, 0.5, x);
    return (t > 0.0) ? 1.0 - half_tail : half_tail;
}

/// Student-t quantile by bracketed bisection/Newton on the CDF.
inline double student_t_quantile(double p, double dof) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("student_t_quantile: p must be in (0,1)");
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -student_t_quantile(1.0 - p, dof);
    double z = normal_quantile(p);
    // Cornish-Fisher expansion as starting value
    double x = z + (z * z * z + z) / (4.0 * dof) +
               (5.0 * std::pow(z, 5) + 16.0 * z * z * z + 3.0 * z) / (96.0 * dof * dof);
    if (!std::isfinite(x) || x <= 0.0) x = z;
    double lo = 0.0, hi = std::max(x, 1.0);
    while (student_t_cdf(hi, dof) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) break;
    }
    const double lgc = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                       0.5 * std::log(dof * M_PI);
    for (int it = 0; it < 200; ++it) {
        double f = student_t_cdf(x, dof) - p;
        if (f > 0.0) hi = x; else lo = x;
        double logpdf = lgc - 0.5 * (dof + 1.0) * std::log1p(x * x / dof);
        double pdf = std::exp(logpdf);
        double xn = (pdf > 0.0) ? x - f / pdf : 0.5 * (lo + hi);
        if (!(xn > lo && xn < hi))
            xn = 0.5 * (lo + hi);
        if (std::fabs(xn - x) <= 1e-13 * std::max(1.0, std::fabs(x))) {
            x = xn;
            break;
        }
        x = xn;
    }
    return x;
}

/// Quantile of Gamma(shape, rate) via the chi-square relation
/// 2*rate*X ~ chi2(2*shape).
inline double gamma_quantile(double p, double shape, double rate) {
    if (shape <= 0.0 || rate <= 0.0)
        throw std::invalid_argument("gamma_quantile: shape and rate must be positive");
    return chi2_quantile(p, 2.0 * shape) / (2.0 * rate);
}

} // namespace locbayes
