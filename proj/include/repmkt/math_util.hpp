#pragma once

#include <cmath>
#include <limits>

namespace repmkt {

inline constexpr double kSqrt2 = 1.4142135623730951;
inline constexpr double kInvSqrt2Pi = 0.3989422804014327;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

/// Upper tail P(Z > z). erfc keeps tiny tail masses representable instead of
/// rounding 1 - Phi(z) to zero; the mass solver and the uniqueness margins
/// rely on these tails being strictly positive whenever they are >= ~1e-300.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / kSqrt2); }

inline double log_normal_pdf(double z) {
    return -0.5 * z * z - 0.9189385332046727; // log(1/sqrt(2*pi))
}

/// Mills-type ratio phi(z)/Phi(z), stable in the far left tail where Phi
/// underflows (asymptotic expansion in 1/z).
inline double pdf_over_cdf(double z) {
    const double cdf = normal_cdf(z);
    if (cdf > 1e-295) return normal_pdf(z) / cdf;
    // phi/Phi ~ -z / (1 - 1/z^2 + 3/z^4) for z << 0
    const double iz2 = 1.0 / (z * z);
    return -z / (1.0 - iz2 * (1.0 - 3.0 * iz2));
}

/// Inverse standard normal CDF (Acklam's rational approximation, polished by
/// one Halley step to full double precision).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        return std::numeric_limits<double>::quiet_NaN();
    }
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Halley refinement.
    const double e = normal_cdf(x) - p;
    const double u = e / normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

/// Smooth strictly-interior version of clamp(c, 0, 1); eps -> 0 recovers the
/// exact clamp. Used by the survival-smoothing homotopy for bounded cost
/// supports.
inline double smoothed_clamp01(double c, double eps) {
    auto softplus = [](double z) {
        if (z > 700.0) return z;
        if (z > 30.0) return z + std::log1p(std::exp(-z)); // keeps the tail alive
        return std::log1p(std::exp(z));
    };
    return eps * (softplus(c / eps) - softplus((c - 1.0) / eps));
}

/// log(exp(a) + exp(b)) without overflow; tolerates -inf arguments.
inline double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = a > b ? a : b;
    return m + std::log1p(std::exp(-(a > b ? a - b : b - a)));
}

} // namespace repmkt
