#pragma once

#include "repmkt/math_util.hpp"
#include "repmkt/types.hpp"

namespace repmkt {

/// Per-period cost shock law. Continuous with strictly increasing cdf on its
/// support; all members are total functions of c (the uniform family extends
/// beyond [0,1] by its natural limits, so cutoffs never need clamping).
class CostDistribution {
public:
    enum class Family { uniform01, normal };

    static CostDistribution uniform01() { return CostDistribution(Family::uniform01, 0.0, 1.0); }

    static CostDistribution normal(double mu, double sigma) {
        if (!(sigma > 0.0)) throw InvalidParameterError("normal cost law requires sigma > 0");
        return CostDistribution(Family::normal, mu, sigma);
    }

    Family family() const { return family_; }
    double mu() const { return mu_; }
    double sigma() const { return sigma_; }

    double cdf(double c) const {
        if (family_ == Family::uniform01) return c <= 0.0 ? 0.0 : (c >= 1.0 ? 1.0 : c);
        return normal_cdf((c - mu_) / sigma_);
    }

    /// P(cost > c), computed through the upper tail directly. At the model's
    /// quasi-absorbing states this is the only representation of the exit
    /// probability that does not round to zero.
    double exit_prob(double c) const {
        if (family_ == Family::uniform01) return c <= 0.0 ? 1.0 : (c >= 1.0 ? 0.0 : 1.0 - c);
        return normal_sf((c - mu_) / sigma_);
    }

    double pdf(double c) const {
        if (family_ == Family::uniform01) return (c > 0.0 && c <= 1.0) ? 1.0 : 0.0;
        return normal_pdf((c - mu_) / sigma_) / sigma_;
    }

    /// E[c~ | c~ <= c]. Uniform: c/2 on (0,1], unconditional mean 1/2 beyond
    /// the support, degenerate limit c below it. Normal: mu - sigma*phi/Phi.
    double trunc_mean_below(double c) const {
        if (family_ == Family::uniform01) {
            if (c <= 0.0) return c;
            if (c >= 1.0) return 0.5;
            return 0.5 * c;
        }
        return mu_ - sigma_ * pdf_over_cdf((c - mu_) / sigma_);
    }

    /// d/dc E[c~ | c~ <= c], in (0,1) on the interior of the support.
    double trunc_mean_deriv(double c) const {
        if (family_ == Family::uniform01) {
            if (c <= 0.0) return 1.0;
            if (c > 1.0) return 0.0;
            return 0.5;
        }
        const double z = (c - mu_) / sigma_;
        const double r = pdf_over_cdf(z);
        return r * (z + r);
    }

    /// E[max(0, c - c~)] = F(c) * (c - E[c~ | c~ <= c]).
    double expected_positive_part(double c) const {
        if (family_ == Family::uniform01) {
            if (c <= 0.0) return 0.0;
            if (c >= 1.0) return c - 0.5;
            return 0.5 * c * c;
        }
        const double z = (c - mu_) / sigma_;
        if (z > -37.0) return sigma_ * (z * normal_cdf(z) + normal_pdf(z));
        // Far left tail: z*Phi + phi cancels; switch to the asymptotic series.
        const double iz2 = 1.0 / (z * z);
        return sigma_ * normal_pdf(z) * iz2 * (1.0 - iz2 * (3.0 - 15.0 * iz2));
    }

    double quantile(double p) const {
        if (family_ == Family::uniform01) return p;
        return mu_ + sigma_ * normal_quantile(p);
    }

private:
    CostDistribution(Family f, double mu, double sigma) : family_(f), mu_(mu), sigma_(sigma) {}

    Family family_;
    double mu_;
    double sigma_;
};

} // namespace repmkt
