#pragma once

#include "repmkt/cost.hpp"
#include "repmkt/types.hpp"

#include <cmath>
#include <string>

namespace repmkt {

/// Which expected-continuation recursion the Bellman map uses.
///   main_text:         E[V] = cbar - E[c~ | c~ <= cbar]
///   survival_weighted: E[V] = F(cbar) * (cbar - E[c~ | c~ <= cbar])
/// The second is the exact expectation of max(0, cbar - c) and is the
/// default; the first reproduces the linear uniform special case.
enum class PayoffVariant { main_text, survival_weighted };

/// Price observation noise. Multiplicative: p = theta_hat * exp(eps),
/// eps ~ N(0, sigma_p) — the default. Additive: p = theta_hat + w with w
/// lognormal(0, sigma_p), the literal error-added-to-price reading.
/// Simulator and estimator always share the configured model.
enum class PriceNoise { multiplicative_lognormal, additive_lognormal };

/// Weekly discount factor matching a ~25% annual interest rate.
inline double weekly_beta_from_annual_rate(double annual_rate = 0.25) {
    return std::pow(1.0 / (1.0 + annual_rate), 1.0 / 52.0);
}

/// Structural parameters plus fixed quantities. Weekly time unit.
struct ModelParams {
    double theta_low = 0.300;
    double theta_high = 0.525;
    double alpha = 0.233;       // entering high-type share
    double mu_c = 0.386;        // cost shock mean
    double sigma_c = 1.0;       // cost shock scale, fixed by normalization
    double gamma_sales = 0.293; // weekly bucket-graduation probability
    double rho_low = 5.010;     // long-run rating drift targets (not clamped)
    double rho_high = 6.372;
    double xi = 0.060;   // rating persistence
    double sigma_r = 0.037; // rating innovation sd
    double sigma_p = 0.144; // price observation noise (log scale)
    double beta = weekly_beta_from_annual_rate();
    double demand_gamma0 = 1.0;
    double demand_gamma1 = 0.0;
    PayoffVariant payoff_variant = PayoffVariant::survival_weighted;
    PriceNoise price_noise = PriceNoise::multiplicative_lognormal;
    double entry_mass = 1.0;

    CostDistribution::Family cost_family = CostDistribution::Family::normal;

    // Reporting-only conversion chain.
    double dollars_per_unit_gram = 35.0;
    double grams_per_order = 20.0;
    double orders_per_period_scale = 1.0;

    double theta(QualityType t) const { return t == QualityType::high ? theta_high : theta_low; }
    double rho(QualityType t) const { return t == QualityType::high ? rho_high : rho_low; }

    double dollars(double units) const {
        return units * dollars_per_unit_gram * grams_per_order * orders_per_period_scale;
    }

    CostDistribution cost_distribution() const {
        if (cost_family == CostDistribution::Family::uniform01) return CostDistribution::uniform01();
        return CostDistribution::normal(mu_c, sigma_c);
    }
};

inline ModelParams table3_params() { return ModelParams{}; }

/// Throws InvalidParameterError on out-of-range values. Equal type values are
/// permitted (no-adverse-selection degenerate case); strictly reversed ones
/// are not.
inline void validate_params(const ModelParams& p) {
    auto fail = [](const std::string& msg) { throw InvalidParameterError(msg); };
    if (!(p.theta_low <= p.theta_high)) fail("theta_low must not exceed theta_high");
    if (!(p.alpha > 0.0 && p.alpha < 1.0)) fail("alpha must lie in (0,1)");
    if (!(p.gamma_sales >= 0.0 && p.gamma_sales <= 1.0)) fail("gamma_sales must lie in [0,1]");
    if (!(p.xi >= 0.0 && p.xi < 1.0)) fail("xi must lie in [0,1)");
    if (!(p.sigma_r > 0.0)) fail("sigma_r must be positive");
    if (!(p.sigma_p > 0.0)) fail("sigma_p must be positive");
    if (!(p.sigma_c > 0.0)) fail("sigma_c must be positive");
    if (!(p.beta >= 0.0 && p.beta < 1.0)) fail("beta must lie in [0,1)");
    if (!(p.entry_mass > 0.0)) fail("entry_mass must be positive");
    if (!std::isfinite(p.mu_c) || !std::isfinite(p.rho_low) || !std::isfinite(p.rho_high))
        fail("mu_c and rho parameters must be finite");
}

} // namespace repmkt
