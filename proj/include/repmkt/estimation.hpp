#pragma once

#include "repmkt/equilibrium.hpp"
#include "repmkt/simulator.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace repmkt {

/// The ten Table-3 parameters, in reporting order.
const std::vector<std::string>& default_free_parameters();

/// Per-parameter bound transform used by the outer optimizer: logit for
/// (0,1)-bounded shares, log for positive scales, identity for location
/// parameters. beta and sigma_c are never free.
double to_transformed(const std::string& name, double value);
double from_transformed(const std::string& name, double t);
double transform_jacobian(const std::string& name, double value); // d natural / d transformed

double get_param(const ModelParams& p, const std::string& name);
void set_param(ModelParams& p, const std::string& name, double value);

struct EstimationConfig {
    std::vector<std::string> free_parameters = default_free_parameters();
    ModelParams base;         // fixed values, including beta and sigma_c
    StateSpace space = StateSpace::estimation_space();
    SolveOptions inner_options{1e-10, 10000, 0.5, false};
    int max_evaluations = 8000;
    double ftol = 1e-6; // simplex function-value spread
    double xtol = 1e-5; // simplex parameter spread (transformed)
    double initial_step = 0.1;
};

struct EvalDiagnostics {
    int inner_failures = 0;
    long zero_prob_transitions = 0;
    std::string first_zero_prob; // (vendor, from, to) of the first offender
    int excluded_entry_state = 0; // vendors not entering at omega_0
    int excluded_age1_exit = 0;   // enter-and-exit-in-first-week vendors
};

struct EstimationResult {
    ModelParams point_estimates;
    std::vector<std::string> free_parameters;
    std::vector<double> standard_errors;
    std::vector<std::string> se_flags; // "ok" or pseudo-inverse note
    double loglik = 0.0;
    int n_vendors = 0;
    long n_obs = 0;
    bool converged = false;
    int evaluation_count = 0;
    int inner_failures = 0;
    EvalDiagnostics diagnostics;
};

/// Likelihood contribution of one vendor conditional on its type: entry,
/// survival and price-density factors per period, a transition factor per
/// move, and either an exit factor or censoring (survival through the last
/// observed period). Returns -inf on a zero-probability transition.
double vendor_loglik_conditional(std::span<const PanelObservation> obs, QualityType type,
                                 const EquilibriumSolution& solution, const ModelParams& params,
                                 const TransitionKernel& kernel, const CostDistribution& cost,
                                 const StateSpace& space, EvalDiagnostics* diag = nullptr);

/// log[alpha exp(l_high) + (1-alpha) exp(l_low)] via log-sum-exp.
double mixture_vendor_loglik(std::span<const PanelObservation> obs,
                             const EquilibriumSolution& solution, const ModelParams& params,
                             const TransitionKernel& kernel, const CostDistribution& cost,
                             const StateSpace& space, EvalDiagnostics* diag = nullptr);

/// NFXP objective: re-solves the inner equilibrium at the candidate, then
/// sums vendor mixture log-likelihoods in vendor-id order. `warm` carries the
/// previous inner solution across evaluations. Returns -inf when the inner
/// loop fails (candidate rejected).
double total_loglik(const Panel& panel, const ModelParams& candidate,
                    const EstimationConfig& config,
                    std::optional<EquilibriumSolution>* warm = nullptr,
                    EvalDiagnostics* diag = nullptr);

EstimationResult maximize_likelihood(const Panel& panel, const EstimationConfig& config,
                                     const ModelParams& start);

/// OPG standard errors at the estimates: central-difference per-vendor score
/// vectors in transformed coordinates (relative step 1e-5), covariance
/// (sum_i g_i g_i')^{-1}, delta-method map back to natural units.
std::vector<double> opg_standard_errors(const Panel& panel, const ModelParams& estimates,
                                        const EstimationConfig& config,
                                        std::vector<std::string>* flags = nullptr);

/// Drops vendors that the likelihood cannot price: entry away from omega_0
/// and single-week exits. Counts land in `diag`.
Panel filter_panel_for_estimation(const Panel& panel, const StateSpace& space,
                                  EvalDiagnostics* diag = nullptr);

} // namespace repmkt
