#pragma once

#include "repmkt/cost.hpp"
#include "repmkt/grids.hpp"
#include "repmkt/kernels.hpp"
#include "repmkt/params.hpp"
#include "repmkt/types.hpp"

#include <vector>

namespace repmkt {

/// Posterior mean quality by state; every entry lies in [theta_low, theta_high].
struct Beliefs {
    Vec theta_hat;
};

/// Exit cutoffs cbar_theta(omega): stay iff the cost draw is below the cutoff.
struct CutoffProfile {
    PerType<Vec> cutoffs;
    const Vec& of(QualityType t) const { return cutoffs[type_index(t)]; }
    Vec& of(QualityType t) { return cutoffs[type_index(t)]; }
};

/// Stationary type-state masses. Quasi-absorbing states can carry masses far
/// beyond double range in meaningful ratios, so a log-domain copy is kept
/// alongside the plain values; beliefs are always formed from the logs.
struct MassDistribution {
    PerType<Vec> mass;
    PerType<Vec> log_mass;

    static MassDistribution from_values(PerType<Vec> values);
    const Vec& of(QualityType t) const { return mass[type_index(t)]; }
};

struct SolveOptions {
    double tol = 1e-10;
    int max_iter = 10000;
    double damping = 0.5; // applied to the belief update only
    bool require_assumptions = false;
};

struct EquilibriumSolution {
    Beliefs beliefs;
    CutoffProfile cutoffs;
    MassDistribution masses;
    PerType<Vec> survival;  // F(cbar)
    PerType<Vec> exit_prob; // P(c > cbar), kept separately for tail accuracy
    double residual_cutoff = 0.0;
    double residual_mass = 0.0; // relative sup-norm, |d mu| / (1 + |mu|)
    double residual_belief = 0.0;
    int iterations = 0;
    bool converged = false;
    double tol = 0.0;
    std::vector<int> zero_mass_states; // unreachable states, beliefs pinned to the prior mean
};

double flow_revenue(const Beliefs& beliefs, const ModelParams& params, int state);
Vec flow_revenue_all(const Beliefs& beliefs, const ModelParams& params);

/// Per-state expected value of staying, as a function of next period's
/// cutoff: cbar - E[c~|c~<=cbar] (main_text) or F(cbar)*(cbar - E[c~|c~<=cbar])
/// (survival_weighted).
Vec expected_continuation(const Vec& cutoffs_next, const CostDistribution& cost,
                          PayoffVariant variant);

/// d/dc of expected_continuation, used by the Newton inner solver and the
/// Jacobian assembly (this is the S diagonal).
Vec continuation_derivative(const Vec& cutoffs, const CostDistribution& cost,
                            PayoffVariant variant);

/// One synchronous Bellman sweep: cbar' = flow + beta * Pi_theta * E[V](cbar).
CutoffProfile bellman_cutoff_update(const Beliefs& beliefs, const CutoffProfile& cutoffs,
                                    const TransitionKernel& kernel, const CostDistribution& cost,
                                    const ModelParams& params);

/// One synchronous stationarity sweep: mu'(w') = sum_w Pi(w,w') F(cbar(w)) mu(w) + eta(w').
MassDistribution stationary_mass_update(const MassDistribution& masses,
                                        const CutoffProfile& cutoffs,
                                        const TransitionKernel& kernel,
                                        const CostDistribution& cost,
                                        const PerType<Vec>& entry);

/// Bayes-consistent posterior means. Throws UndefinedBeliefError on a state
/// with zero total mass.
Beliefs beliefs_from_masses(const MassDistribution& masses, const ModelParams& params);

/// Point-mass entry measure at the entry state, split alpha / (1 - alpha).
PerType<Vec> entry_measure(const ModelParams& params, const StateSpace& space);

EquilibriumSolution solve_equilibrium(const ModelParams& params, const StateSpace& space,
                                      const TransitionKernel& kernel,
                                      const CostDistribution& cost,
                                      const SolveOptions& options = {},
                                      const EquilibriumSolution* warm_start = nullptr);

/// Exact stationary masses given survival probabilities: solves
/// (I - Pi' R) mu = eta blockwise along the communicating-class condensation,
/// with Perron deflation on quasi-absorbing blocks. Throws
/// NonContractionError when a no-exit absorbing class receives inflow.
/// `exit_floor` (solver-internal) floors exactly-zero exit probabilities so
/// transient iterates with a temporarily absorbing class stay solvable; the
/// returned solution is always re-validated with the floor off.
void solve_stationary_masses(const Mat& pi, const Vec& survival, const Vec& exit_prob,
                             const Vec& entry, Vec& mass_out, Vec& log_mass_out,
                             double exit_floor = 0.0);

} // namespace repmkt
