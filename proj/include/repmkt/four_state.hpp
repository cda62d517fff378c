#pragma once

#include "repmkt/equilibrium.hpp"

namespace repmkt {

/// The four-state illustration: ratings {L, H} x sales levels {1, 2}, types
/// {0, 1}, uniform costs, main_text recursion. State order follows the
/// StateSpace convention: L1, L2, H1, H2; entry is at H1.

StateSpace four_state_space();

/// Per-type transition matrices with gamma_0 = 1 - gamma_1 = gamma. At sales
/// level s, a surviving type-theta seller switches rating L->H with
/// probability (1 - gamma_theta)/(2s) and H->L with (1 - gamma_{1-theta})/(2s);
/// graduation (level 1 -> 2 with probability rho) keeps the rating.
TransitionKernel build_four_state_kernel(double gamma, double rho);

ModelParams four_state_params(double gamma, double rho, double beta,
                              const PerType<double>& entry);

/// Solves the eight stationarity and eight cutoff equations directly: Newton
/// on the cutoff vector with the masses eliminated through the per-type
/// linear stationarity systems. Independent of the general solver's
/// fixed-point iteration.
EquilibriumSolution solve_four_state_closed_form(double gamma, double rho, double beta,
                                                 const PerType<double>& entry);

} // namespace repmkt
