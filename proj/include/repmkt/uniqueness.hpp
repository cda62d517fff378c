#pragma once

#include "repmkt/equilibrium.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace repmkt {

/// Jacobian blocks of the stacked residual map g = (g1, g2) at an
/// equilibrium, type-stacked (low block first, index = type * n + state):
///   g1 = p(mu) + beta * Pi * (v(cbar)) - cbar        (cutoff equations)
///   g2 = Pi' * (F(cbar) o mu) + eta - mu             (stationarity)
struct JacobianBundle {
    Mat dg1;   // d g1 / d cbar = beta * Pi * S - I
    Mat dg2;   // d g2 / d mu   = Pi' * R - I
    Mat off12; // d g1 / d mu (belief channel)
    Mat off21; // d g2 / d cbar (survival channel)
    Vec s_diag;
    Vec r_diag;
    Vec exit;       // erfc-accurate exit probabilities, 1 - r_diag
    Vec leave_prob; // per-state off-diagonal transition mass
    int n_states = 0;
    int zero_mass_states = 0;
};

JacobianBundle assemble_jacobian(const EquilibriumSolution& solution, const ModelParams& params,
                                 const TransitionKernel& kernel, const CostDistribution& cost);

struct PMatrixReport {
    bool is_p = false;
    bool sampled = false;   // true when only a subset of minors was checked
    long minors_checked = 0;
    double worst_log_minor = 0.0; // log of the smallest positive minor seen
    std::string failure;          // subset description when not P
};

/// Exhaustive principal-minor test for n <= 12; leading minors plus seeded
/// random principal submatrices (sampled flag) beyond that. Minor signs are
/// evaluated in extended precision with log-magnitude accumulation so
/// near-absorbing diagonal entries do not underflow to zero.
PMatrixReport is_p_matrix_report(const Mat& m, std::uint64_t seed = 20240801, int samples = 512);

bool is_p_matrix(const Mat& m);

/// McKenzie's weighted diagonal dominance, evaluated exactly as displayed:
/// d_j |a_jj| - sum_{i != j} d_i |a_ji| > 0 for every row j.
bool is_diagonally_dominant(const Mat& m, const Vec& weights);

struct DominanceReport {
    bool holds = false;
    double min_margin = 0.0;
    int argmin_row = -1;
    bool matrix_test_agrees = true; // literal matrix evaluation vs scalar reduction
};

struct UniquenessReport {
    bool overall = false;
    DominanceReport dg1_dominance; // weights s^{-1}, scalar reduction 1/s_j - beta
    DominanceReport dg2_dominance; // transpose form Pi*R - I, weights F^{-1},
                                   // scalar reduction exit_j / (1 - exit_j)
    double off12_norm = 0.0;       // induced sup norms of the coupling blocks
    double off21_norm = 0.0;
    PMatrixReport p_matrix;        // on -Dg (sign-corrected full Jacobian)
    int zero_mass_states = 0;
    std::string notes;
};

UniquenessReport verify_uniqueness_at(const EquilibriumSolution& solution,
                                      const ModelParams& params, const TransitionKernel& kernel,
                                      const CostDistribution& cost);

struct BetaBarPoint {
    double beta = 0.0;
    bool solved = false;
    bool passed = false;
    std::string note;
};

struct BetaBarResult {
    std::optional<double> beta_bar;
    std::vector<BetaBarPoint> points;
    bool monotone = true; // passes form a suffix of the grid
};

/// Scans an increasing beta grid, re-solving the equilibrium and running the
/// verifier at each point. Returns the smallest grid beta from which the
/// verdict stays positive through the end of the grid.
BetaBarResult estimate_beta_bar(const ModelParams& params, const StateSpace& space,
                                const TransitionKernel& kernel, const CostDistribution& cost,
                                const std::vector<double>& beta_grid,
                                const SolveOptions& options = {});

} // namespace repmkt
