#pragma once

#include "repmkt/cost.hpp"
#include "repmkt/grids.hpp"
#include "repmkt/params.hpp"
#include "repmkt/types.hpp"

#include <string>
#include <vector>

namespace repmkt {

/// Per-type row-stochastic transition matrices over the state space.
/// Rows index source states, columns destination states.
struct TransitionKernel {
    PerType<Mat> pi;

    const Mat& of(QualityType t) const { return pi[type_index(t)]; }
    Mat& of(QualityType t) { return pi[type_index(t)]; }
    Index size() const { return pi[0].rows(); }
};

/// Tauchen discretization of r' = xi*r + (1-xi)*rho_theta + eps,
/// eps ~ N(0, sigma_r), on an arbitrary strictly increasing grid. Tail mass
/// beyond the outermost cell midpoints is absorbed into the boundary cells.
Mat build_tauchen_rating_kernel(const ModelParams& params, const RatingGrid& grid,
                                QualityType type);

/// Upper-bidiagonal ladder: graduate with probability gamma, stay otherwise;
/// last bucket absorbing.
Mat build_sales_kernel(const ModelParams& params, const SalesGrid& grid);

/// Kronecker product of the per-type rating kernels with the common sales
/// kernel, consistent with the StateSpace index map.
TransitionKernel build_product_kernel(const PerType<Mat>& rating_kernels,
                                      const Mat& sales_kernel, const StateSpace& space);

TransitionKernel build_model_kernel(const ModelParams& params, const StateSpace& space);

/// Strongly connected components of the positive-entry digraph of m,
/// returned in topological order (edges only point from earlier components
/// to later ones).
std::vector<std::vector<int>> strongly_connected_components(const Mat& m);

struct AssumptionReport {
    bool holds = false;
    std::string diagnostic;
};

/// A1: every per-type matrix irreducible (single strongly connected
/// component). Finite state spaces make irreducible imply positive
/// recurrent.
AssumptionReport validate_assumption_a1(const TransitionKernel& kernel);

/// A2: 0 < F(theta_low) < F(theta_high) < 1 plus the derivative condition
/// d/dc [F(c)(c - E[c~|c~<=c])] > 0, checked by central differences on the
/// probe grid.
AssumptionReport validate_assumption_a2(const CostDistribution& cost, const ModelParams& params,
                                        const std::vector<double>& probe_grid);

std::vector<double> default_a2_probe_grid(const ModelParams& params, int n = 1000);

} // namespace repmkt
