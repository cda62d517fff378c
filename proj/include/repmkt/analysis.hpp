#pragma once

#include "repmkt/estimation.hpp"

#include <string>
#include <vector>

namespace repmkt {

struct EntryProfit {
    double units = 0.0;
    double dollars = 0.0;
};

/// E_c[V_type(omega_0, c~)] from the solution's cutoffs, in normalized units
/// and dollars (conversion chain recorded in the params).
EntryProfit expected_entry_profit(const EquilibriumSolution& solution, const ModelParams& params,
                                  const StateSpace& space, QualityType type);

struct ReputationLoss {
    PerType<double> npv_units{};
    PerType<double> npv_dollars{};
    PerType<double> pct_loss{};
    int from_state = 0, to_state = 0;
    bool snapped = false;
};

/// Value lost when the rating falls from `from_rating` to `to_rating` at a
/// fixed sales bucket, per type, absolute and as a share of the from-value.
ReputationLoss returns_to_reputation(const EquilibriumSolution& solution,
                                     const ModelParams& params, const StateSpace& space,
                                     const CostDistribution& cost, double from_rating,
                                     double to_rating, int sales_bucket);

struct NoRatingReport {
    PerType<double> baseline_cutoff_entry{};
    PerType<double> baseline_survival_entry{};
    PerType<EntryProfit> baseline_profit{};
    PerType<double> counterfactual_cutoff_entry{};
    PerType<double> counterfactual_survival_entry{};
    PerType<EntryProfit> counterfactual_profit{};
    bool cutoffs_type_independent = false;
};

/// Re-solves with a single-point rating grid (beliefs can no longer separate
/// types) and compares entry-state outcomes against the baseline grid.
NoRatingReport no_rating_counterfactual(const ModelParams& params, const StateSpace& base_space,
                                        const SolveOptions& options = {});

/// dollars(V_type(omega_0)) - dollars(V_type(current_state)) - fee: positive
/// means abandoning the identity and re-entering beats continuing.
double sybil_attack_value(const EquilibriumSolution& solution, const ModelParams& params,
                          const StateSpace& space, int current_state, QualityType type,
                          double entry_fee_dollars);

struct SweepSpec {
    std::string parameter;
    std::vector<double> values;
    std::vector<std::string> metrics; // empty = all
};

struct SweepRow {
    double value = 0.0;
    bool solved = false;
    std::string error;
    // metric -> (mean, sd across vendors); expected profits carry sd 0.
    std::vector<std::string> metric_names;
    std::vector<double> metric_means;
    std::vector<double> metric_sds;
};

std::vector<SweepRow> comparative_statics_sweep(const SweepSpec& spec, const ModelParams& base,
                                                const StateSpace& space,
                                                const SimulationConfig& sim_config,
                                                const SolveOptions& options = {});

struct RegressionSpec {
    bool split_rating_by_sales_half = false;
    int review_bins = 0; // bucket-index bins as total-review controls
    bool include_age = true;
    bool vendor_fixed_effects = false;
};

struct RegressionResult {
    std::vector<std::string> names;
    Vec coefficients;
    Vec robust_se; // heteroskedasticity-robust (HC1)
    long n = 0;
    double r_squared = 0.0;
};

/// OLS of log price on rating and controls over non-exit rows, QR-based,
/// with optional vendor within-transformation. Rank deficiency raises an
/// error naming the collinear column.
RegressionResult stylized_fact_regression(const Panel& panel, const RegressionSpec& spec);

} // namespace repmkt
