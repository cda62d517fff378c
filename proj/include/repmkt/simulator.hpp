#pragma once

#include "repmkt/equilibrium.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace repmkt {

struct SimulationConfig {
    int n_vendors = 2000;
    int horizon_weeks = 85; // market closure
    std::uint64_t seed = 1;
    bool staggered_entry = true;
};

struct PanelObservation {
    std::int64_t vendor_id = 0;
    int week = 0; // calendar week
    int age = 0;  // weeks since entry, 1-based
    int state_index = 0;
    double rating = 0.0;
    int sales_bucket = 0;
    double price_obs = 0.0; // NaN on the exit row (no sale that week)
    bool exited_this_week = false;
};

struct VendorMeta {
    std::int64_t vendor_id = 0;
    int entry_week = 1;
    bool censored = false;
    QualityType true_type = QualityType::low; // validation only, never read by the estimator
};

struct Panel {
    std::vector<PanelObservation> observations; // grouped by vendor, ages contiguous
    std::vector<VendorMeta> meta;               // one entry per vendor, same order

    int n_vendors() const { return static_cast<int>(meta.size()); }
    std::size_t n_obs() const { return observations.size(); }

    /// [begin, end) index range of each vendor's rows in `observations`.
    std::vector<std::pair<std::size_t, std::size_t>> vendor_spans() const;

    void validate(const StateSpace* space = nullptr) const;
};

Panel simulate_panel(const EquilibriumSolution& solution, const ModelParams& params,
                     const StateSpace& space, const TransitionKernel& kernel,
                     const CostDistribution& cost, const SimulationConfig& config);

struct MomentReport {
    // Rating percentiles by sales bucket (sales-made proxy).
    std::vector<double> rating_median_by_bucket;
    std::vector<double> rating_p30_by_bucket;
    std::vector<double> rating_p70_by_bucket;
    std::vector<double> rating_p10_by_bucket; // the dispersion at these estimates
                                              // lives in the lower tail
    // One-week continuation rates split at rating 4.95 and age 7 weeks.
    double stay_young_high = 1.0, stay_young_low = 1.0;
    double stay_old_high = 1.0, stay_old_low = 1.0;
    double active_share_at_closure = 0.0;
    std::map<int, int> exit_age_histogram;
};

MomentReport empirical_moments(const Panel& panel);

/// Panel CSV: header `vendor_id,week,age,state_index,rating,sales_bucket,
/// price_obs,exited`; ratings with 6 decimals, prices with 17 significant
/// digits, exit rows carry price nan. A sidecar `<path>.meta.json` holds
/// per-vendor entry week, censoring flag and true type.
void write_panel(const Panel& panel, const std::string& path);
Panel read_panel(const std::string& path);

} // namespace repmkt
