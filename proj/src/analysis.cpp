#include "repmkt/analysis.hpp"

#include "repmkt/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace repmkt {

namespace {

double value_at(const EquilibriumSolution& solution, const ModelParams& params,
                const CostDistribution& cost, QualityType type, int state) {
    const double c = solution.cutoffs.of(type)(state);
    return params.payoff_variant == PayoffVariant::survival_weighted
               ? cost.expected_positive_part(c)
               : c - cost.trunc_mean_below(c);
}

} // namespace

EntryProfit expected_entry_profit(const EquilibriumSolution& solution, const ModelParams& params,
                                  const StateSpace& space, QualityType type) {
    if (!solution.converged)
        throw StaleSolutionError("expected_entry_profit: solution did not converge");
    const CostDistribution cost = params.cost_distribution();
    EntryProfit p;
    p.units = value_at(solution, params, cost, type, space.entry_state());
    p.dollars = params.dollars(p.units);
    return p;
}

ReputationLoss returns_to_reputation(const EquilibriumSolution& solution,
                                     const ModelParams& params, const StateSpace& space,
                                     const CostDistribution& cost, double from_rating,
                                     double to_rating, int sales_bucket) {
    if (sales_bucket < 0 || sales_bucket >= space.n_buckets())
        throw InvalidParameterError("returns_to_reputation: bucket out of range");
    ReputationLoss loss;
    const int ri_from = space.rating_grid.snap(from_rating);
    const int ri_to = space.rating_grid.snap(to_rating);
    loss.snapped = std::abs(space.rating_grid.points[ri_from] - from_rating) > 1e-12 ||
                   std::abs(space.rating_grid.points[ri_to] - to_rating) > 1e-12;
    loss.from_state = space.index(ri_from, sales_bucket);
    loss.to_state = space.index(ri_to, sales_bucket);
    for (QualityType t : kTypes) {
        const int ti = type_index(t);
        const double v_from = value_at(solution, params, cost, t, loss.from_state);
        const double v_to = value_at(solution, params, cost, t, loss.to_state);
        loss.npv_units[ti] = v_from - v_to;
        loss.npv_dollars[ti] = params.dollars(loss.npv_units[ti]);
        loss.pct_loss[ti] = v_from != 0.0 ? (v_from - v_to) / v_from : 0.0;
    }
    return loss;
}

NoRatingReport no_rating_counterfactual(const ModelParams& params, const StateSpace& base_space,
                                        const SolveOptions& options) {
    NoRatingReport report;
    const CostDistribution cost = params.cost_distribution();

    const TransitionKernel base_kernel = build_model_kernel(params, base_space);
    const EquilibriumSolution base =
        solve_equilibrium(params, base_space, base_kernel, cost, options);

    RatingGrid single;
    single.points = {base_space.rating_grid.r_max};
    single.r_min = base_space.rating_grid.r_min;
    single.r_max = base_space.rating_grid.r_max;
    const StateSpace collapsed(single, base_space.sales_grid);
    const TransitionKernel cf_kernel = build_model_kernel(params, collapsed);
    const EquilibriumSolution cf = solve_equilibrium(params, collapsed, cf_kernel, cost, options);

    const int w0b = base_space.entry_state();
    const int w0c = collapsed.entry_state();
    for (QualityType t : kTypes) {
        const int ti = type_index(t);
        report.baseline_cutoff_entry[ti] = base.cutoffs.of(t)(w0b);
        report.baseline_survival_entry[ti] = base.survival[ti](w0b);
        report.baseline_profit[ti] = expected_entry_profit(base, params, base_space, t);
        report.counterfactual_cutoff_entry[ti] = cf.cutoffs.of(t)(w0c);
        report.counterfactual_survival_entry[ti] = cf.survival[ti](w0c);
        report.counterfactual_profit[ti] = expected_entry_profit(cf, params, collapsed, t);
    }
    report.cutoffs_type_independent =
        (cf.cutoffs.of(QualityType::low) - cf.cutoffs.of(QualityType::high)).cwiseAbs().maxCoeff() ==
        0.0;
    return report;
}

double sybil_attack_value(const EquilibriumSolution& solution, const ModelParams& params,
                          const StateSpace& space, int current_state, QualityType type,
                          double entry_fee_dollars) {
    if (current_state < 0 || current_state >= space.n_states())
        throw InvalidParameterError("sybil_attack_value: state out of range");
    const CostDistribution cost = params.cost_distribution();
    const double v0 = value_at(solution, params, cost, type, space.entry_state());
    const double vc = value_at(solution, params, cost, type, current_state);
    return params.dollars(v0) - params.dollars(vc) - entry_fee_dollars;
}

std::vector<SweepRow> comparative_statics_sweep(const SweepSpec& spec, const ModelParams& base,
                                                const StateSpace& space,
                                                const SimulationConfig& sim_config,
                                                const SolveOptions& options) {
    if (spec.values.empty()) throw InvalidParameterError("sweep grid is empty");
    std::vector<SweepRow> rows(spec.values.size());

    parallel_for(spec.values.size(), [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.value = spec.values[i];
        ModelParams p = base;
        set_param(p, spec.parameter, spec.values[i]);
        try {
            validate_params(p);
            const CostDistribution cost = p.cost_distribution();
            const TransitionKernel kernel = build_model_kernel(p, space);
            const EquilibriumSolution sol = solve_equilibrium(p, space, kernel, cost, options);
            const Panel panel = simulate_panel(sol, p, space, kernel, cost, sim_config);

            // Per-vendor summaries by true type.
            const auto spans = panel.vendor_spans();
            PerType<std::vector<double>> prices, exit_ages, sales;
            for (std::size_t v = 0; v < spans.size(); ++v) {
                const auto [b, e] = spans[v];
                const int ti = type_index(panel.meta[v].true_type);
                double psum = 0.0;
                long pn = 0;
                for (std::size_t k = b; k < e; ++k) {
                    if (std::isfinite(panel.observations[k].price_obs)) {
                        psum += panel.observations[k].price_obs;
                        ++pn;
                    }
                }
                if (pn > 0) prices[ti].push_back(psum / pn);
                if (!panel.meta[v].censored)
                    exit_ages[ti].push_back(panel.observations[e - 1].age);
                sales[ti].push_back(static_cast<double>(pn));
            }
            // High-type share among vendors alive past half the horizon.
            long old_high = 0, old_total = 0;
            for (std::size_t v = 0; v < spans.size(); ++v) {
                const auto [b, e] = spans[v];
                if (panel.observations[e - 1].age >= sim_config.horizon_weeks / 2) {
                    ++old_total;
                    if (panel.meta[v].true_type == QualityType::high) ++old_high;
                }
            }

            auto mean_sd = [](const std::vector<double>& v) {
                if (v.empty())
                    return std::pair<double, double>{std::numeric_limits<double>::quiet_NaN(), 0.0};
                const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
                double s2 = 0.0;
                for (double x : v) s2 += (x - m) * (x - m);
                return std::pair<double, double>{m, v.size() > 1 ? std::sqrt(s2 / (v.size() - 1))
                                                                 : 0.0};
            };

            auto push = [&](const std::string& name, double mean, double sd) {
                if (!spec.metrics.empty() &&
                    std::find(spec.metrics.begin(), spec.metrics.end(), name) == spec.metrics.end())
                    return;
                row.metric_names.push_back(name);
                row.metric_means.push_back(mean);
                row.metric_sds.push_back(sd);
            };

            for (QualityType t : kTypes) {
                const int ti = type_index(t);
                const std::string suffix = t == QualityType::high ? "_high" : "_low";
                auto [pm, psd] = mean_sd(prices[ti]);
                push("avg_price" + suffix, pm, psd);
                auto [am, asd] = mean_sd(exit_ages[ti]);
                push("mean_exit_age" + suffix, am, asd);
                auto [sm, ssd] = mean_sd(sales[ti]);
                push("total_sales" + suffix, sm * sales[ti].size(), ssd);
                push("entry_profit" + suffix,
                     expected_entry_profit(sol, p, space, t).dollars, 0.0);
            }
            push("high_type_share_old",
                 old_total > 0 ? static_cast<double>(old_high) / old_total
                               : std::numeric_limits<double>::quiet_NaN(),
                 0.0);
            row.solved = true;
        } catch (const std::exception& err) {
            row.solved = false;
            row.error = err.what();
        }
    });
    return rows;
}

RegressionResult stylized_fact_regression(const Panel& panel, const RegressionSpec& spec) {
    // Rows with an observed sale (exit rows carry no price).
    std::vector<std::size_t> keep;
    std::set<double> distinct_ratings;
    int max_bucket = 0;
    for (std::size_t i = 0; i < panel.observations.size(); ++i) {
        const auto& o = panel.observations[i];
        if (std::isfinite(o.price_obs) && o.price_obs > 0.0) {
            keep.push_back(i);
            distinct_ratings.insert(o.rating);
            max_bucket = std::max(max_bucket, o.sales_bucket);
        }
    }
    if (keep.size() < 3) throw InvalidParameterError("regression: too few priced rows");
    if (distinct_ratings.size() < 2)
        throw InvalidParameterError("regression: needs at least two distinct ratings");

    const int half = (max_bucket + 1) / 2;
    std::vector<std::string> names;
    if (!spec.vendor_fixed_effects) names.push_back("intercept");
    if (spec.split_rating_by_sales_half) {
        names.push_back("sales_top_half");
        names.push_back("rating_small_sellers");
        names.push_back("rating_large_sellers");
    } else {
        names.push_back("rating");
    }
    const int bin_count = spec.review_bins > 1 ? spec.review_bins : 0;
    for (int b = 1; b < bin_count; ++b) names.push_back("review_bin_" + std::to_string(b));
    if (spec.include_age) names.push_back("age");

    const long n = static_cast<long>(keep.size());
    const int k = static_cast<int>(names.size());
    Mat x = Mat::Zero(n, k);
    Vec y(n);
    std::vector<std::int64_t> vendor(n);
    for (long r = 0; r < n; ++r) {
        const auto& o = panel.observations[keep[r]];
        y(r) = std::log(o.price_obs);
        vendor[r] = o.vendor_id;
        int col = 0;
        if (!spec.vendor_fixed_effects) x(r, col++) = 1.0;
        if (spec.split_rating_by_sales_half) {
            const bool top = o.sales_bucket >= half;
            x(r, col++) = top ? 1.0 : 0.0;
            x(r, col++) = top ? 0.0 : o.rating;
            x(r, col++) = top ? o.rating : 0.0;
        } else {
            x(r, col++) = o.rating;
        }
        if (bin_count > 0) {
            const int bin = std::min(bin_count - 1, o.sales_bucket * bin_count / (max_bucket + 1));
            for (int b = 1; b < bin_count; ++b) x(r, col++) = bin == b ? 1.0 : 0.0;
        }
        if (spec.include_age) x(r, col++) = o.age;
    }

    if (spec.vendor_fixed_effects) {
        // Within transformation: demean y and X by vendor.
        std::map<std::int64_t, std::pair<long, long>> groups; // vendor -> (first, count)
        std::map<std::int64_t, Vec> xmean;
        std::map<std::int64_t, double> ymean;
        for (long r = 0; r < n; ++r) {
            auto& g = groups[vendor[r]];
            ++g.second;
            auto it = xmean.find(vendor[r]);
            if (it == xmean.end()) {
                xmean[vendor[r]] = x.row(r).transpose();
                ymean[vendor[r]] = y(r);
            } else {
                it->second += x.row(r).transpose();
                ymean[vendor[r]] += y(r);
            }
        }
        for (long r = 0; r < n; ++r) {
            const double cnt = groups[vendor[r]].second;
            x.row(r) -= (xmean[vendor[r]] / cnt).transpose();
            y(r) -= ymean[vendor[r]] / cnt;
        }
    }

    Eigen::ColPivHouseholderQR<Mat> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
        const auto perm = qr.colsPermutation().indices();
        const int bad = perm(qr.rank()); // first column outside the independent set
        throw InvalidParameterError("regression design is rank deficient; collinear column: " +
                                    names[bad]);
    }
    const Vec beta = qr.solve(y);
    const Vec resid = y - x * beta;

    // HC1 robust covariance.
    const Mat xtx_inv = (x.transpose() * x).ldlt().solve(Mat::Identity(k, k));
    Mat meat = Mat::Zero(k, k);
    for (long r = 0; r < n; ++r) {
        const Vec xi = x.row(r).transpose();
        meat += resid(r) * resid(r) * xi * xi.transpose();
    }
    const double dof_adj = static_cast<double>(n) / std::max<long>(1, n - k);
    const Mat cov = dof_adj * xtx_inv * meat * xtx_inv;

    RegressionResult result;
    result.names = names;
    result.coefficients = beta;
    result.robust_se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    result.n = n;
    const double tss = (y.array() - y.mean()).square().sum();
    result.r_squared = tss > 0.0 ? 1.0 - resid.squaredNorm() / tss : 0.0;
    return result;
}

} // namespace repmkt
