#include "doctest.h"

#include "repmkt/json_io.hpp"
#include "repmkt/parallel.hpp"
#include "repmkt/simulator.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <algorithm>
#include <map>

using namespace repmkt;

namespace {

struct SolvedModel {
    ModelParams params;
    StateSpace space;
    TransitionKernel kernel;
    CostDistribution cost;
    EquilibriumSolution solution;

    SolvedModel()
        : params(table3_params()), space(StateSpace::estimation_space()),
          kernel(build_model_kernel(params, space)), cost(params.cost_distribution()),
          solution(solve_equilibrium(params, space, kernel, cost)) {}
};

const SolvedModel& table3_estimation_model() {
    static const SolvedModel model;
    return model;
}

} // namespace

TEST_CASE("simulated panels respect the lifecycle invariants") {
    const auto& m = table3_estimation_model();
    SimulationConfig config;
    config.n_vendors = 400;
    config.horizon_weeks = 60;
    config.seed = 11;
    const Panel panel = simulate_panel(m.solution, m.params, m.space, m.kernel, m.cost, config);
    panel.validate(&m.space);
    CHECK(panel.n_vendors() == 400);

    const auto spans = panel.vendor_spans();
    for (std::size_t v = 0; v < spans.size(); ++v) {
        const auto [b, e] = spans[v];
        CHECK(panel.observations[b].state_index == m.space.entry_state());
        CHECK(panel.observations[b].week == panel.meta[v].entry_week);
        if (panel.meta[v].censored) CHECK(panel.observations[e - 1].week == config.horizon_weeks);
    }
}

TEST_CASE("degenerate simulation limits") {
    const auto& m = table3_estimation_model();
    SimulationConfig config;
    config.n_vendors = 50;
    config.horizon_weeks = 12;
    config.seed = 3;

    SUBCASE("alpha = 1 makes every vendor high type") {
        ModelParams p = m.params;
        p.alpha = 1.0;
        const Panel panel = simulate_panel(m.solution, p, m.space, m.kernel, m.cost, config);
        for (const auto& meta : panel.meta) CHECK(meta.true_type == QualityType::high);
    }

    SUBCASE("sigma_p = 0 reproduces beliefs as prices") {
        ModelParams p = m.params;
        p.sigma_p = 0.0;
        const Panel panel = simulate_panel(m.solution, p, m.space, m.kernel, m.cost, config);
        for (const auto& o : panel.observations) {
            if (o.exited_this_week) continue;
            CHECK(o.price_obs ==
                  doctest::Approx(m.solution.beliefs.theta_hat(o.state_index)).epsilon(1e-15));
        }
    }
}

TEST_CASE("seeded runs are bit-identical across thread counts") {
    const auto& m = table3_estimation_model();
    SimulationConfig config;
    config.n_vendors = 300;
    config.horizon_weeks = 40;
    config.seed = 99;

    set_max_threads(1);
    const Panel a = simulate_panel(m.solution, m.params, m.space, m.kernel, m.cost, config);
    set_max_threads(4);
    const Panel b = simulate_panel(m.solution, m.params, m.space, m.kernel, m.cost, config);
    set_max_threads(0);
    REQUIRE(a.n_obs() == b.n_obs());
    for (std::size_t i = 0; i < a.n_obs(); ++i) {
        const auto& x = a.observations[i];
        const auto& y = b.observations[i];
        CHECK(x.vendor_id == y.vendor_id);
        CHECK(x.week == y.week);
        CHECK(x.state_index == y.state_index);
        const bool price_same =
            (std::isnan(x.price_obs) && std::isnan(y.price_obs)) || x.price_obs == y.price_obs;
        CHECK(price_same);
        CHECK(x.exited_this_week == y.exited_this_week);
    }
}

TEST_CASE("simulation frequencies track the model") {
    const auto& m = table3_estimation_model();
    SimulationConfig config;
    config.n_vendors = 2000;
    config.horizon_weeks = 85;
    config.seed = 7;
    const Panel panel = simulate_panel(m.solution, m.params, m.space, m.kernel, m.cost, config);

    // One-week survival frequency per (type, state) within 3 binomial
    // standard errors of F(cbar) on well-visited states.
    const int n = m.space.n_states();
    std::vector<std::array<long, 2>> visits(2 * n, {0, 0}); // {rows, stays}
    const auto spans = panel.vendor_spans();
    for (std::size_t v = 0; v < spans.size(); ++v) {
        const int ti = type_index(panel.meta[v].true_type);
        const auto [b, e] = spans[v];
        for (std::size_t i = b; i < e; ++i) {
            auto& cell = visits[ti * n + panel.observations[i].state_index];
            ++cell[0];
            if (!panel.observations[i].exited_this_week) ++cell[1];
        }
    }
    int checked = 0;
    for (int t = 0; t < 2; ++t)
        for (int s = 0; s < n; ++s) {
            const auto& cell = visits[t * n + s];
            if (cell[0] < 200) continue;
            const double p = m.solution.survival[t](s);
            const double freq = static_cast<double>(cell[1]) / cell[0];
            const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / cell[0]);
            CHECK(std::abs(freq - p) <= 3.0 * se + 1e-9);
            ++checked;
        }
    CHECK(checked > 5);

    // Transition frequencies within 4 standard errors on cells with >= 200
    // transitions out of a (type, state).
    std::map<std::pair<int, int>, std::map<int, long>> trans;
    for (std::size_t v = 0; v < spans.size(); ++v) {
        const int ti = type_index(panel.meta[v].true_type);
        const auto [b, e] = spans[v];
        for (std::size_t i = b; i + 1 < e; ++i)
            ++trans[{ti, panel.observations[i].state_index}]
                   [panel.observations[i + 1].state_index];
    }
    for (const auto& [key, dests] : trans) {
        long total = 0;
        for (const auto& [dest, cnt] : dests) total += cnt;
        if (total < 200) continue;
        const Mat& pi = m.kernel.pi[key.first];
        for (const auto& [dest, cnt] : dests) {
            const double p = pi(key.second, dest);
            const double freq = static_cast<double>(cnt) / total;
            const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / total);
            CHECK(std::abs(freq - p) <= 4.0 * se + 1e-9);
        }
    }

    // Log-price residuals: mean within 4 sigma_p / sqrt(N), sd within 5%.
    double sum = 0.0, sum2 = 0.0;
    long cnt = 0;
    for (const auto& o : panel.observations) {
        if (o.exited_this_week) continue;
        const double r =
            std::log(o.price_obs) - std::log(m.solution.beliefs.theta_hat(o.state_index));
        sum += r;
        sum2 += r * r;
        ++cnt;
    }
    REQUIRE(cnt >= 10000);
    const double mean = sum / cnt;
    const double sd = std::sqrt(sum2 / cnt - mean * mean);
    CHECK(std::abs(mean) <= 4.0 * m.params.sigma_p / std::sqrt(static_cast<double>(cnt)));
    CHECK(sd == doctest::Approx(m.params.sigma_p).epsilon(0.05));
}

TEST_CASE("empirical moments") {
    SUBCASE("all-survivors panel") {
        Panel panel;
        for (int v = 0; v < 3; ++v) {
            for (int w = 1; w <= 4; ++w)
                panel.observations.push_back({v, w, w, 0, 5.0, 0, 0.4, false});
            panel.meta.push_back({v, 1, true, QualityType::low});
        }
        const MomentReport report = empirical_moments(panel);
        CHECK(report.active_share_at_closure == 1.0);
        CHECK(report.stay_young_high == 1.0);
        CHECK(report.stay_young_low == 1.0);
        CHECK(report.exit_age_histogram.empty());
    }

    SUBCASE("single vendor exiting at age 3") {
        Panel panel;
        panel.observations.push_back({0, 1, 1, 0, 5.0, 0, 0.4, false});
        panel.observations.push_back({0, 2, 2, 0, 5.0, 0, 0.4, false});
        panel.observations.push_back(
            {0, 3, 3, 0, 5.0, 0, std::numeric_limits<double>::quiet_NaN(), true});
        panel.meta.push_back({0, 1, false, QualityType::low});
        const MomentReport report = empirical_moments(panel);
        CHECK(report.exit_age_histogram.size() == 1);
        CHECK(report.exit_age_histogram.at(3) == 1);
        CHECK(report.active_share_at_closure == 0.0);
    }

    SUBCASE("Table-3 panel: ratings disperse after entry") {
        // Entrants start at the ceiling; the low types' ratings then spread
        // downward as sales accumulate. At the Table-3 estimates nobody
        // exits on path (continuation values dwarf the cost spread), so the
        // recovery leg of the figure's u-shape -- low-rated sellers leaving
        // -- is absent, and the dispersion shows up in the lower tail of
        // the rating distribution.
        ModelParams p = table3_params();
        const StateSpace space = StateSpace::default_space();
        const CostDistribution cost = p.cost_distribution();
        const TransitionKernel kernel = build_model_kernel(p, space);
        const EquilibriumSolution sol = solve_equilibrium(p, space, kernel, cost);
        SimulationConfig config;
        config.n_vendors = 2000;
        config.horizon_weeks = 85;
        config.seed = 5;
        const Panel panel = simulate_panel(sol, p, space, kernel, cost, config);
        const MomentReport report = empirical_moments(panel);
        const auto& p10 = report.rating_p10_by_bucket;
        REQUIRE(p10.size() >= 3);
        CHECK(*std::min_element(p10.begin() + 1, p10.end()) < 5.0);
        CHECK(report.rating_median_by_bucket.front() == 5.0);
    }
}

TEST_CASE("panel csv round trip") {
    const auto& m = table3_estimation_model();
    SimulationConfig config;
    config.n_vendors = 60;
    config.horizon_weeks = 30;
    config.seed = 21;
    const Panel panel = simulate_panel(m.solution, m.params, m.space, m.kernel, m.cost, config);

    const std::string path = "/tmp/repmkt_test_panel.csv";
    write_panel(panel, path);
    const Panel loaded = read_panel(path);
    REQUIRE(loaded.n_obs() == panel.n_obs());
    for (std::size_t i = 0; i < panel.n_obs(); ++i) {
        const auto& a = panel.observations[i];
        const auto& b = loaded.observations[i];
        CHECK(a.vendor_id == b.vendor_id);
        CHECK(a.week == b.week);
        CHECK(a.age == b.age);
        CHECK(a.state_index == b.state_index);
        CHECK(a.rating == doctest::Approx(b.rating).epsilon(1e-9));
        CHECK(a.sales_bucket == b.sales_bucket);
        const bool price_same =
            (std::isnan(a.price_obs) && std::isnan(b.price_obs)) || a.price_obs == b.price_obs;
        CHECK(price_same);
        CHECK(a.exited_this_week == b.exited_this_week);
    }
    for (std::size_t v = 0; v < panel.meta.size(); ++v) {
        CHECK(panel.meta[v].entry_week == loaded.meta[v].entry_week);
        CHECK(panel.meta[v].censored == loaded.meta[v].censored);
        CHECK(panel.meta[v].true_type == loaded.meta[v].true_type);
    }

    SUBCASE("non-contiguous ages are rejected") {
        std::ofstream os("/tmp/repmkt_bad_panel.csv");
        os << "vendor_id,week,age,state_index,rating,sales_bucket,price_obs,exited\n";
        os << "0,1,1,0,5.000000,0,0.4,0\n";
        os << "0,3,3,0,5.000000,0,0.4,0\n"; // age jumps from 1 to 3
        os.close();
        CHECK_THROWS_AS(read_panel("/tmp/repmkt_bad_panel.csv"), ParseError);
    }

    SUBCASE("header-only file loads as an empty panel") {
        std::ofstream os("/tmp/repmkt_empty_panel.csv");
        os << "vendor_id,week,age,state_index,rating,sales_bucket,price_obs,exited\n";
        os.close();
        const Panel empty = read_panel("/tmp/repmkt_empty_panel.csv");
        CHECK(empty.n_obs() == 0);
        CHECK(empty.n_vendors() == 0);
    }
}
