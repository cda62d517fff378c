#include "doctest.h"
#include "test_oracles.hpp"

#include "repmkt/equilibrium.hpp"
#include "repmkt/math_util.hpp"
#include "repmkt/rng.hpp"

#include <cmath>
#include <limits>

using namespace repmkt;

namespace {

StateSpace single_state_space() {
    RatingGrid g;
    g.points = {5.0};
    g.r_min = 3.0;
    g.r_max = 5.0;
    return StateSpace(g, SalesGrid::from_edges({}));
}

/// Symmetric two-type model on one state with beliefs pinned at 0.5.
ModelParams half_belief_params(double beta, PayoffVariant variant) {
    ModelParams p;
    p.theta_low = 0.4;
    p.theta_high = 0.6;
    p.alpha = 0.5;
    p.beta = beta;
    p.payoff_variant = variant;
    p.cost_family = CostDistribution::Family::uniform01;
    return p;
}

TransitionKernel unit_kernel() {
    TransitionKernel k;
    k.pi[0] = Mat::Ones(1, 1);
    k.pi[1] = Mat::Ones(1, 1);
    return k;
}

} // namespace

TEST_CASE("flow revenue formula") {
    ModelParams p = table3_params();
    Beliefs b{Vec::Constant(1, 0.5)};
    CHECK(flow_revenue(b, p, 0) == doctest::Approx(0.5).epsilon(1e-15));
    p.demand_gamma0 = 0.2;
    p.demand_gamma1 = 2.0;
    CHECK(flow_revenue(b, p, 0) == doctest::Approx(0.6).epsilon(1e-15));
    b.theta_hat(0) = 0.0;
    CHECK(flow_revenue(b, p, 0) == 0.0);
}

TEST_CASE("expected continuation values") {
    const CostDistribution u = CostDistribution::uniform01();
    Vec c(1);
    c << 0.8;
    CHECK(expected_continuation(c, u, PayoffVariant::main_text)(0) ==
          doctest::Approx(0.4).epsilon(1e-15));
    CHECK(expected_continuation(c, u, PayoffVariant::survival_weighted)(0) ==
          doctest::Approx(0.32).epsilon(1e-15));

    const CostDistribution nrm = CostDistribution::normal(0.386, 1.0);
    c << 0.386;
    CHECK(expected_continuation(c, nrm, PayoffVariant::main_text)(0) ==
          doctest::Approx(2.0 * normal_pdf(0.0)).epsilon(1e-12)); // ~0.7979
}

TEST_CASE("bellman fixed points in the uniform special case") {
    const StateSpace space = single_state_space();
    const TransitionKernel kernel = unit_kernel();
    const CostDistribution cost = CostDistribution::uniform01();

    SUBCASE("main_text: cbar = 10/11") {
        const ModelParams p = half_belief_params(0.9, PayoffVariant::main_text);
        Beliefs b{Vec::Constant(1, 0.5)};
        CutoffProfile c;
        c.cutoffs[0] = Vec::Constant(1, 0.5);
        c.cutoffs[1] = Vec::Constant(1, 0.5);
        for (int it = 0; it < 400; ++it) c = bellman_cutoff_update(b, c, kernel, cost, p);
        CHECK(c.cutoffs[0](0) == doctest::Approx(10.0 / 11.0).epsilon(1e-12));
        const auto sol = solve_equilibrium(p, space, kernel, cost);
        CHECK(sol.cutoffs.cutoffs[0](0) == doctest::Approx(10.0 / 11.0).epsilon(1e-10));
        CHECK(sol.cutoffs.cutoffs[1](0) == doctest::Approx(10.0 / 11.0).epsilon(1e-10));
    }

    SUBCASE("survival_weighted: the quadratic root") {
        const ModelParams p = half_belief_params(0.9, PayoffVariant::survival_weighted);
        const auto sol = solve_equilibrium(p, space, kernel, cost);
        const double root = (1.0 - std::sqrt(0.1)) / 0.9;
        CHECK(sol.cutoffs.cutoffs[0](0) == doctest::Approx(root).epsilon(1e-10));
    }

    SUBCASE("beta = 0 is the myopic limit") {
        const ModelParams p = half_belief_params(0.0, PayoffVariant::main_text);
        Beliefs b{Vec::Constant(1, 0.5)};
        CutoffProfile c;
        c.cutoffs[0] = Vec::Constant(1, 3.0);
        c.cutoffs[1] = Vec::Constant(1, 3.0);
        const CutoffProfile next = bellman_cutoff_update(b, c, kernel, cost, p);
        CHECK(next.cutoffs[0](0) == 0.5);
    }
}

TEST_CASE("stationary mass update") {
    const TransitionKernel kernel = unit_kernel();
    const CostDistribution cost = CostDistribution::uniform01();
    PerType<Vec> eta;
    eta[0] = Vec::Constant(1, 1.0);
    eta[1] = Vec::Constant(1, 1.0);

    SUBCASE("zero survival returns the entry measure") {
        CutoffProfile c;
        c.cutoffs[0] = Vec::Constant(1, -1.0); // below the cost support
        c.cutoffs[1] = Vec::Constant(1, -1.0);
        PerType<Vec> m0;
        m0[0] = Vec::Constant(1, 7.0);
        m0[1] = Vec::Constant(1, 7.0);
        const auto next =
            stationary_mass_update(MassDistribution::from_values(m0), c, kernel, cost, eta);
        CHECK(next.mass[0](0) == 1.0);
    }

    SUBCASE("geometric accumulation with survival one half") {
        CutoffProfile c;
        c.cutoffs[0] = Vec::Constant(1, 0.5);
        c.cutoffs[1] = Vec::Constant(1, 0.5);
        PerType<Vec> m0;
        m0[0] = Vec::Zero(1);
        m0[1] = Vec::Zero(1);
        MassDistribution m = MassDistribution::from_values(m0);
        for (int it = 0; it < 200; ++it) m = stationary_mass_update(m, c, kernel, cost, eta);
        CHECK(m.mass[0](0) == doctest::Approx(2.0).epsilon(1e-12));

        Vec mass, log_mass;
        solve_stationary_masses(kernel.pi[0], Vec::Constant(1, 0.5), Vec::Constant(1, 0.5), eta[0],
                                mass, log_mass);
        CHECK(mass(0) == doctest::Approx(2.0).epsilon(1e-14));
    }

    SUBCASE("no exit anywhere diverges and is reported") {
        Mat doubly(2, 2);
        doubly << 0.5, 0.5, 0.5, 0.5;
        Vec mass, log_mass;
        CHECK_THROWS_AS(solve_stationary_masses(doubly, Vec::Ones(2), Vec::Zero(2),
                                                Vec::Constant(2, 0.5), mass, log_mass),
                        NonContractionError);
    }
}

TEST_CASE("beliefs from masses") {
    ModelParams p = table3_params();
    SUBCASE("equal masses give the midpoint") {
        PerType<Vec> m;
        m[0] = Vec::Constant(1, 3.0);
        m[1] = Vec::Constant(1, 3.0);
        const Beliefs b = beliefs_from_masses(MassDistribution::from_values(m), p);
        CHECK(b.theta_hat(0) == doctest::Approx(0.5 * (0.300 + 0.525)).epsilon(1e-15));
    }
    SUBCASE("Table-3 share 0.233") {
        PerType<Vec> m;
        m[0] = Vec::Constant(1, 0.767);
        m[1] = Vec::Constant(1, 0.233);
        const Beliefs b = beliefs_from_masses(MassDistribution::from_values(m), p);
        CHECK(b.theta_hat(0) == doctest::Approx(0.352425).epsilon(1e-9));
    }
    SUBCASE("degenerate posterior at zero low mass") {
        PerType<Vec> m;
        m[0] = Vec::Zero(1);
        m[1] = Vec::Constant(1, 0.5);
        const Beliefs b = beliefs_from_masses(MassDistribution::from_values(m), p);
        CHECK(b.theta_hat(0) == doctest::Approx(0.525).epsilon(1e-15));
    }
    SUBCASE("zero total mass raises the state index") {
        PerType<Vec> m;
        m[0] = Vec::Zero(2);
        m[1] = Vec::Zero(2);
        m[0](0) = 1.0;
        m[1](0) = 1.0;
        try {
            beliefs_from_masses(MassDistribution::from_values(m), p);
            FAIL("expected UndefinedBeliefError");
        } catch (const UndefinedBeliefError& e) {
            CHECK(e.state_index == 1);
        }
    }
}

TEST_CASE("solver on the Table-3 model: convergence, surfaces, properties") {
    const ModelParams p = table3_params();
    const StateSpace space = StateSpace::default_space();
    const CostDistribution cost = p.cost_distribution();
    const TransitionKernel kernel = build_model_kernel(p, space);
    const auto sol = solve_equilibrium(p, space, kernel, cost);
    CHECK(sol.converged);
    CHECK(sol.residual_cutoff <= 1e-10);
    CHECK(sol.residual_mass <= 1e-10);
    CHECK(sol.residual_belief <= 1e-10);

    // Belief bounds hold everywhere.
    CHECK(sol.beliefs.theta_hat.minCoeff() >= p.theta_low - 1e-12);
    CHECK(sol.beliefs.theta_hat.maxCoeff() <= p.theta_high + 1e-12);

    // Low-type survival never exceeds high-type survival state by state.
    for (int i = 0; i < space.n_states(); ++i)
        CHECK(sol.survival[0](i) <= sol.survival[1](i) + 1e-9);

    // Price gradient in rating grows with the sales bucket: the top-bucket
    // spread between the top rating and a mid rating exceeds the first
    // bucket's spread.
    const int top_r = space.n_ratings() - 1;
    const int mid_r = space.rating_grid.snap(4.9);
    const auto spread = [&](int bucket) {
        return sol.beliefs.theta_hat(space.index(top_r, bucket)) -
               sol.beliefs.theta_hat(space.index(mid_r, bucket));
    };
    CHECK(spread(space.n_buckets() - 1) > spread(0));

    // One extra application of each update changes nothing beyond tol.
    const CutoffProfile cs = bellman_cutoff_update(sol.beliefs, sol.cutoffs, kernel, cost, p);
    for (QualityType t : kTypes)
        CHECK((cs.of(t) - sol.cutoffs.of(t)).cwiseAbs().maxCoeff() <= 1e-10);
    // Re-derive posterior means from the masses on states that carry mass
    // (drift targets above the ceiling leave the low rating cells
    // unreachable, so the full-vector op would raise there).
    CHECK(!sol.zero_mass_states.empty());
    for (int i = 0; i < space.n_states(); ++i) {
        const double llo = sol.masses.log_mass[0](i);
        const double lhi = sol.masses.log_mass[1](i);
        if (llo == -std::numeric_limits<double>::infinity() &&
            lhi == -std::numeric_limits<double>::infinity())
            continue;
        const double d = lhi - llo;
        const double share = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d))
                                      : std::exp(d) / (1.0 + std::exp(d));
        const double raw = p.theta_low + (p.theta_high - p.theta_low) * share;
        CHECK(std::abs(raw - sol.beliefs.theta_hat(i)) <= 1e-10);
    }
}

TEST_CASE("no-rating grid collapses the type distinction") {
    ModelParams p = table3_params();
    RatingGrid g;
    g.points = {5.0};
    g.r_min = 3.0;
    g.r_max = 5.0;
    const StateSpace space(g, SalesGrid::default_grid());
    const CostDistribution cost = p.cost_distribution();
    const TransitionKernel kernel = build_model_kernel(p, space);
    const auto sol = solve_equilibrium(p, space, kernel, cost);
    CHECK((sol.cutoffs.cutoffs[0] - sol.cutoffs.cutoffs[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("monotone comparative static: higher beliefs raise one-sweep cutoffs") {
    const ModelParams p = table3_params();
    const StateSpace space = StateSpace::estimation_space();
    const CostDistribution cost = p.cost_distribution();
    const TransitionKernel kernel = build_model_kernel(p, space);
    Beliefs lo{Vec::Constant(space.n_states(), 0.35)};
    Beliefs hi{Vec::Constant(space.n_states(), 0.40)};
    CutoffProfile c;
    c.cutoffs[0] = Vec::Constant(space.n_states(), 1.0);
    c.cutoffs[1] = Vec::Constant(space.n_states(), 1.0);
    const CutoffProfile from_lo = bellman_cutoff_update(lo, c, kernel, cost, p);
    const CutoffProfile from_hi = bellman_cutoff_update(hi, c, kernel, cost, p);
    for (QualityType t : kTypes)
        CHECK(((from_hi.of(t) - from_lo.of(t)).array() >= -1e-12).all());
}

TEST_CASE("scaling lemma: entry mass scales masses, not cutoffs or beliefs") {
    ModelParams p = table3_params();
    const StateSpace space = StateSpace::estimation_space();
    const CostDistribution cost = p.cost_distribution();
    const TransitionKernel kernel = build_model_kernel(p, space);
    const auto base = solve_equilibrium(p, space, kernel, cost);
    p.entry_mass *= 100.0;
    const auto scaled = solve_equilibrium(p, space, kernel, cost);
    for (QualityType t : kTypes) {
        CHECK((scaled.cutoffs.of(t) - base.cutoffs.of(t)).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK((scaled.beliefs.theta_hat - base.beliefs.theta_hat).cwiseAbs().maxCoeff() < 1e-8);
    for (int t = 0; t < kNumTypes; ++t)
        for (int i = 0; i < space.n_states(); ++i) {
            const double a = base.masses.mass[t](i);
            const double b = scaled.masses.mass[t](i);
            if (std::isfinite(a) && std::isfinite(b) && a > 1e-280)
                CHECK(b / a == doctest::Approx(100.0).epsilon(1e-6));
        }
}

TEST_CASE("brute force equivalence on a small state space") {
    // Two ratings x one bucket, normal costs, moderate beta: root-find the
    // stacked conditions g(c, mu) = 0 directly and compare with the solver.
    ModelParams p = table3_params();
    p.beta = 0.9;
    p.xi = 0.3;
    p.rho_low = 3.5;
    p.rho_high = 4.5;
    p.sigma_r = 0.6;
    RatingGrid g;
    g.points = {3.5, 4.5};
    g.r_min = 3.0;
    g.r_max = 5.0;
    const StateSpace space(g, SalesGrid::from_edges({}));
    const CostDistribution cost = p.cost_distribution();
    const TransitionKernel kernel = build_model_kernel(p, space);
    const auto sol = solve_equilibrium(p, space, kernel, cost);

    const int n = space.n_states();
    const PerType<Vec> eta = entry_measure(p, space);
    auto residual = [&](const Vec& x, Vec& r) {
        r.resize(4 * n);
        PerType<Vec> cut, mu;
        cut[0] = x.segment(0, n);
        cut[1] = x.segment(n, n);
        mu[0] = x.segment(2 * n, n);
        mu[1] = x.segment(3 * n, n);
        Vec theta(n);
        for (int i = 0; i < n; ++i) {
            const double tot = mu[0](i) + mu[1](i);
            theta(i) = p.theta_low + (p.theta_high - p.theta_low) * mu[1](i) / tot;
        }
        for (int t = 0; t < 2; ++t) {
            const Mat& pi = kernel.pi[t];
            const Vec v = expected_continuation(cut[t], cost, p.payoff_variant);
            for (int i = 0; i < n; ++i) {
                r(t * n + i) = theta(i) + p.beta * pi.row(i).dot(v) - cut[t](i);
                double inflow = eta[t](i);
                for (int j = 0; j < n; ++j) inflow += pi(j, i) * cost.cdf(cut[t](j)) * mu[t](j);
                r(2 * n + t * n + i) = inflow - mu[t](i);
            }
        }
    };
    // Newton with finite differences from a neutral start.
    Vec x(4 * n);
    x.segment(0, 2 * n).setConstant(1.0);
    x.segment(2 * n, 2 * n).setConstant(1.0);
    Vec r;
    residual(x, r);
    for (int it = 0; it < 80 && r.cwiseAbs().maxCoeff() > 1e-12; ++it) {
        Mat jac(4 * n, 4 * n);
        const double h = 1e-6;
        for (int k = 0; k < 4 * n; ++k) {
            Vec xp = x, xm = x, rp, rm;
            xp(k) += h;
            xm(k) -= h;
            residual(xp, rp);
            residual(xm, rm);
            jac.col(k) = (rp - rm) / (2.0 * h);
        }
        x -= Eigen::PartialPivLU<Mat>(jac).solve(r);
        residual(x, r);
    }
    REQUIRE(r.cwiseAbs().maxCoeff() < 1e-10);
    for (int i = 0; i < n; ++i) {
        CHECK(x(i) == doctest::Approx(sol.cutoffs.cutoffs[0](i)).epsilon(1e-8));
        CHECK(x(n + i) == doctest::Approx(sol.cutoffs.cutoffs[1](i)).epsilon(1e-8));
        CHECK(x(2 * n + i) == doctest::Approx(sol.masses.mass[0](i)).epsilon(1e-8));
        CHECK(x(3 * n + i) == doctest::Approx(sol.masses.mass[1](i)).epsilon(1e-8));
    }
}
