#include "repmkt/equilibrium.hpp"

#include "repmkt/math_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace repmkt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double prior_mean(const ModelParams& p) {
    return p.alpha * p.theta_high + (1.0 - p.alpha) * p.theta_low;
}

} // namespace

MassDistribution MassDistribution::from_values(PerType<Vec> values) {
    MassDistribution m;
    for (int t = 0; t < kNumTypes; ++t) {
        m.log_mass[t] = values[t].unaryExpr([](double x) { return x > 0.0 ? std::log(x) : -kInf; });
        m.mass[t] = std::move(values[t]);
    }
    return m;
}

double flow_revenue(const Beliefs& beliefs, const ModelParams& params, int state) {
    const double th = beliefs.theta_hat(state);
    return th * (params.demand_gamma0 + params.demand_gamma1 * th);
}

Vec flow_revenue_all(const Beliefs& beliefs, const ModelParams& params) {
    const Vec& th = beliefs.theta_hat;
    return th.array() * (params.demand_gamma0 + params.demand_gamma1 * th.array());
}

Vec expected_continuation(const Vec& cutoffs_next, const CostDistribution& cost,
                          PayoffVariant variant) {
    Vec v(cutoffs_next.size());
    const bool linear_uniform = variant == PayoffVariant::main_text &&
                                cost.family() == CostDistribution::Family::uniform01;
    for (Index i = 0; i < cutoffs_next.size(); ++i) {
        const double c = cutoffs_next(i);
        if (variant == PayoffVariant::survival_weighted)
            v(i) = cost.expected_positive_part(c);
        else if (linear_uniform)
            // The uniform special case stays on its interior closed form
            // cbar - cbar/2 for all cutoffs; this is the recursion the
            // four-state system is written in.
            v(i) = 0.5 * c;
        else
            v(i) = c - cost.trunc_mean_below(c);
    }
    return v;
}

Vec continuation_derivative(const Vec& cutoffs, const CostDistribution& cost,
                            PayoffVariant variant) {
    Vec d(cutoffs.size());
    const bool linear_uniform = variant == PayoffVariant::main_text &&
                                cost.family() == CostDistribution::Family::uniform01;
    for (Index i = 0; i < cutoffs.size(); ++i) {
        const double c = cutoffs(i);
        if (variant == PayoffVariant::survival_weighted)
            d(i) = cost.cdf(c) * (1.0 - cost.trunc_mean_deriv(c)) +
                   cost.pdf(c) * (c - cost.trunc_mean_below(c));
        else if (linear_uniform)
            d(i) = 0.5;
        else
            d(i) = 1.0 - cost.trunc_mean_deriv(c);
    }
    return d;
}

CutoffProfile bellman_cutoff_update(const Beliefs& beliefs, const CutoffProfile& cutoffs,
                                    const TransitionKernel& kernel, const CostDistribution& cost,
                                    const ModelParams& params) {
    const Vec flow = flow_revenue_all(beliefs, params);
    CutoffProfile next;
    for (QualityType t : kTypes) {
        const Vec& c = cutoffs.of(t);
        if (c.size() != kernel.size() || flow.size() != kernel.size())
            throw DimensionMismatchError("bellman_cutoff_update: inconsistent dimensions");
        next.of(t) = flow + params.beta * (kernel.of(t) *
                                           expected_continuation(c, cost, params.payoff_variant));
    }
    return next;
}

MassDistribution stationary_mass_update(const MassDistribution& masses,
                                        const CutoffProfile& cutoffs,
                                        const TransitionKernel& kernel,
                                        const CostDistribution& cost,
                                        const PerType<Vec>& entry) {
    PerType<Vec> next;
    for (QualityType t : kTypes) {
        const int ti = type_index(t);
        const Vec& mu = masses.mass[ti];
        if (mu.size() != kernel.size() || entry[ti].size() != kernel.size())
            throw DimensionMismatchError("stationary_mass_update: inconsistent dimensions");
        Vec surv(mu.size());
        for (Index i = 0; i < mu.size(); ++i) surv(i) = cost.cdf(cutoffs.of(t)(i));
        next[ti] = kernel.of(t).transpose() * (surv.cwiseProduct(mu)) + entry[ti];
    }
    return MassDistribution::from_values(std::move(next));
}

Beliefs beliefs_from_masses(const MassDistribution& masses, const ModelParams& params) {
    const Vec& lo = masses.log_mass[type_index(QualityType::low)];
    const Vec& hi = masses.log_mass[type_index(QualityType::high)];
    Beliefs b;
    b.theta_hat.resize(lo.size());
    for (Index i = 0; i < lo.size(); ++i) {
        if (lo(i) == -kInf && hi(i) == -kInf)
            throw UndefinedBeliefError(static_cast<int>(i),
                                       "beliefs undefined: zero total mass in state " +
                                           std::to_string(i));
        // share = mu_high / (mu_low + mu_high), formed in log space so that
        // astronomically scaled masses keep meaningful ratios.
        const double d = hi(i) - lo(i); // may be +-inf
        double share;
        if (std::isnan(d)) // inf - inf: both types unbounded
            throw UndefinedBeliefError(static_cast<int>(i),
                                       "beliefs indeterminate in state " + std::to_string(i));
        if (d >= 0.0)
            share = 1.0 / (1.0 + std::exp(-d));
        else
            share = std::exp(d) / (1.0 + std::exp(d));
        b.theta_hat(i) = params.theta_low + (params.theta_high - params.theta_low) * share;
    }
    return b;
}

PerType<Vec> entry_measure(const ModelParams& params, const StateSpace& space) {
    PerType<Vec> eta;
    eta[type_index(QualityType::low)] = Vec::Zero(space.n_states());
    eta[type_index(QualityType::high)] = Vec::Zero(space.n_states());
    const int w0 = space.entry_state();
    eta[type_index(QualityType::low)](w0) = params.entry_mass * (1.0 - params.alpha);
    eta[type_index(QualityType::high)](w0) = params.entry_mass * params.alpha;
    return eta;
}

// ---------------------------------------------------------------------------
// Stationary mass solve
// ---------------------------------------------------------------------------

void solve_stationary_masses(const Mat& pi, const Vec& survival, const Vec& exit_prob,
                             const Vec& entry, Vec& mass_out, Vec& log_mass_out,
                             double exit_floor) {
    const int n = static_cast<int>(pi.rows());
    const auto components = strongly_connected_components(pi);

    mass_out = Vec::Zero(n);
    log_mass_out = Vec::Constant(n, -kInf);
    Vec rhs = entry; // accumulates inflow from already-solved components

    std::vector<char> in_comp(n, 0);
    for (const auto& comp : components) {
        const int m = static_cast<int>(comp.size());
        for (int j : comp) in_comp[j] = 1;

        // Out-of-component leak per source state, summed directly so that a
        // quasi-absorbing row keeps its tiny but nonzero leak.
        Vec leak(m);
        for (int a = 0; a < m; ++a) {
            const int j = comp[a];
            double out = 0.0;
            for (int i = 0; i < n; ++i)
                if (!in_comp[i]) out += pi(j, i);
            const double e = exit_prob(j) > 0.0 ? exit_prob(j) : exit_floor;
            leak(a) = e + survival(j) * out;
        }

        Vec rhs_c(m);
        for (int a = 0; a < m; ++a) rhs_c(a) = rhs(comp[a]);
        const double rhs_total = rhs_c.sum();

        Vec x = Vec::Zero(m);
        double log_scale = -kInf; // deflated Perron scale, if used
        Vec perron;

        if (rhs_total > 0.0) {
            if (m == 1) {
                if (leak(0) <= 0.0)
                    throw NonContractionError(
                        "stationary masses diverge: absorbing state without exit receives inflow");
                x(0) = rhs_c(0) / leak(0);
            } else {
                // B = (Pi' R) restricted to the component.
                Mat b(m, m);
                for (int a = 0; a < m; ++a)
                    for (int c = 0; c < m; ++c) b(a, c) = pi(comp[c], comp[a]) * survival(comp[c]);

                // Perron pair by power iteration; 1 - lambda recovered from
                // the leak identity, which never cancels.
                Vec v = Vec::Constant(m, 1.0 / m);
                for (int it = 0; it < 2000; ++it) {
                    Vec w = b * v;
                    const double s = w.sum();
                    if (s <= 0.0) break;
                    w /= s;
                    const double diff = (w - v).cwiseAbs().maxCoeff();
                    v = w;
                    if (diff < 1e-15) break;
                }
                const double gap = leak.dot(v); // = 1 - lambda under v
                if (gap <= 0.0)
                    throw NonContractionError(
                        "stationary masses diverge: communicating class without exit receives inflow");

                if (gap > 1e-8) {
                    Eigen::PartialPivLU<Mat> lu(Mat::Identity(m, m) - b);
                    x = lu.solve(rhs_c);
                    for (int a = 0; a < m; ++a)
                        if (x(a) < 0.0) x(a) = 0.0; // clip solver round-off
                } else {
                    // Near-singular block: mu = s*v + correction, with the
                    // scale kept in logs so it survives any parameterization.
                    Vec w = Vec::Constant(m, 1.0 / m); // left Perron
                    for (int it = 0; it < 2000; ++it) {
                        Vec u = b.transpose() * w;
                        const double s = u.sum();
                        if (s <= 0.0) break;
                        u /= s;
                        const double diff = (u - w).cwiseAbs().maxCoeff();
                        w = u;
                        if (diff < 1e-15) break;
                    }
                    const double wv = w.dot(v);
                    const double wr = w.dot(rhs_c);
                    log_scale = std::log(wr) - std::log(gap) - std::log(wv);
                    perron = v;
                    const double t = wr / wv; // = scale * (1 - lambda), always finite
                    Vec rhs_tilde = rhs_c - t * v;
                    Mat bordered = Mat::Zero(m + 1, m + 1);
                    bordered.topLeftCorner(m, m) = Mat::Identity(m, m) - b;
                    bordered.topRightCorner(m, 1) = v;
                    bordered.bottomLeftCorner(1, m) = w.transpose();
                    Vec rhs_b(m + 1);
                    rhs_b.head(m) = rhs_tilde;
                    rhs_b(m) = 0.0;
                    Eigen::PartialPivLU<Mat> lu(bordered);
                    Vec sol = lu.solve(rhs_b);
                    x = sol.head(m);
                }
            }
        }

        // Write plain and log values.
        for (int a = 0; a < m; ++a) {
            const int j = comp[a];
            if (log_scale == -kInf) {
                mass_out(j) = x(a);
                log_mass_out(j) = x(a) > 0.0 ? std::log(x(a)) : -kInf;
            } else {
                const double lv = perron(a) > 0.0 ? std::log(perron(a)) : -kInf;
                const double base = log_scale + lv;
                const double scale = std::exp(log_scale);
                double mu;
                if (std::isfinite(scale))
                    mu = scale * perron(a) + x(a);
                else
                    mu = kInf;
                mass_out(j) = mu;
                if (base == -kInf)
                    log_mass_out(j) = x(a) > 0.0 ? std::log(x(a)) : -kInf;
                else if (std::isfinite(scale) && mu > 0.0 && std::isfinite(mu))
                    log_mass_out(j) = std::log(mu);
                else
                    log_mass_out(j) = base; // correction negligible at this scale
            }
        }

        // Push this component's outflow into downstream right-hand sides.
        for (int a = 0; a < m; ++a) {
            const int j = comp[a];
            const double flow = survival(j) * mass_out(j);
            if (flow <= 0.0 || !std::isfinite(flow)) continue;
            for (int i = 0; i < n; ++i)
                if (!in_comp[i] && pi(j, i) > 0.0) rhs(i) += pi(j, i) * flow;
        }
    }
}

// ---------------------------------------------------------------------------
// Cutoff solve (Newton over the communicating-class condensation)
// ---------------------------------------------------------------------------

namespace {

struct CutoffSolver {
    const Mat& pi;
    const CostDistribution& cost;
    PayoffVariant variant;
    double beta;
    std::vector<std::vector<int>> components; // topological order, sources first

    CutoffSolver(const Mat& pi_, const CostDistribution& cost_, PayoffVariant variant_,
                 double beta_)
        : pi(pi_), cost(cost_), variant(variant_), beta(beta_),
          components(strongly_connected_components(pi_)) {}

    double continuation_value(double c) const {
        Vec v(1);
        v(0) = c;
        return expected_continuation(v, cost, variant)(0);
    }

    double continuation_deriv(double c) const {
        Vec v(1);
        v(0) = c;
        return continuation_derivative(v, cost, variant)(0);
    }

    /// Solves c = flow + beta * Pi * v(c) to residual sup-norm <= tol.
    void solve(const Vec& flow, Vec& c, double tol) const {
        const int n = static_cast<int>(pi.rows());
        Vec value(n);
        for (int i = 0; i < n; ++i) value(i) = continuation_value(c(i));

        // Values depend on successors: walk the condensation from sinks up.
        for (auto it = components.rbegin(); it != components.rend(); ++it) {
            const auto& comp = *it;
            const int m = static_cast<int>(comp.size());
            std::vector<char> in_comp(n, 0);
            for (int j : comp) in_comp[j] = 1;

            // Fixed contribution from already-solved downstream components.
            Vec base(m);
            for (int a = 0; a < m; ++a) {
                const int j = comp[a];
                double acc = flow(j);
                for (int i = 0; i < n; ++i)
                    if (!in_comp[i] && pi(j, i) != 0.0) acc += beta * pi(j, i) * value(i);
                base(a) = acc;
            }

            Mat pi_cc(m, m);
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) pi_cc(a, b) = pi(comp[a], comp[b]);

            Vec xc(m);
            for (int a = 0; a < m; ++a) xc(a) = c(comp[a]);

            auto residual = [&](const Vec& x, Vec& g) {
                Vec vx(m);
                for (int a = 0; a < m; ++a) vx(a) = continuation_value(x(a));
                g = x - base - beta * (pi_cc * vx);
            };

            Vec g(m);
            residual(xc, g);
            double gnorm = g.cwiseAbs().maxCoeff();
            int iter = 0;
            while (gnorm > tol && iter++ < 100) {
                Mat jac = Mat::Identity(m, m);
                for (int b = 0; b < m; ++b) {
                    const double d = continuation_deriv(xc(b));
                    for (int a = 0; a < m; ++a) jac(a, b) -= beta * pi_cc(a, b) * d;
                }
                Vec step = Eigen::PartialPivLU<Mat>(jac).solve(g);
                double scale = 1.0;
                for (int half = 0; half < 30; ++half) {
                    Vec trial = xc - scale * step;
                    Vec gt(m);
                    residual(trial, gt);
                    const double tnorm = gt.cwiseAbs().maxCoeff();
                    if (tnorm < gnorm || tnorm <= tol) {
                        xc = trial;
                        g = gt;
                        gnorm = tnorm;
                        break;
                    }
                    scale *= 0.5;
                    if (half == 29) { // no descent; fall back to a Picard sweep
                        Vec vx(m);
                        for (int a = 0; a < m; ++a) vx(a) = continuation_value(xc(a));
                        xc = base + beta * (pi_cc * vx);
                        residual(xc, g);
                        gnorm = g.cwiseAbs().maxCoeff();
                    }
                }
            }
            if (gnorm > tol)
                throw NonConvergenceError("cutoff Newton failed to reach tolerance");

            for (int a = 0; a < m; ++a) {
                c(comp[a]) = xc(a);
                value(comp[a]) = continuation_value(xc(a));
            }
        }
    }
};

} // namespace

namespace {

EquilibriumSolution solve_equilibrium_impl(const ModelParams& params, const StateSpace& space,
                                           const TransitionKernel& kernel,
                                           const CostDistribution& cost,
                                           const SolveOptions& options,
                                           const EquilibriumSolution* warm_start, double eps) {
    validate_params(params);
    const int n = space.n_states();
    if (kernel.size() != n) throw DimensionMismatchError("kernel does not match state space");

    if (options.require_assumptions) {
        const auto a1 = validate_assumption_a1(kernel);
        if (!a1.holds) throw InvalidParameterError("assumption A1 fails: " + a1.diagnostic);
        const auto a2 = validate_assumption_a2(cost, params, default_a2_probe_grid(params));
        if (!a2.holds) throw InvalidParameterError("assumption A2 fails: " + a2.diagnostic);
    }

    const PerType<Vec> eta = entry_measure(params, space);
    const double theta0 = prior_mean(params);

    EquilibriumSolution sol;
    sol.tol = options.tol;
    if (warm_start && warm_start->beliefs.theta_hat.size() == n) {
        sol.beliefs = warm_start->beliefs;
        sol.cutoffs = warm_start->cutoffs;
    } else {
        // Iterate downward from the upper belief bound. Below the uniqueness
        // threshold the model can carry several equilibria; descending from
        // the top deterministically selects the greatest (high-separation)
        // fixed point, and keeps the selection continuous in the parameters
        // across NFXP evaluations.
        sol.beliefs.theta_hat = Vec::Constant(n, params.theta_high);
        Beliefs b0{sol.beliefs};
        for (QualityType t : kTypes) sol.cutoffs.of(t) = flow_revenue_all(b0, params);
    }

    PerType<CutoffSolver> solvers = {
        CutoffSolver(kernel.of(QualityType::low), cost, params.payoff_variant, params.beta),
        CutoffSolver(kernel.of(QualityType::high), cost, params.payoff_variant, params.beta)};

    const double inner_tol = std::max(options.tol * 1e-3, 1e-14);
    std::ostringstream trace;
    double r_cut = kInf, r_mass = kInf, r_belief = kInf;
    Vec good_beliefs;
    int retries = 0;
    bool capped = false;
    std::vector<Vec> anderson_x, anderson_f;
    double damp_eff = options.damping;
    double best_belief_residual = kInf;
    int stall = 0;
    int capped_at_rest = 0;

    for (int it = 1; it <= options.max_iter; ++it) {
        sol.iterations = it;
        const Vec flow = flow_revenue_all(sol.beliefs, params);

        try {
            for (QualityType t : kTypes)
                solvers[type_index(t)].solve(flow, sol.cutoffs.of(t), inner_tol);

            for (QualityType t : kTypes) {
                const int ti = type_index(t);
                sol.survival[ti].resize(n);
                sol.exit_prob[ti].resize(n);
                for (int i = 0; i < n; ++i) {
                    if (eps > 0.0) {
                        const double s = smoothed_clamp01(sol.cutoffs.of(t)(i), eps);
                        sol.survival[ti](i) = s;
                        sol.exit_prob[ti](i) = 1.0 - s;
                    } else {
                        sol.survival[ti](i) = cost.cdf(sol.cutoffs.of(t)(i));
                        sol.exit_prob[ti](i) = cost.exit_prob(sol.cutoffs.of(t)(i));
                    }
                }
            }

            capped = false;
            for (QualityType t : kTypes) {
                const int ti = type_index(t);
                try {
                    solve_stationary_masses(kernel.of(t), sol.survival[ti], sol.exit_prob[ti],
                                            eta[ti], sol.masses.mass[ti], sol.masses.log_mass[ti]);
                } catch (const NonContractionError&) {
                    // Transient no-exit class (cutoffs past a bounded cost
                    // support): floor the zero exits so the iteration can
                    // move on. A converged solution must pass uncapped.
                    solve_stationary_masses(kernel.of(t), sol.survival[ti], sol.exit_prob[ti],
                                            eta[ti], sol.masses.mass[ti], sol.masses.log_mass[ti],
                                            1e-14);
                    capped = true;
                }
            }
        } catch (const ModelError&) {
            // Other failures: pull the beliefs back toward the last feasible
            // point and retry; only a failure from a feasible history is
            // genuine.
            if (good_beliefs.size() == 0 || ++retries > 400) throw;
            sol.beliefs.theta_hat = 0.5 * (sol.beliefs.theta_hat + good_beliefs);
            anderson_x.clear();
            anderson_f.clear();
            continue;
        }
        retries = 0;
        good_beliefs = sol.beliefs.theta_hat;

        // Appendix mass bound: mu <= |Theta| |Omega| max(eta) / (1 - F(c_max)).
        {
            double min_exit = kInf, max_eta = 0.0, max_mass = 0.0;
            for (int t = 0; t < kNumTypes; ++t) {
                min_exit = std::min(min_exit, sol.exit_prob[t].minCoeff());
                max_eta = std::max(max_eta, eta[t].maxCoeff());
                for (int i = 0; i < n; ++i)
                    if (std::isfinite(sol.masses.mass[t](i)))
                        max_mass = std::max(max_mass, sol.masses.mass[t](i));
            }
            if (min_exit > 0.0) {
                const double bound = 2.0 * n * max_eta / min_exit;
                if (std::isfinite(bound) && max_mass > bound * (1.0 + 1e-6))
                    throw ModelError("stationary masses violate the theoretical upper bound");
            }
        }

        // Posterior means; unreachable states keep the prior mean.
        sol.zero_mass_states.clear();
        Vec raw(n);
        const Vec& llo = sol.masses.log_mass[0];
        const Vec& lhi = sol.masses.log_mass[1];
        for (int i = 0; i < n; ++i) {
            if (llo(i) == -kInf && lhi(i) == -kInf) {
                sol.zero_mass_states.push_back(i);
                raw(i) = theta0;
            } else {
                const double d = lhi(i) - llo(i);
                double share;
                if (d >= 0.0) share = 1.0 / (1.0 + std::exp(-d));
                else share = std::exp(d) / (1.0 + std::exp(d));
                raw(i) = params.theta_low + (params.theta_high - params.theta_low) * share;
            }
        }

        r_belief = (raw - sol.beliefs.theta_hat).cwiseAbs().maxCoeff();
        if (!std::isfinite(r_belief))
            throw NonContractionError("belief iteration produced non-finite values");

        // Sweep residuals of the returned tuple: one extra application of
        // each update must change nothing beyond tol.
        r_cut = 0.0;
        {
            const CutoffProfile swept =
                bellman_cutoff_update(sol.beliefs, sol.cutoffs, kernel, cost, params);
            for (QualityType t : kTypes)
                r_cut = std::max(r_cut,
                                 (swept.of(t) - sol.cutoffs.of(t)).cwiseAbs().maxCoeff());
        }
        r_mass = 0.0;
        {
            const MassDistribution swept =
                stationary_mass_update(sol.masses, sol.cutoffs, kernel, cost, eta);
            for (int t = 0; t < kNumTypes; ++t)
                for (int i = 0; i < n; ++i) {
                    const double m0 = sol.masses.mass[t](i);
                    const double m1 = swept.mass[t](i);
                    if (!std::isfinite(m0) || !std::isfinite(m1)) continue;
                    r_mass = std::max(r_mass, std::abs(m1 - m0) / (1.0 + std::abs(m0)));
                }
        }

        if (it <= 50 || it % 100 == 0)
            trace << it << ": c=" << r_cut << " m=" << r_mass << " b=" << r_belief << "\n";

        // Beliefs and cutoffs settled while the mass step still needs the
        // exit floor: the iteration found the capped pseudo-fixed point of a
        // model whose no-exit class absorbs entrants forever.
        if (capped && r_cut <= options.tol && r_belief <= options.tol) {
            if (++capped_at_rest >= 50)
                throw NonContractionError(
                    "no stationary equilibrium: a class without exit absorbs entrants "
                    "(stationary masses diverge)");
        } else {
            capped_at_rest = 0;
        }

        if (r_cut <= options.tol && r_mass <= options.tol && r_belief <= options.tol) {
            if (capped)
                throw NonContractionError(
                    "stationary masses diverge at the fixed point: a no-exit class receives "
                    "inflow (no stationary equilibrium with finite masses)");
            sol.residual_cutoff = r_cut;
            sol.residual_mass = r_mass;
            sol.residual_belief = r_belief;
            sol.converged = true;
            return sol;
        }

        // Plain damping cycles when the belief map steepens (a cutoff near a
        // bounded cost support); shrink the step whenever the belief
        // residual stalls.
        if (r_belief < 0.999 * best_belief_residual) {
            best_belief_residual = r_belief;
            stall = 0;
        } else if (++stall >= 25) {
            damp_eff = std::max(0.5 * damp_eff, 1e-3);
            stall = 0;
            anderson_x.clear();
            anderson_f.clear();
        }

        // Anderson-accelerated belief update with a damped fallback.
        Vec next = sol.beliefs.theta_hat + damp_eff * (raw - sol.beliefs.theta_hat);
        anderson_x.push_back(sol.beliefs.theta_hat);
        anderson_f.push_back(raw - sol.beliefs.theta_hat);
        if (anderson_x.size() > 5) {
            anderson_x.erase(anderson_x.begin());
            anderson_f.erase(anderson_f.begin());
        }
        const int hist = static_cast<int>(anderson_x.size());
        if (hist >= 2 && it > 3) {
            const int m = hist - 1;
            Mat df(n, m), dx(n, m);
            for (int k = 0; k < m; ++k) {
                df.col(k) = anderson_f[k + 1] - anderson_f[k];
                dx.col(k) = anderson_x[k + 1] - anderson_x[k];
            }
            const Vec gammas = df.colPivHouseholderQr().solve(anderson_f.back());
            Vec cand = sol.beliefs.theta_hat + damp_eff * anderson_f.back() -
                       (dx + damp_eff * df) * gammas;
            bool ok = cand.allFinite();
            for (int i = 0; ok && i < n; ++i)
                if (cand(i) < params.theta_low - 1e-9 || cand(i) > params.theta_high + 1e-9)
                    ok = false;
            if (ok) {
                next = cand.cwiseMax(params.theta_low).cwiseMin(params.theta_high);
            } else {
                anderson_x.clear();
                anderson_f.clear();
            }
        }
        sol.beliefs.theta_hat = next;
    }

    throw NonConvergenceError("equilibrium solver exceeded max_iter; residual trace:\n" +
                              trace.str());
}

} // namespace

namespace {

/// Under a bounded cost support the model can carry several equilibria near
/// the support edge; nudging the converged beliefs upward and re-solving
/// walks the selection up to the greatest reachable fixed point, matching
/// the descend-from-the-top rule when the plain path overshoots a knife-edge
/// root.
EquilibriumSolution lift_to_greatest(EquilibriumSolution best, const ModelParams& params,
                                     const StateSpace& space, const TransitionKernel& kernel,
                                     const CostDistribution& cost, const SolveOptions& options) {
    // Knife-edge roots (a cutoff just below the support edge) are unstable
    // under ordinary damping, so the probes creep.
    SolveOptions creep = options;
    creep.damping = std::min(options.damping, 0.02);
    creep.max_iter = std::max(options.max_iter, 30000);
    for (int round = 0; round < 4; ++round) {
        bool improved = false;
        for (double lift : {0.05, 0.15}) {
            EquilibriumSolution start = best;
            start.beliefs.theta_hat =
                best.beliefs.theta_hat +
                lift * (Vec::Constant(best.beliefs.theta_hat.size(), params.theta_high) -
                        best.beliefs.theta_hat);
            try {
                EquilibriumSolution cand =
                    solve_equilibrium_impl(params, space, kernel, cost, creep, &start, 0.0);
                if (cand.beliefs.theta_hat.sum() > best.beliefs.theta_hat.sum() + 1e-10) {
                    best = std::move(cand);
                    improved = true;
                }
            } catch (const NonConvergenceError&) {
            }
        }
        if (!improved) break;
    }
    return best;
}

} // namespace

EquilibriumSolution solve_equilibrium(const ModelParams& params, const StateSpace& space,
                                      const TransitionKernel& kernel, const CostDistribution& cost,
                                      const SolveOptions& options,
                                      const EquilibriumSolution* warm_start) {
    try {
        EquilibriumSolution sol =
            solve_equilibrium_impl(params, space, kernel, cost, options, warm_start, 0.0);
        if (cost.family() == CostDistribution::Family::uniform01 && !warm_start)
            sol = lift_to_greatest(std::move(sol), params, space, kernel, cost, options);
        return sol;
    } catch (const NonConvergenceError&) {
        // A cycling belief iteration under a bounded cost support gets a
        // second chance down the smoothing path; a diverging one
        // (NonContraction: no stationary equilibrium) propagates.
        if (cost.family() != CostDistribution::Family::uniform01) throw;
    }
    // Bounded cost support: the belief map develops a near-discontinuity
    // where a cutoff reaches the top of the support. Track the fixed point
    // down a survival-smoothing path, then finish exact from next door.
    EquilibriumSolution warm;
    bool have_warm = false;
    SolveOptions stage = options;
    stage.max_iter = std::min(options.max_iter, 2500);
    for (double eps : {5e-2, 1e-2, 2e-3, 4e-4, 8e-5, 1e-5, 1e-6, 1e-7, 1e-8}) {
        warm = solve_equilibrium_impl(params, space, kernel, cost, stage,
                                      have_warm ? &warm : warm_start, eps);
        have_warm = true;
    }
    EquilibriumSolution sol =
        solve_equilibrium_impl(params, space, kernel, cost, options, &warm, 0.0);
    return lift_to_greatest(std::move(sol), params, space, kernel, cost, options);
}

} // namespace repmkt
