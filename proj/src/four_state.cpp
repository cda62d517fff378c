#include "repmkt/four_state.hpp"

#include "repmkt/math_util.hpp"

#include <cmath>

namespace repmkt {

namespace {

constexpr int kL1 = 0, kL2 = 1, kH1 = 2, kH2 = 3;

double uniform_cdf(double c) { return c <= 0.0 ? 0.0 : (c >= 1.0 ? 1.0 : c); }

// main_text continuation under uniform costs: the interior closed form
// cbar/2 holds globally (the eight-equation system is linear in cbar given
// beliefs).
double value_main(double c) { return 0.5 * c; }

void check_inputs(double gamma, double rho) {
    if (!(gamma >= 0.5 && gamma < 1.0))
        throw InvalidParameterError("four-state model requires gamma in [1/2, 1)");
    if (!(rho > 0.0 && rho < 1.0))
        throw InvalidParameterError("four-state model requires rho in (0, 1)");
    if (gamma / 2.0 + rho > 1.0)
        throw InvalidParameterError("four-state model requires gamma/2 + rho <= 1");
}

} // namespace

StateSpace four_state_space() {
    RatingGrid r;
    r.points = {0.0, 1.0};
    r.r_min = 0.0;
    r.r_max = 1.0;
    return StateSpace(r, SalesGrid::from_edges({1.0}));
}

TransitionKernel build_four_state_kernel(double gamma, double rho) {
    check_inputs(gamma, rho);
    TransitionKernel kernel;
    for (QualityType t : kTypes) {
        // gamma_0 = gamma (low), gamma_1 = 1 - gamma (high)
        const double gamma_own = (t == QualityType::low) ? gamma : 1.0 - gamma;
        const double gamma_other = (t == QualityType::low) ? 1.0 - gamma : gamma;
        const double up = 1.0 - gamma_own;   // L -> H switch numerator
        const double down = 1.0 - gamma_other; // H -> L switch numerator
        Mat p = Mat::Zero(4, 4);
        p(kL1, kH1) = up / 2.0;
        p(kL1, kL2) = rho;
        p(kL1, kL1) = 1.0 - up / 2.0 - rho;
        p(kH1, kL1) = down / 2.0;
        p(kH1, kH2) = rho;
        p(kH1, kH1) = 1.0 - down / 2.0 - rho;
        p(kL2, kH2) = up / 4.0;
        p(kL2, kL2) = 1.0 - up / 4.0;
        p(kH2, kL2) = down / 4.0;
        p(kH2, kH2) = 1.0 - down / 4.0;
        kernel.of(t) = std::move(p);
    }
    return kernel;
}

ModelParams four_state_params(double gamma, double rho, double beta,
                              const PerType<double>& entry) {
    (void)gamma;
    const double total = entry[0] + entry[1];
    if (!(entry[0] > 0.0 && entry[1] > 0.0))
        throw InvalidParameterError("four-state model requires positive entry of both types");
    ModelParams p;
    p.theta_low = 0.0;
    p.theta_high = 1.0;
    p.alpha = entry[1] / total;
    p.entry_mass = total;
    p.beta = beta;
    p.gamma_sales = rho;
    p.cost_family = CostDistribution::Family::uniform01;
    p.payoff_variant = PayoffVariant::main_text;
    p.demand_gamma0 = 1.0;
    p.demand_gamma1 = 0.0;
    return p;
}

EquilibriumSolution solve_four_state_closed_form(double gamma, double rho, double beta,
                                                 const PerType<double>& entry) {
    check_inputs(gamma, rho);
    if (!(beta >= 0.0 && beta < 1.0))
        throw InvalidParameterError("four-state model requires beta in [0,1)");
    const TransitionKernel kernel = build_four_state_kernel(gamma, rho);
    const ModelParams params = four_state_params(gamma, rho, beta, entry);
    const CostDistribution cost = CostDistribution::uniform01();
    const StateSpace space = four_state_space();

    PerType<Vec> eta;
    for (int t = 0; t < kNumTypes; ++t) {
        eta[t] = Vec::Zero(4);
        eta[t](kH1) = entry[t];
    }

    // Masses given cutoffs: per-type 4x4 linear stationarity systems.
    // eps > 0 smooths the survival clamp (homotopy steps toward the exact
    // kinked system).
    auto masses_for = [&](const PerType<Vec>& cut, PerType<Vec>& mu, double eps) {
        for (int t = 0; t < kNumTypes; ++t) {
            const Mat& pi = kernel.pi[t];
            Mat a = Mat::Identity(4, 4);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    const double s = eps > 0.0 ? smoothed_clamp01(cut[t](j), eps)
                                               : uniform_cdf(cut[t](j));
                    a(i, j) -= pi(j, i) * s;
                }
            Eigen::PartialPivLU<Mat> lu(a);
            mu[t] = lu.solve(eta[t]);
            for (int i = 0; i < 4; ++i)
                if (!(mu[t](i) > 0.0) || !std::isfinite(mu[t](i)))
                    throw InfeasibleError("four-state stationarity system has no positive solution");
        }
    };

    const double tol = 5e-13;
    const double h = 1e-7;
    int iter = 0;

    // Damped Newton with a Picard fallback; `b` is the continuation-path
    // discount factor.
    auto residual_at = [&](const Vec& xx, Vec& g, double b, double eps) {
        PerType<Vec> cut;
        cut[0] = xx.head(4);
        cut[1] = xx.tail(4);
        PerType<Vec> mu;
        masses_for(cut, mu, eps);
        Vec theta_hat(4);
        for (int i = 0; i < 4; ++i) theta_hat(i) = mu[1](i) / (mu[0](i) + mu[1](i));
        g.resize(8);
        for (int t = 0; t < kNumTypes; ++t) {
            const Mat& pi = kernel.pi[t];
            for (int i = 0; i < 4; ++i) {
                double cont = 0.0;
                for (int j = 0; j < 4; ++j) cont += pi(i, j) * value_main(cut[t](j));
                g(4 * t + i) = cut[t](i) - theta_hat(i) - b * cont;
            }
        }
    };

    auto newton = [&](Vec& xx, double b, double eps) -> bool {
        Vec g(8);
        try {
            residual_at(xx, g, b, eps);
        } catch (const InfeasibleError&) {
            return false;
        }
        double gnorm = g.cwiseAbs().maxCoeff();
        for (int it = 0; it < 300 && gnorm > tol; ++it) {
            ++iter;
            Mat jac(8, 8);
            bool fd_ok = true;
            for (int k = 0; k < 8 && fd_ok; ++k) {
                Vec xp = xx, xm = xx;
                xp(k) += h;
                xm(k) -= h;
                Vec gp(8), gm(8);
                try {
                    residual_at(xp, gp, b, eps);
                    residual_at(xm, gm, b, eps);
                } catch (const InfeasibleError&) {
                    fd_ok = false;
                    break;
                }
                jac.col(k) = (gp - gm) / (2.0 * h);
            }
            bool moved = false;
            if (fd_ok) {
                const Vec step = Eigen::PartialPivLU<Mat>(jac).solve(g);
                double scale = 1.0;
                for (int half = 0; half < 50; ++half) {
                    Vec trial = xx - scale * step;
                    Vec gt(8);
                    try {
                        residual_at(trial, gt, b, eps);
                    } catch (const InfeasibleError&) {
                        scale *= 0.5;
                        continue;
                    }
                    const double tn = gt.cwiseAbs().maxCoeff();
                    if (tn < gnorm * (1.0 - 1e-4) || tn <= tol) {
                        xx = trial;
                        g = gt;
                        gnorm = tn;
                        moved = true;
                        break;
                    }
                    scale *= 0.5;
                }
            }
            if (!moved) {
                // Newton stalled (survival kink): damped Picard sweeps
                // x <- x - d*g walk toward the fixed point through the kink.
                bool improved = false;
                for (int sweep = 0; sweep < 200 && gnorm > tol; ++sweep) {
                    Vec trial = xx - 0.25 * g;
                    Vec gt(8);
                    try {
                        residual_at(trial, gt, b, eps);
                    } catch (const InfeasibleError&) {
                        break;
                    }
                    xx = trial;
                    g = gt;
                    const double tn = gt.cwiseAbs().maxCoeff();
                    if (tn < gnorm) improved = true;
                    gnorm = tn;
                }
                if (!improved && gnorm > tol) return false;
            }
        }
        return gnorm <= tol;
    };

    // Warm-start candidates: iterate beliefs with a small damping factor and
    // floored exits, keeping a trail of recent iterates. The belief map can
    // be steep where a cutoff nears the top of the cost support; the trail
    // straddles such roots, and Newton is polished from each candidate in
    // turn.
    std::vector<Vec> candidates;
    Vec rest_beliefs = Vec::Constant(4, 1.0);
    {
        Vec th = Vec::Constant(4, 1.0); // descend from the upper belief bound
        PerType<Vec> cut;
        cut[0] = Vec::Constant(4, 0.5);
        cut[1] = Vec::Constant(4, 0.5);
        auto cutoffs_for = [&](const Vec& beliefs) {
            for (int t = 0; t < kNumTypes; ++t) {
                // linear system c = beliefs + beta * Pi * c/2
                Mat a = Mat::Identity(4, 4) - 0.5 * beta * kernel.pi[t];
                cut[t] = Eigen::PartialPivLU<Mat>(a).solve(beliefs);
            }
        };
        std::vector<Vec> trail;
        double damp = 0.2, best_rb = 1e300;
        int stall = 0;
        for (int it = 0; it < 2000; ++it) {
            cutoffs_for(th);
            PerType<Vec> mu;
            for (int t = 0; t < kNumTypes; ++t) {
                Vec surv(4), ex(4);
                for (int i = 0; i < 4; ++i) {
                    surv(i) = uniform_cdf(cut[t](i));
                    ex(i) = 1.0 - surv(i);
                }
                Vec m, lm;
                solve_stationary_masses(kernel.pi[t], surv, ex, eta[t], m, lm, 1e-14);
                mu[t] = m;
            }
            Vec raw(4);
            for (int i = 0; i < 4; ++i) raw(i) = mu[1](i) / (mu[0](i) + mu[1](i));
            const double rb = (raw - th).cwiseAbs().maxCoeff();
            if (rb < 0.999 * best_rb) {
                best_rb = rb;
                stall = 0;
            } else if (++stall >= 25) {
                damp = std::max(0.5 * damp, 1e-3);
                stall = 0;
            }
            th += damp * (raw - th);
            if (it % 100 == 0) trail.push_back(th);
            if (rb < 1e-10) break;
        }
        rest_beliefs = th;
        Vec xc(8);
        cutoffs_for(th);
        xc.head(4) = cut[0];
        xc.tail(4) = cut[1];
        candidates.push_back(xc);
        // Near-fold roots sit just above the resting point; seed a few
        // belief-inflated starts so the greatest root is always reachable.
        for (double lift : {0.02, 0.05, 0.1, 0.2}) {
            Vec th_up = th + lift * (Vec::Ones(4) - th);
            cutoffs_for(th_up);
            Vec xl(8);
            xl.head(4) = cut[0];
            xl.tail(4) = cut[1];
            candidates.push_back(xl);
        }
        // Recent trail points and their midpoints with the final iterate.
        for (auto it = trail.rbegin(); it != trail.rend() && candidates.size() < 10; ++it) {
            cutoffs_for(*it);
            Vec xt(8);
            xt.head(4) = cut[0];
            xt.tail(4) = cut[1];
            candidates.push_back(xt);
            candidates.push_back(0.5 * (xt + xc));
        }
    }

    // Cheap divergence check before any Newton work: if the capped damped
    // iteration rests at a point whose exact masses diverge, the model has
    // no stationary equilibrium here.
    {
        PerType<Vec> cut, probe;
        for (int t = 0; t < kNumTypes; ++t) {
            Mat a = Mat::Identity(4, 4) - 0.5 * beta * kernel.pi[t];
            cut[t] = Eigen::PartialPivLU<Mat>(a).solve(rest_beliefs);
        }
        try {
            masses_for(cut, probe, 0.0);
        } catch (const InfeasibleError&) {
            throw NonContractionError(
                "no stationary equilibrium: a class without exit absorbs entrants "
                "(stationary masses diverge)");
        }
    }

    // Collect every root the candidate starts reach and keep the one with
    // the greatest beliefs, matching the general solver's selection rule
    // (descend from the upper bound to the greatest equilibrium).
    std::vector<Vec> roots;
    auto note_root = [&](const Vec& xc) {
        for (const Vec& r : roots)
            if ((r - xc).cwiseAbs().maxCoeff() < 1e-9) return;
        roots.push_back(xc);
    };
    // Direct Newton from every candidate keeps the starts distinct; the
    // smoothing ladder (which funnels all starts to one root) only rescues
    // candidates the direct solve cannot handle.
    for (const Vec& start : candidates) {
        Vec xc = start;
        if (newton(xc, beta, 0.0)) note_root(xc);
    }
    if (roots.empty()) {
        for (const Vec& start : candidates) {
            Vec xc = start;
            bool ok = true;
            for (double eps : {5e-2, 1e-2, 2e-3, 4e-4, 8e-5, 1e-5, 1e-6, 1e-7, 1e-8, 0.0}) {
                if (!newton(xc, beta, eps)) {
                    ok = false;
                    break;
                }
            }
            if (ok) note_root(xc);
        }
    }
    if (roots.empty())
        throw InfeasibleError("four-state reduced system: Newton found no root");
    Vec x = roots.front();
    if (roots.size() > 1) {
        auto belief_sum = [&](const Vec& xc) {
            PerType<Vec> cut{xc.head(4), xc.tail(4)};
            PerType<Vec> mu;
            masses_for(cut, mu, 0.0);
            double s = 0.0;
            for (int i = 0; i < 4; ++i) s += mu[1](i) / (mu[0](i) + mu[1](i));
            return s;
        };
        double best = belief_sum(x);
        for (std::size_t k = 1; k < roots.size(); ++k) {
            const double s = belief_sum(roots[k]);
            if (s > best) {
                best = s;
                x = roots[k];
            }
        }
    }

    Vec g(8);
    residual_at(x, g, beta, 0.0);

    // Assemble the solution and its sweep residuals via the public updates.
    EquilibriumSolution sol;
    sol.tol = tol;
    sol.converged = true;
    sol.iterations = iter;
    sol.cutoffs.cutoffs[0] = x.head(4);
    sol.cutoffs.cutoffs[1] = x.tail(4);
    PerType<Vec> mu;
    masses_for(sol.cutoffs.cutoffs, mu, 0.0);
    sol.masses = MassDistribution::from_values(mu);
    sol.beliefs = beliefs_from_masses(sol.masses, params);
    for (int t = 0; t < kNumTypes; ++t) {
        sol.survival[t].resize(4);
        sol.exit_prob[t].resize(4);
        for (int i = 0; i < 4; ++i) {
            sol.survival[t](i) = cost.cdf(sol.cutoffs.cutoffs[t](i));
            sol.exit_prob[t](i) = cost.exit_prob(sol.cutoffs.cutoffs[t](i));
        }
    }
    const CutoffProfile swept = bellman_cutoff_update(sol.beliefs, sol.cutoffs, kernel, cost, params);
    for (QualityType t : kTypes)
        sol.residual_cutoff =
            std::max(sol.residual_cutoff, (swept.of(t) - sol.cutoffs.of(t)).cwiseAbs().maxCoeff());
    const MassDistribution mswept = stationary_mass_update(sol.masses, sol.cutoffs, kernel, cost, eta);
    for (int t = 0; t < kNumTypes; ++t)
        for (int i = 0; i < 4; ++i)
            sol.residual_mass = std::max(sol.residual_mass,
                                         std::abs(mswept.mass[t](i) - sol.masses.mass[t](i)) /
                                             (1.0 + std::abs(sol.masses.mass[t](i))));
    sol.residual_belief = 0.0;
    (void)space;
    return sol;
}

} // namespace repmkt
