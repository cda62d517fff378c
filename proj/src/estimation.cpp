#include "repmkt/estimation.hpp"

#include "repmkt/math_util.hpp"
#include "repmkt/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace repmkt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Transform { identity, log_pos, logit01 };

Transform transform_of(const std::string& name) {
    if (name == "alpha" || name == "gamma_sales" || name == "xi") return Transform::logit01;
    if (name == "theta_low" || name == "theta_high" || name == "sigma_r" || name == "sigma_p")
        return Transform::log_pos;
    if (name == "mu_c" || name == "rho_low" || name == "rho_high") return Transform::identity;
    throw InvalidParameterError("unknown or non-estimable parameter: " + name);
}

double log_price_density(double price, double theta_hat, const ModelParams& params) {
    const double sp = params.sigma_p;
    if (params.price_noise == PriceNoise::multiplicative_lognormal) {
        if (!(price > 0.0) || !(theta_hat > 0.0)) return -kInf;
        const double z = (std::log(price) - std::log(theta_hat)) / sp;
        return log_normal_pdf(z) - std::log(sp) - std::log(price);
    }
    const double w = price - theta_hat;
    if (!(w > 0.0)) return -kInf;
    const double z = std::log(w) / sp;
    return log_normal_pdf(z) - std::log(sp) - std::log(w);
}

} // namespace

const std::vector<std::string>& default_free_parameters() {
    static const std::vector<std::string> names = {"theta_low", "theta_high", "alpha",
                                                   "mu_c",      "gamma_sales", "rho_low",
                                                   "rho_high",  "xi",          "sigma_r",
                                                   "sigma_p"};
    return names;
}

double to_transformed(const std::string& name, double value) {
    switch (transform_of(name)) {
        case Transform::identity: return value;
        case Transform::log_pos:
            if (!(value > 0.0)) throw InvalidParameterError(name + " must be positive");
            return std::log(value);
        case Transform::logit01:
            if (!(value > 0.0 && value < 1.0))
                throw InvalidParameterError(name + " must lie in (0,1)");
            return std::log(value / (1.0 - value));
    }
    return value;
}

double from_transformed(const std::string& name, double t) {
    switch (transform_of(name)) {
        case Transform::identity: return t;
        case Transform::log_pos: return std::exp(t);
        case Transform::logit01: return 1.0 / (1.0 + std::exp(-t));
    }
    return t;
}

double transform_jacobian(const std::string& name, double value) {
    switch (transform_of(name)) {
        case Transform::identity: return 1.0;
        case Transform::log_pos: return value;
        case Transform::logit01: return value * (1.0 - value);
    }
    return 1.0;
}

double get_param(const ModelParams& p, const std::string& name) {
    if (name == "theta_low") return p.theta_low;
    if (name == "theta_high") return p.theta_high;
    if (name == "alpha") return p.alpha;
    if (name == "mu_c") return p.mu_c;
    if (name == "gamma_sales") return p.gamma_sales;
    if (name == "rho_low") return p.rho_low;
    if (name == "rho_high") return p.rho_high;
    if (name == "xi") return p.xi;
    if (name == "sigma_r") return p.sigma_r;
    if (name == "sigma_p") return p.sigma_p;
    throw InvalidParameterError("unknown parameter: " + name);
}

void set_param(ModelParams& p, const std::string& name, double value) {
    if (name == "theta_low") p.theta_low = value;
    else if (name == "theta_high") p.theta_high = value;
    else if (name == "alpha") p.alpha = value;
    else if (name == "mu_c") p.mu_c = value;
    else if (name == "gamma_sales") p.gamma_sales = value;
    else if (name == "rho_low") p.rho_low = value;
    else if (name == "rho_high") p.rho_high = value;
    else if (name == "xi") p.xi = value;
    else if (name == "sigma_r") p.sigma_r = value;
    else if (name == "sigma_p") p.sigma_p = value;
    else throw InvalidParameterError("unknown parameter: " + name);
}

double vendor_loglik_conditional(std::span<const PanelObservation> obs, QualityType type,
                                 const EquilibriumSolution& solution, const ModelParams& params,
                                 const TransitionKernel& kernel, const CostDistribution& cost,
                                 const StateSpace& space, EvalDiagnostics* diag) {
    (void)cost;
    if (obs.empty()) return 0.0;
    const Vec& cutoffs = solution.cutoffs.of(type);
    const int ti = type_index(type);
    const Mat& pi = kernel.of(type);

    const int w0 = space.entry_state();
    double ll = 0.0;
    // Entry factor: eta(omega_1) = 1 at the entry state under the point-mass
    // convention, 0 elsewhere.
    if (obs[0].state_index != w0) return -kInf;

    const std::size_t a_last = obs.size() - 1;
    const bool exited = obs[a_last].exited_this_week;
    for (std::size_t a = 0; a < obs.size(); ++a) {
        const int w = obs[a].state_index;
        if (a > 0) {
            const double p = pi(obs[a - 1].state_index, w);
            if (p <= 0.0) {
                if (diag) {
                    ++diag->zero_prob_transitions;
                    if (diag->first_zero_prob.empty()) {
                        std::ostringstream os;
                        os << "vendor " << obs[a].vendor_id << ": " << obs[a - 1].state_index
                           << " -> " << w;
                        diag->first_zero_prob = os.str();
                    }
                }
                return -kInf;
            }
            ll += std::log(p);
        }
        if (exited && a == a_last) {
            const double e = solution.exit_prob[ti](w);
            if (!(e > 0.0)) return -kInf;
            ll += std::log(e);
        } else {
            const double f = solution.survival[ti](w);
            if (!(f > 0.0)) return -kInf;
            ll += std::log(f);
            ll += log_price_density(obs[a].price_obs, solution.beliefs.theta_hat(w), params);
        }
        (void)cutoffs;
    }
    return ll;
}

double mixture_vendor_loglik(std::span<const PanelObservation> obs,
                             const EquilibriumSolution& solution, const ModelParams& params,
                             const TransitionKernel& kernel, const CostDistribution& cost,
                             const StateSpace& space, EvalDiagnostics* diag) {
    const double lh = vendor_loglik_conditional(obs, QualityType::high, solution, params, kernel,
                                                cost, space, diag);
    const double llow = vendor_loglik_conditional(obs, QualityType::low, solution, params, kernel,
                                                  cost, space, diag);
    return log_sum_exp(std::log(params.alpha) + lh, std::log1p(-params.alpha) + llow);
}

Panel filter_panel_for_estimation(const Panel& panel, const StateSpace& space,
                                  EvalDiagnostics* diag) {
    Panel out;
    const auto spans = panel.vendor_spans();
    for (std::size_t v = 0; v < spans.size(); ++v) {
        const auto [b, e] = spans[v];
        const bool entry_ok = panel.observations[b].state_index == space.entry_state();
        const bool age1_exit = (e - b == 1) && panel.observations[e - 1].exited_this_week;
        if (!entry_ok) {
            if (diag) ++diag->excluded_entry_state;
            continue;
        }
        if (age1_exit) {
            if (diag) ++diag->excluded_age1_exit;
            continue;
        }
        out.meta.push_back(panel.meta[v]);
        out.observations.insert(out.observations.end(), panel.observations.begin() + b,
                                panel.observations.begin() + e);
    }
    return out;
}

double total_loglik(const Panel& panel, const ModelParams& candidate,
                    const EstimationConfig& config, std::optional<EquilibriumSolution>* warm,
                    EvalDiagnostics* diag) {
    if (panel.observations.empty()) return 0.0;
    if (!(candidate.theta_low < candidate.theta_high)) return -kInf; // ordering rejection
    try {
        validate_params(candidate);
    } catch (const InvalidParameterError&) {
        return -kInf;
    }

    const CostDistribution cost = candidate.cost_distribution();
    EquilibriumSolution solution;
    try {
        const TransitionKernel kernel = build_model_kernel(candidate, config.space);
        solution = solve_equilibrium(candidate, config.space, kernel, cost, config.inner_options,
                                     warm && warm->has_value() ? &**warm : nullptr);
        if (warm) *warm = solution;

        const auto spans = panel.vendor_spans();
        std::vector<double> contrib(spans.size());
        parallel_for(spans.size(), [&](std::size_t v) {
            const auto [b, e] = spans[v];
            contrib[v] = mixture_vendor_loglik(
                std::span<const PanelObservation>(panel.observations.data() + b, e - b), solution,
                candidate, kernel, cost, config.space, nullptr);
        });
        // Fixed-order serial reduction over vendor ids for bit reproducibility
        // (and invariance to the panel's row order).
        std::vector<std::size_t> order(spans.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b2) {
            return panel.observations[spans[a].first].vendor_id <
                   panel.observations[spans[b2].first].vendor_id;
        });
        double ll = 0.0;
        for (std::size_t v : order) {
            if (contrib[v] == -kInf) {
                if (diag) ++diag->zero_prob_transitions;
                return -kInf;
            }
            ll += contrib[v];
        }
        return ll;
    } catch (const ModelError&) {
        if (diag) ++diag->inner_failures;
        return -kInf;
    }
}

namespace {

struct Objective {
    const Panel& panel;
    const EstimationConfig& config;
    std::vector<std::string> names;
    std::optional<EquilibriumSolution> warm;
    int evaluations = 0;
    EvalDiagnostics diag;

    ModelParams params_at(const Vec& t) const {
        ModelParams p = config.base;
        for (std::size_t k = 0; k < names.size(); ++k)
            set_param(p, names[k], from_transformed(names[k], t(k)));
        return p;
    }

    double operator()(const Vec& t) {
        ++evaluations;
        return total_loglik(panel, params_at(t), config, &warm, &diag);
    }
};

/// Deterministic Nelder-Mead maximizer (works on -f internally).
struct NelderMead {
    double ftol, xtol;
    int max_evals;

    template <typename F>
    std::pair<Vec, double> run(F& f, const Vec& start, double step, int* evals_used) {
        const int n = static_cast<int>(start.size());
        std::vector<Vec> x(n + 1, start);
        std::vector<double> fx(n + 1);
        for (int i = 1; i <= n; ++i) x[i](i - 1) += step * std::max(1.0, std::abs(start(i - 1)));
        for (int i = 0; i <= n; ++i) fx[i] = -f(x[i]);
        int evals = n + 1;

        auto order = [&] {
            std::vector<int> idx(n + 1);
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
            std::vector<Vec> xs(n + 1);
            std::vector<double> fs(n + 1);
            for (int i = 0; i <= n; ++i) {
                xs[i] = x[idx[i]];
                fs[i] = fx[idx[i]];
            }
            x = std::move(xs);
            fx = std::move(fs);
        };

        order();
        while (evals < max_evals) {
            const double fspread = std::abs(fx[n] - fx[0]);
            double xspread = 0.0;
            for (int i = 1; i <= n; ++i)
                xspread = std::max(xspread, (x[i] - x[0]).cwiseAbs().maxCoeff());
            if (fspread < ftol && xspread < xtol) break;

            Vec centroid = Vec::Zero(n);
            for (int i = 0; i < n; ++i) centroid += x[i];
            centroid /= n;

            const Vec xr = centroid + (centroid - x[n]);
            const double fr = -f(xr);
            ++evals;
            if (fr < fx[0]) {
                const Vec xe = centroid + 2.0 * (centroid - x[n]);
                const double fe = -f(xe);
                ++evals;
                if (fe < fr) {
                    x[n] = xe;
                    fx[n] = fe;
                } else {
                    x[n] = xr;
                    fx[n] = fr;
                }
            } else if (fr < fx[n - 1]) {
                x[n] = xr;
                fx[n] = fr;
            } else {
                const bool outside = fr < fx[n];
                const Vec xc =
                    centroid + (outside ? 0.5 : -0.5) * (centroid - x[n]);
                const double fc = -f(xc);
                ++evals;
                if (fc < (outside ? fr : fx[n])) {
                    x[n] = xc;
                    fx[n] = fc;
                } else {
                    for (int i = 1; i <= n; ++i) {
                        x[i] = x[0] + 0.5 * (x[i] - x[0]);
                        fx[i] = -f(x[i]);
                        ++evals;
                    }
                }
            }
            order();
        }
        if (evals_used) *evals_used = evals;
        return {x[0], -fx[0]};
    }
};

} // namespace

EstimationResult maximize_likelihood(const Panel& panel, const EstimationConfig& config,
                                     const ModelParams& start) {
    for (const auto& name : config.free_parameters)
        if (name == "beta" || name == "sigma_c")
            throw InvalidParameterError(name + " is fixed by normalization and cannot be free");

    EstimationResult result;
    result.free_parameters = config.free_parameters;

    Objective obj{panel, config, config.free_parameters, std::nullopt, 0, {}};
    const Panel filtered = filter_panel_for_estimation(panel, config.space, &obj.diag);
    Objective fobj{filtered, config, config.free_parameters, std::nullopt, 0, obj.diag};

    const int n = static_cast<int>(config.free_parameters.size());
    Vec t0(n);
    for (int k = 0; k < n; ++k)
        t0(k) = to_transformed(config.free_parameters[k], get_param(start, config.free_parameters[k]));

    NelderMead nm{config.ftol, config.xtol, config.max_evaluations};
    int used1 = 0;
    auto [t_best, f_best] = nm.run(fobj, t0, config.initial_step, &used1);
    // One restart from the incumbent with a smaller simplex.
    int used2 = 0;
    if (used1 < config.max_evaluations) {
        NelderMead nm2{config.ftol, config.xtol, config.max_evaluations - used1};
        auto [t2, f2] = nm2.run(fobj, t_best, 0.25 * config.initial_step, &used2);
        if (f2 >= f_best) {
            t_best = t2;
            f_best = f2;
        }
    }

    result.point_estimates = fobj.params_at(t_best);
    result.loglik = f_best;
    result.n_vendors = filtered.n_vendors();
    result.n_obs = static_cast<long>(filtered.n_obs());
    result.evaluation_count = used1 + used2;
    result.converged = result.evaluation_count < config.max_evaluations && std::isfinite(f_best);
    result.inner_failures = fobj.diag.inner_failures;
    result.diagnostics = fobj.diag;
    result.standard_errors =
        opg_standard_errors(filtered, result.point_estimates, config, &result.se_flags);
    return result;
}

std::vector<double> opg_standard_errors(const Panel& panel, const ModelParams& estimates,
                                        const EstimationConfig& config,
                                        std::vector<std::string>* flags) {
    const int n = static_cast<int>(config.free_parameters.size());
    const auto spans = panel.vendor_spans();
    const int nv = static_cast<int>(spans.size());
    if (nv == 0) return std::vector<double>(n, std::numeric_limits<double>::quiet_NaN());

    // Per-vendor log-likelihood vectors at 2n perturbed points.
    auto vendor_lls = [&](const ModelParams& p) {
        const CostDistribution cost = p.cost_distribution();
        const TransitionKernel kernel = build_model_kernel(p, config.space);
        const EquilibriumSolution sol =
            solve_equilibrium(p, config.space, kernel, cost, config.inner_options);
        std::vector<double> ll(nv);
        parallel_for(spans.size(), [&](std::size_t v) {
            const auto [b, e] = spans[v];
            ll[v] = mixture_vendor_loglik(
                std::span<const PanelObservation>(panel.observations.data() + b, e - b), sol, p,
                kernel, cost, config.space, nullptr);
        });
        return ll;
    };

    Mat scores(nv, n);
    for (int k = 0; k < n; ++k) {
        const std::string& name = config.free_parameters[k];
        const double t = to_transformed(name, get_param(estimates, name));
        const double h = 1e-5 * std::max(1.0, std::abs(t));
        ModelParams pp = estimates, pm = estimates;
        set_param(pp, name, from_transformed(name, t + h));
        set_param(pm, name, from_transformed(name, t - h));
        const auto lp = vendor_lls(pp);
        const auto lm = vendor_lls(pm);
        for (int v = 0; v < nv; ++v) scores(v, k) = (lp[v] - lm[v]) / (2.0 * h);
    }

    const Mat opg = scores.transpose() * scores;
    Mat cov;
    bool pseudo = false;
    Eigen::LDLT<Mat> ldlt(opg);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        cov = ldlt.solve(Mat::Identity(n, n));
        if (!cov.allFinite()) pseudo = true;
    } else {
        pseudo = true;
    }
    if (pseudo) {
        Eigen::SelfAdjointEigenSolver<Mat> es(opg);
        const Vec ev = es.eigenvalues();
        const double cut = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
        Vec inv = ev.unaryExpr([&](double x) { return x > cut ? 1.0 / x : 0.0; });
        cov = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    }

    std::vector<double> se(n);
    if (flags) flags->assign(n, pseudo ? "pseudo-inverse" : "ok");
    for (int k = 0; k < n; ++k) {
        const std::string& name = config.free_parameters[k];
        const double var = cov(k, k);
        const double jac = transform_jacobian(name, get_param(estimates, name));
        se[k] = var > 0.0 ? std::sqrt(var) * std::abs(jac) : std::numeric_limits<double>::quiet_NaN();
        if (flags && !(var > 0.0)) (*flags)[k] = "degenerate";
    }
    return se;
}

} // namespace repmkt
