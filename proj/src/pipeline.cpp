#include "repmkt/pipeline.hpp"

#include "json.hpp"

#include <cmath>

namespace repmkt {

RecoveryResult run_recovery(const AppConfig& config, std::uint64_t seed) {
    const ModelParams truth = config.params;
    const StateSpace& space = config.estimation_grid;
    const CostDistribution cost = truth.cost_distribution();
    const TransitionKernel kernel = build_model_kernel(truth, space);
    const EquilibriumSolution solution =
        solve_equilibrium(truth, space, kernel, cost, config.solver);

    SimulationConfig sim = config.simulation;
    sim.seed = seed;
    const Panel panel = simulate_panel(solution, truth, space, kernel, cost, sim);

    EstimationConfig est = config.estimation_config();
    ModelParams start = truth;
    for (const auto& name : est.free_parameters) {
        double t = to_transformed(name, get_param(truth, name));
        t = t != 0.0 ? t * (1.0 + config.est_perturb_fraction) : config.est_perturb_fraction;
        set_param(start, name, from_transformed(name, t));
    }
    if (!(start.theta_low < start.theta_high)) start.theta_high = start.theta_low * 1.5;

    const EstimationResult fit = maximize_likelihood(panel, est, start);

    RecoveryResult result;
    result.loglik = fit.loglik;
    result.evaluation_count = fit.evaluation_count;
    result.inner_failures = fit.inner_failures;
    result.n_vendors = fit.n_vendors;
    result.n_obs = fit.n_obs;
    for (std::size_t k = 0; k < est.free_parameters.size(); ++k) {
        RecoveryParameter rp;
        rp.name = est.free_parameters[k];
        rp.truth = get_param(truth, rp.name);
        rp.start = get_param(start, rp.name);
        rp.estimate = get_param(fit.point_estimates, rp.name);
        rp.standard_error = fit.standard_errors[k];
        const double err = std::abs(rp.estimate - rp.truth);
        const double band = std::max(std::isfinite(rp.standard_error) ? 3.0 * rp.standard_error : 0.0,
                                     0.10 * std::abs(rp.truth));
        rp.recovered = err <= band;
        if (rp.recovered) ++result.n_recovered;
        result.parameters.push_back(rp);
    }
    const int need = est.free_parameters.size() >= 10
                         ? 8
                         : static_cast<int>(est.free_parameters.size());
    result.passed = result.n_recovered >= need;
    return result;
}

std::string recovery_result_to_json(const RecoveryResult& r) {
    nlohmann::json doc;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : r.parameters) {
        params.push_back({{"name", p.name},
                          {"truth", p.truth},
                          {"start", p.start},
                          {"estimate", p.estimate},
                          {"standard_error",
                           std::isfinite(p.standard_error) ? nlohmann::json(p.standard_error)
                                                           : nlohmann::json("nan")},
                          {"recovered", p.recovered}});
    }
    doc["parameters"] = params;
    doc["n_recovered"] = r.n_recovered;
    doc["passed"] = r.passed;
    doc["loglik"] = r.loglik;
    doc["evaluation_count"] = r.evaluation_count;
    doc["inner_failures"] = r.inner_failures;
    doc["n_vendors"] = r.n_vendors;
    doc["n_obs"] = r.n_obs;
    return doc.dump(1);
}

} // namespace repmkt
