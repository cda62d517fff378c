#include "repmkt/cli.hpp"

#include "repmkt/four_state.hpp"
#include "repmkt/json_io.hpp"
#include "repmkt/parallel.hpp"
#include "repmkt/pipeline.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace repmkt {

namespace {

struct RunContext {
    std::string command_line;
    std::string config_path;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void finish() const {
        RunManifest m;
        m.command_line = command_line;
        if (!config_path.empty()) {
            char hex[32];
            std::snprintf(hex, sizeof(hex), "%016llx",
                          static_cast<unsigned long long>(fnv1a_hash(read_text_file(config_path))));
            m.config_hash = hex;
        }
        m.seed = seed;
        m.tool_version = kToolVersion;
        m.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m.outputs = outputs;
        const std::string path =
            outputs.empty() ? "run_manifest.json" : outputs.front() + ".manifest.json";
        write_manifest(m, path);
    }
};

std::vector<double> parse_grid_spec(const std::string& spec) {
    // "lo:hi:n"
    double lo = 0.0, hi = 0.0;
    int n = 0;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 1 || !(lo < hi))
        throw ParseError("grid spec must be lo:hi:n with lo < hi and n >= 1");
    std::vector<double> grid(n);
    for (int i = 0; i < n; ++i) grid[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return grid;
}

std::string csv17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"seller-reputation market toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (default: machine parallelism)");

    std::string config_path, out_path, eq_path, panel_path, grid_spec;
    std::uint64_t seed = 1;
    bool have_seed = false;

    // model validate
    auto* model = app.add_subcommand("model", "model-level checks");
    auto* validate = model->add_subcommand("validate", "run A1/A2 checks on a configuration");
    validate->add_option("--config", config_path, "model config JSON")->required();

    // eq solve | four-state | verify | beta-bar
    auto* eq = app.add_subcommand("eq", "equilibrium computations");
    auto* eq_solve = eq->add_subcommand("solve", "compute the stationary equilibrium");
    eq_solve->add_option("--config", config_path)->required();
    eq_solve->add_option("--out", out_path)->required();
    auto* eq_four = eq->add_subcommand("four-state", "solve the four-state illustration");
    double fs_gamma = 0.7, fs_rho = 0.3, fs_beta = 0.9, fs_entry_low = 0.5, fs_entry_high = 0.5;
    eq_four->add_option("--gamma", fs_gamma)->required();
    eq_four->add_option("--rho", fs_rho)->required();
    eq_four->add_option("--beta", fs_beta)->required();
    eq_four->add_option("--entry-low", fs_entry_low);
    eq_four->add_option("--entry-high", fs_entry_high);
    eq_four->add_option("--out", out_path);
    auto* eq_verify = eq->add_subcommand("verify", "uniqueness verification at the equilibrium");
    eq_verify->add_option("--config", config_path)->required();
    eq_verify->add_option("--out", out_path)->required();
    auto* eq_betabar = eq->add_subcommand("beta-bar", "discount threshold scan");
    eq_betabar->add_option("--config", config_path)->required();
    eq_betabar->add_option("--grid", grid_spec, "beta grid lo:hi:n")->required();
    eq_betabar->add_option("--out", out_path);

    // sim run
    auto* sim = app.add_subcommand("sim", "panel simulation");
    auto* sim_run = sim->add_subcommand("run", "simulate a weekly vendor panel");
    sim_run->add_option("--config", config_path)->required();
    sim_run->add_option("--eq", eq_path, "equilibrium JSON (from eq solve)");
    sim_run->add_option("--out", out_path)->required();
    sim_run->add_option("--seed", seed)->each([&](const std::string&) { have_seed = true; });

    // est fit | loglik
    auto* est = app.add_subcommand("est", "estimation");
    auto* est_fit = est->add_subcommand("fit", "nested fixed point maximum likelihood");
    est_fit->add_option("--panel", panel_path)->required();
    est_fit->add_option("--config", config_path)->required();
    est_fit->add_option("--out", out_path)->required();
    auto* est_ll = est->add_subcommand("loglik", "log likelihood at the config parameters");
    est_ll->add_option("--panel", panel_path)->required();
    est_ll->add_option("--config", config_path)->required();

    // an returns | no-rating | sybil | sweep | regress
    auto* an = app.add_subcommand("an", "analysis and counterfactuals");
    auto* an_returns = an->add_subcommand("returns", "returns to reputation");
    an_returns->add_option("--eq", eq_path)->required();
    an_returns->add_option("--config", config_path)->required();
    an_returns->add_option("--out", out_path);
    auto* an_norating = an->add_subcommand("no-rating", "single-rating counterfactual");
    an_norating->add_option("--config", config_path)->required();
    an_norating->add_option("--out", out_path);
    auto* an_sybil = an->add_subcommand("sybil", "value of abandoning the identity");
    int sybil_state = 0;
    double sybil_fee = 500.0;
    std::string sybil_type = "low";
    an_sybil->add_option("--eq", eq_path)->required();
    an_sybil->add_option("--config", config_path)->required();
    an_sybil->add_option("--state", sybil_state)->required();
    an_sybil->add_option("--fee", sybil_fee);
    an_sybil->add_option("--type", sybil_type)->check(CLI::IsMember({"low", "high"}));
    auto* an_sweep = an->add_subcommand("sweep", "comparative statics sweep");
    an_sweep->add_option("--spec", config_path, "config JSON with a sweep section")->required();
    an_sweep->add_option("--out", out_path)->required();
    an_sweep->add_option("--seed", seed)->each([&](const std::string&) { have_seed = true; });
    auto* an_regress = an->add_subcommand("regress", "stylized-fact price regression");
    an_regress->add_option("--panel", panel_path)->required();
    an_regress->add_option("--spec", config_path, "config JSON with a regression section")
        ->required();
    an_regress->add_option("--out", out_path)->required();

    // pipeline recover
    auto* pipe = app.add_subcommand("pipeline", "end-to-end workflows");
    auto* recover = pipe->add_subcommand("recover", "simulate, estimate, compare");
    recover->add_option("--config", config_path)->required();
    recover->add_option("--seed", seed)->each([&](const std::string&) { have_seed = true; });
    recover->add_option("--out", out_path)->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help() << std::endl;
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help() << std::endl;
        return 1;
    }

    RunContext ctx;
    {
        std::ostringstream os;
        os << "repmkt";
        for (const auto& a : args) os << " " << a;
        ctx.command_line = os.str();
        ctx.config_path = config_path;
        ctx.seed = seed;
    }
    if (threads > 0) set_max_threads(threads);
    if (!out_path.empty()) ctx.outputs.push_back(out_path);

    if (*validate) {
        const AppConfig cfg = load_config(config_path);
        const TransitionKernel kernel = build_model_kernel(cfg.params, cfg.space);
        const auto a1 = validate_assumption_a1(kernel);
        const auto a2 = validate_assumption_a2(cfg.params.cost_distribution(), cfg.params,
                                               default_a2_probe_grid(cfg.params));
        std::cout << "A1 (irreducible rating system): " << (a1.holds ? "holds" : "FAILS") << "\n  "
                  << a1.diagnostic << "\n";
        std::cout << "A2 (unbounded costs): " << (a2.holds ? "holds" : "FAILS") << "\n  "
                  << a2.diagnostic << "\n";
        std::cout << "states: " << cfg.space.n_states() << ", entry state "
                  << cfg.space.entry_state() << "\n";
        ctx.finish();
        return 0;
    }
    if (*eq_solve) {
        const AppConfig cfg = load_config(config_path);
        const CostDistribution cost = cfg.params.cost_distribution();
        const TransitionKernel kernel = build_model_kernel(cfg.params, cfg.space);
        const EquilibriumSolution sol =
            solve_equilibrium(cfg.params, cfg.space, kernel, cost, cfg.solver);
        write_solution(sol, cfg.space, out_path);
        std::cout << "converged in " << sol.iterations << " iterations; residuals "
                  << sol.residual_cutoff << " / " << sol.residual_mass << " / "
                  << sol.residual_belief << "\n";
        ctx.finish();
        return 0;
    }
    if (*eq_four) {
        const PerType<double> entry = {fs_entry_low, fs_entry_high};
        const EquilibriumSolution sol =
            solve_four_state_closed_form(fs_gamma, fs_rho, fs_beta, entry);
        std::ostringstream os;
        os << "state,type,cutoff,mass,price\n";
        const char* labels[4] = {"L1", "L2", "H1", "H2"};
        for (QualityType t : kTypes)
            for (int s = 0; s < 4; ++s)
                os << labels[s] << "," << (t == QualityType::high ? "high" : "low") << ","
                   << csv17(sol.cutoffs.of(t)(s)) << "," << csv17(sol.masses.of(t)(s)) << ","
                   << csv17(sol.beliefs.theta_hat(s)) << "\n";
        if (out_path.empty()) std::cout << os.str();
        else write_text_file(out_path, os.str());
        ctx.finish();
        return 0;
    }
    if (*eq_verify) {
        const AppConfig cfg = load_config(config_path);
        const CostDistribution cost = cfg.params.cost_distribution();
        const TransitionKernel kernel = build_model_kernel(cfg.params, cfg.space);
        const EquilibriumSolution sol =
            solve_equilibrium(cfg.params, cfg.space, kernel, cost, cfg.solver);
        const UniquenessReport report = verify_uniqueness_at(sol, cfg.params, kernel, cost);
        write_text_file(out_path, uniqueness_report_to_json(report));
        std::cout << (report.overall ? "uniqueness checks PASS" : "uniqueness checks FAIL") << "\n";
        ctx.finish();
        return 0;
    }
    if (*eq_betabar) {
        const AppConfig cfg = load_config(config_path);
        const CostDistribution cost = cfg.params.cost_distribution();
        const TransitionKernel kernel = build_model_kernel(cfg.params, cfg.space);
        const BetaBarResult result = estimate_beta_bar(cfg.params, cfg.space, kernel, cost,
                                                       parse_grid_spec(grid_spec), cfg.solver);
        const std::string text = beta_bar_result_to_json(result);
        if (out_path.empty()) std::cout << text << "\n";
        else write_text_file(out_path, text);
        ctx.finish();
        return 0;
    }
    if (*sim_run) {
        AppConfig cfg = load_config(config_path);
        if (have_seed) cfg.simulation.seed = seed;
        ctx.seed = cfg.simulation.seed;
        const CostDistribution cost = cfg.params.cost_distribution();
        EquilibriumSolution sol;
        StateSpace space = cfg.space;
        if (!eq_path.empty()) {
            auto loaded = load_solution(eq_path);
            sol = std::move(loaded.first);
            space = std::move(loaded.second);
        } else {
            const TransitionKernel kernel = build_model_kernel(cfg.params, space);
            sol = solve_equilibrium(cfg.params, space, kernel, cost, cfg.solver);
        }
        const TransitionKernel kernel = build_model_kernel(cfg.params, space);
        const Panel panel = simulate_panel(sol, cfg.params, space, kernel, cost, cfg.simulation);
        write_panel(panel, out_path);
        ctx.outputs.push_back(out_path + ".meta.json");
        std::cout << "simulated " << panel.n_vendors() << " vendors, " << panel.n_obs()
                  << " observations\n";
        ctx.finish();
        return 0;
    }
    if (*est_fit || *est_ll) {
        const AppConfig cfg = load_config(config_path);
        const Panel panel = read_panel(panel_path);
        const EstimationConfig est_cfg = cfg.estimation_config();
        if (*est_ll) {
            const Panel filtered = filter_panel_for_estimation(panel, est_cfg.space);
            const double ll = total_loglik(filtered, cfg.params, est_cfg);
            std::printf("%.17g\n", ll);
            ctx.finish();
            return 0;
        }
        const EstimationResult result = maximize_likelihood(panel, est_cfg, cfg.params);
        write_text_file(out_path, estimation_result_to_json(result));
        std::cout << "loglik " << result.loglik << " after " << result.evaluation_count
                  << " evaluations; " << (result.converged ? "converged" : "NOT converged") << "\n";
        ctx.finish();
        return result.converged ? 0 : 2;
    }
    if (*an_returns) {
        const AppConfig cfg = load_config(config_path);
        auto [sol, space] = load_solution(eq_path);
        const ReputationLoss loss =
            returns_to_reputation(sol, cfg.params, space, cfg.params.cost_distribution(),
                                  cfg.an_from_rating, cfg.an_to_rating, cfg.an_sales_bucket);
        std::ostringstream os;
        os << "type,npv_units,npv_dollars,pct_loss\n";
        for (QualityType t : kTypes) {
            const int ti = type_index(t);
            os << (t == QualityType::high ? "high" : "low") << "," << csv17(loss.npv_units[ti])
               << "," << csv17(loss.npv_dollars[ti]) << "," << csv17(loss.pct_loss[ti]) << "\n";
        }
        if (out_path.empty()) std::cout << os.str();
        else write_text_file(out_path, os.str());
        ctx.finish();
        return 0;
    }
    if (*an_norating) {
        const AppConfig cfg = load_config(config_path);
        const NoRatingReport report = no_rating_counterfactual(cfg.params, cfg.space, cfg.solver);
        std::ostringstream os;
        os << "quantity,type,baseline,counterfactual\n";
        for (QualityType t : kTypes) {
            const int ti = type_index(t);
            const char* ty = t == QualityType::high ? "high" : "low";
            os << "cutoff_entry," << ty << "," << csv17(report.baseline_cutoff_entry[ti]) << ","
               << csv17(report.counterfactual_cutoff_entry[ti]) << "\n";
            os << "survival_entry," << ty << "," << csv17(report.baseline_survival_entry[ti]) << ","
               << csv17(report.counterfactual_survival_entry[ti]) << "\n";
            os << "entry_profit_dollars," << ty << "," << csv17(report.baseline_profit[ti].dollars)
               << "," << csv17(report.counterfactual_profit[ti].dollars) << "\n";
        }
        if (out_path.empty()) std::cout << os.str();
        else write_text_file(out_path, os.str());
        ctx.finish();
        return 0;
    }
    if (*an_sybil) {
        const AppConfig cfg = load_config(config_path);
        auto [sol, space] = load_solution(eq_path);
        const double value =
            sybil_attack_value(sol, cfg.params, space, sybil_state,
                               sybil_type == "high" ? QualityType::high : QualityType::low,
                               sybil_fee);
        std::printf("%.17g\n", value);
        ctx.finish();
        return 0;
    }
    if (*an_sweep) {
        AppConfig cfg = load_config(config_path);
        if (have_seed) cfg.simulation.seed = seed;
        ctx.seed = cfg.simulation.seed;
        if (cfg.sweep.parameter.empty())
            throw ParseError("sweep requires a sweep section in the config");
        const auto rows =
            comparative_statics_sweep(cfg.sweep, cfg.params, cfg.space, cfg.simulation, cfg.solver);
        std::ostringstream os;
        os << "parameter,value,solved,metric,mean,sd\n";
        for (const auto& row : rows) {
            if (!row.solved) {
                os << cfg.sweep.parameter << "," << csv17(row.value) << ",0,error,nan,nan\n";
                continue;
            }
            for (std::size_t k = 0; k < row.metric_names.size(); ++k)
                os << cfg.sweep.parameter << "," << csv17(row.value) << ",1,"
                   << row.metric_names[k] << "," << csv17(row.metric_means[k]) << ","
                   << csv17(row.metric_sds[k]) << "\n";
        }
        write_text_file(out_path, os.str());
        ctx.finish();
        return 0;
    }
    if (*an_regress) {
        const AppConfig cfg = load_config(config_path);
        const Panel panel = read_panel(panel_path);
        const RegressionResult result = stylized_fact_regression(panel, cfg.regression);
        std::ostringstream os;
        os << "term,coefficient,robust_se\n";
        for (std::size_t k = 0; k < result.names.size(); ++k)
            os << result.names[k] << "," << csv17(result.coefficients(k)) << ","
               << csv17(result.robust_se(k)) << "\n";
        write_text_file(out_path, os.str());
        ctx.finish();
        return 0;
    }
    if (*recover) {
        const AppConfig cfg = load_config(config_path);
        const RecoveryResult result = run_recovery(cfg, seed);
        write_text_file(out_path, recovery_result_to_json(result));
        std::cout << "recovered " << result.n_recovered << "/" << result.parameters.size()
                  << (result.passed ? " (pass)" : " (fail)") << "\n";
        ctx.finish();
        return result.passed ? 0 : 2;
    }
    std::cerr << app.help() << std::endl;
    return 1;
}

} // namespace

int dispatch(const std::vector<std::string>& args) {
    try {
        return run(args);
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << std::endl;
        return 3;
    } catch (const ModelError& e) {
        std::cerr << "numerical error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

} // namespace repmkt
