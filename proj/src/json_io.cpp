#include "repmkt/json_io.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace repmkt {

using nlohmann::json;

const char* kToolVersion = "0.1.0";

namespace {

void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ParseError("unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
void take(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

StateSpace parse_space(const json& obj, const std::string& where, const StateSpace& fallback) {
    RatingGrid rating = fallback.rating_grid;
    SalesGrid sales = fallback.sales_grid;
    if (obj.contains("rating_grid")) {
        const json& rg = obj.at("rating_grid");
        reject_unknown(rg, {"min", "max", "points", "levels"}, where + ".rating_grid");
        double lo = 3.0, hi = 5.0;
        take(rg, "min", lo);
        take(rg, "max", hi);
        if (rg.contains("levels")) {
            rating.points = rg.at("levels").get<std::vector<double>>();
            rating.r_min = lo;
            rating.r_max = hi;
        } else {
            int n = 51;
            take(rg, "points", n);
            rating = RatingGrid::linspace(lo, hi, n);
        }
    }
    if (obj.contains("sales_bucket_edges"))
        sales = SalesGrid::from_edges(obj.at("sales_bucket_edges").get<std::vector<double>>());
    return StateSpace(rating, sales);
}

json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (Index i = 0; i < v.size(); ++i) {
        const double x = v(i);
        if (std::isfinite(x)) arr.push_back(x);
        else if (x > 0.0) arr.push_back("inf");
        else if (x < 0.0) arr.push_back("-inf");
        else arr.push_back("nan");
    }
    return arr;
}

Vec vec_from_json(const json& arr) {
    Vec v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (arr[i].is_string()) {
            const std::string s = arr[i].get<std::string>();
            if (s == "inf") v(i) = std::numeric_limits<double>::infinity();
            else if (s == "-inf") v(i) = -std::numeric_limits<double>::infinity();
            else v(i) = std::numeric_limits<double>::quiet_NaN();
        } else {
            v(i) = arr[i].get<double>();
        }
    }
    return v;
}

} // namespace

EstimationConfig AppConfig::estimation_config() const {
    EstimationConfig c;
    c.free_parameters = free_parameters;
    c.base = params;
    c.space = estimation_grid;
    c.inner_options = solver;
    c.max_evaluations = est_max_evaluations;
    c.ftol = est_ftol;
    c.xtol = est_xtol;
    c.initial_step = est_initial_step;
    return c;
}

AppConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw ParseError(std::string("config is not valid JSON: ") + err.what());
    }
    static const std::vector<std::string> top_keys = {
        "schema_version", "theta_low", "theta_high", "alpha", "mu_c", "sigma_c", "gamma_sales",
        "rho_low", "rho_high", "xi", "sigma_r", "sigma_p", "beta", "demand_gamma0",
        "demand_gamma1", "payoff_variant", "price_noise", "entry_mass", "cost_family",
        "dollars_per_unit_gram", "grams_per_order", "orders_per_period_scale", "rating_grid",
        "sales_bucket_edges", "solver", "simulation", "estimation", "analysis", "sweep",
        "regression"};
    reject_unknown(doc, top_keys, "config");
    if (!doc.contains("schema_version") || doc.at("schema_version").get<int>() != 1)
        throw ParseError("config requires schema_version 1");

    AppConfig c;
    ModelParams& p = c.params;
    take(doc, "theta_low", p.theta_low);
    take(doc, "theta_high", p.theta_high);
    take(doc, "alpha", p.alpha);
    take(doc, "mu_c", p.mu_c);
    take(doc, "sigma_c", p.sigma_c);
    take(doc, "gamma_sales", p.gamma_sales);
    take(doc, "rho_low", p.rho_low);
    take(doc, "rho_high", p.rho_high);
    take(doc, "xi", p.xi);
    take(doc, "sigma_r", p.sigma_r);
    take(doc, "sigma_p", p.sigma_p);
    take(doc, "beta", p.beta);
    take(doc, "demand_gamma0", p.demand_gamma0);
    take(doc, "demand_gamma1", p.demand_gamma1);
    take(doc, "entry_mass", p.entry_mass);
    take(doc, "dollars_per_unit_gram", p.dollars_per_unit_gram);
    take(doc, "grams_per_order", p.grams_per_order);
    take(doc, "orders_per_period_scale", p.orders_per_period_scale);
    if (doc.contains("payoff_variant")) {
        const std::string v = doc.at("payoff_variant").get<std::string>();
        if (v == "main_text") p.payoff_variant = PayoffVariant::main_text;
        else if (v == "survival_weighted") p.payoff_variant = PayoffVariant::survival_weighted;
        else throw ParseError("payoff_variant must be main_text or survival_weighted");
    }
    if (doc.contains("price_noise")) {
        const std::string v = doc.at("price_noise").get<std::string>();
        if (v == "multiplicative_lognormal") p.price_noise = PriceNoise::multiplicative_lognormal;
        else if (v == "additive_lognormal") p.price_noise = PriceNoise::additive_lognormal;
        else throw ParseError("price_noise must be multiplicative_lognormal or additive_lognormal");
    }
    if (doc.contains("cost_family")) {
        const std::string v = doc.at("cost_family").get<std::string>();
        if (v == "normal") p.cost_family = CostDistribution::Family::normal;
        else if (v == "uniform01") p.cost_family = CostDistribution::Family::uniform01;
        else throw ParseError("cost_family must be normal or uniform01");
    }

    c.space = parse_space(doc, "config", StateSpace::default_space());

    if (doc.contains("solver")) {
        const json& s = doc.at("solver");
        reject_unknown(s, {"tol", "max_iter", "damping", "require_assumptions"}, "solver");
        take(s, "tol", c.solver.tol);
        take(s, "max_iter", c.solver.max_iter);
        take(s, "damping", c.solver.damping);
        take(s, "require_assumptions", c.solver.require_assumptions);
    }
    if (doc.contains("simulation")) {
        const json& s = doc.at("simulation");
        reject_unknown(s, {"n_vendors", "horizon_weeks", "seed", "staggered_entry"}, "simulation");
        take(s, "n_vendors", c.simulation.n_vendors);
        take(s, "horizon_weeks", c.simulation.horizon_weeks);
        take(s, "seed", c.simulation.seed);
        take(s, "staggered_entry", c.simulation.staggered_entry);
    }
    if (doc.contains("estimation")) {
        const json& s = doc.at("estimation");
        reject_unknown(s,
                       {"free_parameters", "max_evaluations", "ftol", "xtol", "initial_step",
                        "perturb_fraction", "rating_grid", "sales_bucket_edges"},
                       "estimation");
        take(s, "free_parameters", c.free_parameters);
        take(s, "max_evaluations", c.est_max_evaluations);
        take(s, "ftol", c.est_ftol);
        take(s, "xtol", c.est_xtol);
        take(s, "initial_step", c.est_initial_step);
        take(s, "perturb_fraction", c.est_perturb_fraction);
        c.estimation_grid = parse_space(s, "estimation", StateSpace::estimation_space());
    }
    if (doc.contains("analysis")) {
        const json& s = doc.at("analysis");
        reject_unknown(
            s, {"from_rating", "to_rating", "sales_bucket", "entry_fee_dollars", "state_index"},
            "analysis");
        take(s, "from_rating", c.an_from_rating);
        take(s, "to_rating", c.an_to_rating);
        take(s, "sales_bucket", c.an_sales_bucket);
        take(s, "entry_fee_dollars", c.an_entry_fee_dollars);
        take(s, "state_index", c.an_state_index);
    }
    if (doc.contains("sweep")) {
        const json& s = doc.at("sweep");
        reject_unknown(s, {"parameter", "values", "metrics"}, "sweep");
        take(s, "parameter", c.sweep.parameter);
        take(s, "values", c.sweep.values);
        take(s, "metrics", c.sweep.metrics);
    }
    if (doc.contains("regression")) {
        const json& s = doc.at("regression");
        reject_unknown(s,
                       {"split_rating_by_sales_half", "review_bins", "include_age",
                        "vendor_fixed_effects"},
                       "regression");
        take(s, "split_rating_by_sales_half", c.regression.split_rating_by_sales_half);
        take(s, "review_bins", c.regression.review_bins);
        take(s, "include_age", c.regression.include_age);
        take(s, "vendor_fixed_effects", c.regression.vendor_fixed_effects);
    }
    validate_params(c.params);
    return c;
}

AppConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

std::string config_to_json(const AppConfig& c) {
    const ModelParams& p = c.params;
    json doc;
    doc["schema_version"] = 1;
    doc["theta_low"] = p.theta_low;
    doc["theta_high"] = p.theta_high;
    doc["alpha"] = p.alpha;
    doc["mu_c"] = p.mu_c;
    doc["sigma_c"] = p.sigma_c;
    doc["gamma_sales"] = p.gamma_sales;
    doc["rho_low"] = p.rho_low;
    doc["rho_high"] = p.rho_high;
    doc["xi"] = p.xi;
    doc["sigma_r"] = p.sigma_r;
    doc["sigma_p"] = p.sigma_p;
    doc["beta"] = p.beta;
    doc["demand_gamma0"] = p.demand_gamma0;
    doc["demand_gamma1"] = p.demand_gamma1;
    doc["payoff_variant"] =
        p.payoff_variant == PayoffVariant::main_text ? "main_text" : "survival_weighted";
    doc["price_noise"] = p.price_noise == PriceNoise::multiplicative_lognormal
                             ? "multiplicative_lognormal"
                             : "additive_lognormal";
    doc["entry_mass"] = p.entry_mass;
    doc["cost_family"] =
        p.cost_family == CostDistribution::Family::normal ? "normal" : "uniform01";
    doc["dollars_per_unit_gram"] = p.dollars_per_unit_gram;
    doc["grams_per_order"] = p.grams_per_order;
    doc["orders_per_period_scale"] = p.orders_per_period_scale;
    doc["rating_grid"] = {{"min", c.space.rating_grid.r_min},
                          {"max", c.space.rating_grid.r_max},
                          {"levels", c.space.rating_grid.points}};
    std::vector<double> edges;
    for (std::size_t i = 0; i + 1 < c.space.sales_grid.buckets.size(); ++i)
        edges.push_back(c.space.sales_grid.buckets[i].hi);
    doc["sales_bucket_edges"] = edges;
    doc["solver"] = {{"tol", c.solver.tol},
                     {"max_iter", c.solver.max_iter},
                     {"damping", c.solver.damping},
                     {"require_assumptions", c.solver.require_assumptions}};
    doc["simulation"] = {{"n_vendors", c.simulation.n_vendors},
                         {"horizon_weeks", c.simulation.horizon_weeks},
                         {"seed", c.simulation.seed},
                         {"staggered_entry", c.simulation.staggered_entry}};
    return doc.dump(1);
}

std::string solution_to_json(const EquilibriumSolution& sol, const StateSpace& space) {
    json doc;
    doc["schema_version"] = 1;
    doc["rating_levels"] = space.rating_grid.points;
    doc["rating_min"] = space.rating_grid.r_min;
    doc["rating_max"] = space.rating_grid.r_max;
    std::vector<double> edges;
    for (std::size_t i = 0; i + 1 < space.sales_grid.buckets.size(); ++i)
        edges.push_back(space.sales_grid.buckets[i].hi);
    doc["sales_bucket_edges"] = edges;
    doc["beliefs"] = vec_to_json(sol.beliefs.theta_hat);
    doc["cutoffs_low"] = vec_to_json(sol.cutoffs.cutoffs[0]);
    doc["cutoffs_high"] = vec_to_json(sol.cutoffs.cutoffs[1]);
    doc["mass_low"] = vec_to_json(sol.masses.mass[0]);
    doc["mass_high"] = vec_to_json(sol.masses.mass[1]);
    doc["log_mass_low"] = vec_to_json(sol.masses.log_mass[0]);
    doc["log_mass_high"] = vec_to_json(sol.masses.log_mass[1]);
    doc["survival_low"] = vec_to_json(sol.survival[0]);
    doc["survival_high"] = vec_to_json(sol.survival[1]);
    doc["exit_prob_low"] = vec_to_json(sol.exit_prob[0]);
    doc["exit_prob_high"] = vec_to_json(sol.exit_prob[1]);
    doc["residual_cutoff"] = sol.residual_cutoff;
    doc["residual_mass"] = sol.residual_mass;
    doc["residual_belief"] = sol.residual_belief;
    doc["iterations"] = sol.iterations;
    doc["converged"] = sol.converged;
    doc["tol"] = sol.tol;
    doc["zero_mass_states"] = sol.zero_mass_states;
    return doc.dump(1);
}

std::pair<EquilibriumSolution, StateSpace> solution_from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw ParseError(std::string("solution is not valid JSON: ") + err.what());
    }
    RatingGrid rating;
    rating.points = doc.at("rating_levels").get<std::vector<double>>();
    rating.r_min = doc.at("rating_min").get<double>();
    rating.r_max = doc.at("rating_max").get<double>();
    SalesGrid sales = SalesGrid::from_edges(doc.at("sales_bucket_edges").get<std::vector<double>>());
    StateSpace space(rating, sales);

    EquilibriumSolution sol;
    sol.beliefs.theta_hat = vec_from_json(doc.at("beliefs"));
    sol.cutoffs.cutoffs[0] = vec_from_json(doc.at("cutoffs_low"));
    sol.cutoffs.cutoffs[1] = vec_from_json(doc.at("cutoffs_high"));
    PerType<Vec> mass;
    mass[0] = vec_from_json(doc.at("mass_low"));
    mass[1] = vec_from_json(doc.at("mass_high"));
    sol.masses.mass = mass;
    sol.masses.log_mass[0] = vec_from_json(doc.at("log_mass_low"));
    sol.masses.log_mass[1] = vec_from_json(doc.at("log_mass_high"));
    sol.survival[0] = vec_from_json(doc.at("survival_low"));
    sol.survival[1] = vec_from_json(doc.at("survival_high"));
    sol.exit_prob[0] = vec_from_json(doc.at("exit_prob_low"));
    sol.exit_prob[1] = vec_from_json(doc.at("exit_prob_high"));
    sol.residual_cutoff = doc.at("residual_cutoff").get<double>();
    sol.residual_mass = doc.at("residual_mass").get<double>();
    sol.residual_belief = doc.at("residual_belief").get<double>();
    sol.iterations = doc.at("iterations").get<int>();
    sol.converged = doc.at("converged").get<bool>();
    sol.tol = doc.at("tol").get<double>();
    sol.zero_mass_states = doc.at("zero_mass_states").get<std::vector<int>>();
    if (sol.beliefs.theta_hat.size() != space.n_states())
        throw ParseError("solution vectors do not match the grids");
    return {sol, space};
}

void write_solution(const EquilibriumSolution& solution, const StateSpace& space,
                    const std::string& path) {
    write_text_file(path, solution_to_json(solution, space));
}

std::pair<EquilibriumSolution, StateSpace> load_solution(const std::string& path) {
    return solution_from_json(read_text_file(path));
}

std::string uniqueness_report_to_json(const UniquenessReport& r) {
    json doc;
    doc["overall"] = r.overall;
    doc["dg1_dominant"] = r.dg1_dominance.holds;
    doc["dg1_min_margin"] = r.dg1_dominance.min_margin;
    doc["dg1_argmin_row"] = r.dg1_dominance.argmin_row;
    doc["dg1_matrix_test_agrees"] = r.dg1_dominance.matrix_test_agrees;
    doc["dg2_transpose_dominant"] = r.dg2_dominance.holds;
    doc["dg2_min_margin"] = r.dg2_dominance.min_margin;
    doc["dg2_argmin_row"] = r.dg2_dominance.argmin_row;
    doc["dg2_matrix_test_agrees"] = r.dg2_dominance.matrix_test_agrees;
    doc["off12_sup_norm"] = r.off12_norm;
    doc["off21_sup_norm"] = r.off21_norm;
    doc["p_matrix"] = r.p_matrix.is_p;
    doc["p_matrix_sampled"] = r.p_matrix.sampled;
    doc["p_matrix_minors_checked"] = r.p_matrix.minors_checked;
    doc["p_matrix_failure"] = r.p_matrix.failure;
    doc["zero_mass_states"] = r.zero_mass_states;
    doc["notes"] = r.notes;
    return doc.dump(1);
}

std::string beta_bar_result_to_json(const BetaBarResult& r) {
    json doc;
    if (r.beta_bar) doc["beta_bar"] = *r.beta_bar;
    else doc["beta_bar"] = nullptr;
    doc["monotone"] = r.monotone;
    json pts = json::array();
    for (const auto& p : r.points)
        pts.push_back(
            {{"beta", p.beta}, {"solved", p.solved}, {"passed", p.passed}, {"note", p.note}});
    doc["points"] = pts;
    return doc.dump(1);
}

std::string estimation_result_to_json(const EstimationResult& r) {
    json doc;
    json est = json::object();
    for (const auto& name : r.free_parameters) est[name] = get_param(r.point_estimates, name);
    doc["estimates"] = est;
    json se = json::object();
    for (std::size_t k = 0; k < r.free_parameters.size(); ++k) {
        const double s = r.standard_errors[k];
        se[r.free_parameters[k]] = std::isfinite(s) ? json(s) : json("nan");
    }
    doc["standard_errors"] = se;
    doc["se_flags"] = r.se_flags;
    doc["loglik"] = r.loglik;
    doc["n_vendors"] = r.n_vendors;
    doc["n_obs"] = r.n_obs;
    doc["converged"] = r.converged;
    doc["evaluation_count"] = r.evaluation_count;
    doc["inner_failures"] = r.inner_failures;
    doc["excluded_entry_state"] = r.diagnostics.excluded_entry_state;
    doc["excluded_age1_exit"] = r.diagnostics.excluded_age1_exit;
    return doc.dump(1);
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open file for writing: " + path);
    os << text;
    if (!text.empty() && text.back() != '\n') os << '\n';
}

std::uint64_t fnv1a_hash(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void write_manifest(const RunManifest& m, const std::string& path) {
    json doc;
    doc["command_line"] = m.command_line;
    doc["config_hash"] = m.config_hash;
    doc["seed"] = m.seed;
    doc["tool_version"] = m.tool_version;
    doc["wall_time_seconds"] = m.wall_time_seconds;
    doc["outputs"] = m.outputs;
    write_text_file(path, doc.dump(1));
}

} // namespace repmkt
