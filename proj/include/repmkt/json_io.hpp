#pragma once

#include "repmkt/analysis.hpp"
#include "repmkt/estimation.hpp"
#include "repmkt/uniqueness.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace repmkt {

/// One configuration document drives every workflow; sections are optional
/// and unknown keys are rejected at every level.
struct AppConfig {
    ModelParams params;
    StateSpace space = StateSpace::default_space();
    SolveOptions solver;
    SimulationConfig simulation;
    // estimation section
    std::vector<std::string> free_parameters = default_free_parameters();
    StateSpace estimation_grid = StateSpace::estimation_space();
    int est_max_evaluations = 8000;
    double est_ftol = 1e-6;
    double est_xtol = 1e-5;
    double est_initial_step = 0.1;
    double est_perturb_fraction = 0.2; // recovery-pipeline start displacement
    // analysis section
    double an_from_rating = 5.0;
    double an_to_rating = 4.99;
    int an_sales_bucket = 0;
    double an_entry_fee_dollars = 500.0;
    int an_state_index = -1;
    SweepSpec sweep;
    RegressionSpec regression;

    EstimationConfig estimation_config() const;
};

AppConfig parse_config(const std::string& json_text);
AppConfig load_config(const std::string& path);
std::string config_to_json(const AppConfig& config);

std::string solution_to_json(const EquilibriumSolution& solution, const StateSpace& space);
/// Restores a solution plus the grids it was computed on.
std::pair<EquilibriumSolution, StateSpace> solution_from_json(const std::string& json_text);
void write_solution(const EquilibriumSolution& solution, const StateSpace& space,
                    const std::string& path);
std::pair<EquilibriumSolution, StateSpace> load_solution(const std::string& path);

std::string uniqueness_report_to_json(const UniquenessReport& report);
std::string beta_bar_result_to_json(const BetaBarResult& result);
std::string estimation_result_to_json(const EstimationResult& result);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// FNV-1a over the raw bytes; stable across runs for identical configs.
std::uint64_t fnv1a_hash(const std::string& bytes);

struct RunManifest {
    std::string command_line;
    std::string config_hash; // hex
    std::uint64_t seed = 0;
    std::string tool_version;
    double wall_time_seconds = 0.0;
    std::vector<std::string> outputs;
};

void write_manifest(const RunManifest& manifest, const std::string& path);

extern const char* kToolVersion;

} // namespace repmkt
