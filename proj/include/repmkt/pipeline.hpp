#pragma once

#include "repmkt/json_io.hpp"

namespace repmkt {

/// simulate -> estimate -> compare, at one seed. The panel is generated on
/// the estimation grid so the data-generating process is exactly the model
/// being estimated.
struct RecoveryParameter {
    std::string name;
    double truth = 0.0;
    double start = 0.0;
    double estimate = 0.0;
    double standard_error = 0.0;
    bool recovered = false; // within max(3 SE, 10% relative)
};

struct RecoveryResult {
    std::vector<RecoveryParameter> parameters;
    int n_recovered = 0;
    bool passed = false; // at least 8 of 10
    double loglik = 0.0;
    int evaluation_count = 0;
    int inner_failures = 0;
    int n_vendors = 0;
    long n_obs = 0;
};

RecoveryResult run_recovery(const AppConfig& config, std::uint64_t seed);

std::string recovery_result_to_json(const RecoveryResult& result);

} // namespace repmkt
