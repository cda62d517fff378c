#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>

namespace repmkt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Eigen::Index;

/// Seller quality. Exactly two types per model; indices are stable and used
/// to address per-type arrays throughout.
enum class QualityType : int { low = 0, high = 1 };

constexpr int kNumTypes = 2;
constexpr std::array<QualityType, kNumTypes> kTypes = {QualityType::low, QualityType::high};

inline int type_index(QualityType t) { return static_cast<int>(t); }

template <typename T>
using PerType = std::array<T, kNumTypes>;

// Error taxonomy. All model errors derive from ModelError so the CLI can map
// them onto exit codes (numerical failure vs I/O).
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidGridError : ModelError {
    using ModelError::ModelError;
};

struct InvalidParameterError : ModelError {
    using ModelError::ModelError;
};

struct DimensionMismatchError : ModelError {
    using ModelError::ModelError;
};

struct UndefinedBeliefError : ModelError {
    int state_index;
    explicit UndefinedBeliefError(int state, const std::string& msg)
        : ModelError(msg), state_index(state) {}
};

struct NonConvergenceError : ModelError {
    using ModelError::ModelError;
};

struct NonContractionError : ModelError {
    using ModelError::ModelError;
};

struct StaleSolutionError : ModelError {
    using ModelError::ModelError;
};

struct InfeasibleError : ModelError {
    using ModelError::ModelError;
};

struct InvalidWeightsError : ModelError {
    using ModelError::ModelError;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : IoError {
    using IoError::IoError;
};

} // namespace repmkt
