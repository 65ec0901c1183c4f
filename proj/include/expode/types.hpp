#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace expode {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Error thrown for invalid user input (options, problem setup, CLI).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Error thrown when an integration cannot proceed (step underflow,
/// callback failure, evaluator breakdown).
class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised internally by a matrix-function evaluator when it cannot reach
/// its accuracy target at the current step size. The solver step catches
/// it, halves the step and retries.
class StepReductionRequest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace expode
