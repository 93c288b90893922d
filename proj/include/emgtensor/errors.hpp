// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace emg {

/// Precondition violations: bad shapes, out-of-range indices, invalid targets.
struct InvalidArgumentError : std::invalid_argument {
    explicit InvalidArgumentError(const std::string& what)
        : std::invalid_argument(what) {}
};

/// Request would materialize more data than the configured cap allows.
struct ResourceLimitError : std::runtime_error {
    explicit ResourceLimitError(const std::string& what)
        : std::runtime_error(what) {}
};

/// PCG direction became indefinite after truncation; carries the iteration.
struct SolverBreakdownError : std::runtime_error {
    SolverBreakdownError(const std::string& what, int iteration_index)
        : std::runtime_error(what), iteration(iteration_index) {}
    int iteration;
};

/// Non-finite values, failed factorizations.
struct NumericalFailureError : std::runtime_error {
    explicit NumericalFailureError(const std::string& what)
        : std::runtime_error(what) {}
};

/// A required input file (precomputed tensor, config) is absent or corrupt.
struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& what)
        : std::runtime_error(what) {}
};

} // namespace emg
