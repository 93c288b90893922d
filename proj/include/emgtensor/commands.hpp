// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emgtensor/config.hpp"

namespace emg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitNumericalFailure = 4;

struct ForwardOptions {
    std::optional<Eigen::Vector3d> p; // defaults to the reference conductivity
    std::optional<int> direction;     // defaults to the reference direction
    std::optional<Index> t;           // field snapshot time step; default last
};

struct SampleOptions {
    std::string mode = "TA"; // "SA" or "TA"
    std::string data_path;   // optional measured-data CSV; default synthetic
    std::string tensor_dir;  // where precomputed tensors live; default out dir
};

struct BenchOptions {
    std::vector<Index> sample_counts{125, 500, 2000, 10000};
    std::vector<int> inverse_grid_sizes{3, 6}; // h_M = 1/g
    Index extrapolate_to = 100000;
    Index probe_samples = 100; // chain length per grid-size probe
};

int cmd_forward(const ExperimentConfig& cfg, const ForwardOptions& opt,
                const std::string& out_dir);
int cmd_precompute(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_sample(const ExperimentConfig& cfg, const SampleOptions& opt,
               const std::string& out_dir);
int cmd_bench(const ExperimentConfig& cfg, const BenchOptions& opt,
              const std::string& out_dir);

/// Maps command exceptions to process exit codes and prints the reason.
int run_guarded(const std::function<int()>& body);

} // namespace emg
