// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: assembles the forward model, precomputes the
// parameter-dependent solution in the hierarchical Tucker format, draws
// posterior conductivity samples with the standard (SA) or tensorized (TA)
// Metropolis-Hastings sampler, and benchmarks the speedup.
//
// Usage: emgtensor <forward|precompute|sample|bench> --config <file> [options]

#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emgtensor/commands.hpp"

namespace {

emg::ExperimentConfig load_with_overrides(const std::string& config_path,
                                          const std::optional<std::uint64_t>& seed) {
    emg::ExperimentConfig cfg = emg::load_experiment_config(config_path);
    if (seed) cfg.seed = *seed;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian EMG inversion with low-rank tensor formats"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--out", out_dir, "output directory (default: config output_dir)");
        cmd->add_option("--seed", seed, "override the config seed");
    };

    auto* forward = app.add_subcommand(
        "forward", "solve the dense forward problem at one conductivity");
    std::vector<double> p_flag;
    int direction_flag = 0;
    long long t_flag = -1;
    add_common(forward);
    forward->add_option("--p", p_flag, "conductivity diagonal p1,p2,p3")
        ->delimiter(',')
        ->expected(3);
    forward->add_option("--direction", direction_flag, "fiber direction 1, 2 or 3");
    forward->add_option("--t", t_flag, "time step of the exported field snapshot");

    auto* precompute = app.add_subcommand(
        "precompute", "solve for the whole conductivity grid in the HT format");
    add_common(precompute);

    auto* sample =
        app.add_subcommand("sample", "draw posterior samples and write chain + stats");
    std::string mode = "TA";
    std::string data_path;
    std::string tensor_dir;
    add_common(sample);
    sample->add_option("--mode", mode, "SA (dense solves) or TA (precomputed tensor)")
        ->check(CLI::IsMember({"SA", "TA"}));
    sample->add_option("--data", data_path, "measured-data CSV (default: synthetic)");
    sample->add_option("--tensors", tensor_dir,
                       "directory with precomputed tensors (default: --out)");

    auto* bench = app.add_subcommand("bench", "measure SA vs TA speedups");
    std::vector<long long> sample_counts;
    std::vector<int> grids;
    long long extrapolate_to = 100000;
    add_common(bench);
    bench->add_option("--samples", sample_counts, "sample counts, e.g. 125,1000,10000")
        ->delimiter(',');
    bench->add_option("--grids", grids, "inverse grid sizes g (h_M = 1/g), e.g. 3,6")
        ->delimiter(',');
    bench->add_option("--extrapolate-to", extrapolate_to,
                      "sample count for the per-grid extrapolation");

    CLI11_PARSE(app, argc, argv);

    return emg::run_guarded([&]() -> int {
        const emg::ExperimentConfig cfg = load_with_overrides(config_path, seed);
        const std::string out = out_dir.empty() ? cfg.output_dir : out_dir;
        if (forward->parsed()) {
            emg::ForwardOptions opt;
            if (!p_flag.empty()) opt.p = Eigen::Vector3d(p_flag[0], p_flag[1], p_flag[2]);
            if (forward->count("--direction") > 0) opt.direction = direction_flag;
            if (forward->count("--t") > 0) opt.t = static_cast<emg::Index>(t_flag);
            return emg::cmd_forward(cfg, opt, out);
        }
        if (precompute->parsed()) return emg::cmd_precompute(cfg, out);
        if (sample->parsed()) {
            emg::SampleOptions opt;
            opt.mode = mode;
            opt.data_path = data_path;
            opt.tensor_dir = tensor_dir;
            return emg::cmd_sample(cfg, opt, out);
        }
        emg::BenchOptions opt;
        if (!sample_counts.empty()) {
            opt.sample_counts.clear();
            for (const long long j : sample_counts)
                opt.sample_counts.push_back(static_cast<emg::Index>(j));
        }
        if (!grids.empty()) opt.inverse_grid_sizes = grids;
        opt.extrapolate_to = static_cast<emg::Index>(extrapolate_to);
        return emg::cmd_bench(cfg, opt, out);
    });
}
