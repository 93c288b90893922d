// SPDX-License-Identifier: Apache-2.0
#include "emgtensor/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "emgtensor/fd_operator.hpp"
#include "emgtensor/ht_io.hpp"
#include "emgtensor/ht_truncation.hpp"
#include "emgtensor/mh.hpp"
#include "emgtensor/tensorization.hpp"

namespace emg {

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw MissingArtifactError("cannot open output file: " + path.string());
    return os;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Eigen::VectorXd synthetic_or_loaded_data(const ExperimentConfig& cfg,
                                         const DenseForwardMap& dense,
                                         const std::string& data_path) {
    if (!data_path.empty()) {
        std::ifstream is(data_path);
        if (!is) throw MissingArtifactError("cannot open data file: " + data_path);
        std::vector<double> vals;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#' || line == "value") continue;
            vals.push_back(std::stod(line));
        }
        Eigen::VectorXd data(static_cast<Index>(vals.size()));
        for (std::size_t i = 0; i < vals.size(); ++i)
            data[static_cast<Index>(i)] = vals[i];
        return data;
    }
    RngStream noise(cfg.seed, "noise");
    return add_noise(dense.evaluate_at(cfg.p_ref, cfg.ref_direction), cfg.setup.xi,
                     noise);
}

void write_chain_csv(const fs::path& path, const Chain& chain) {
    std::ofstream os = open_out(path);
    os << "step,p1,p2,p3,direction,accepted,phi,elapsed_s\n";
    for (Index j = 0; j < chain.length(); ++j) {
        const auto uj = static_cast<std::size_t>(j);
        os << j << ',' << fmt(chain.samples[uj][0]) << ',' << fmt(chain.samples[uj][1])
           << ',' << fmt(chain.samples[uj][2]) << ',' << chain.directions[uj] << ','
           << static_cast<int>(chain.accepted[uj]) << ',' << fmt(chain.phis[uj]) << ','
           << fmt(chain.elapsed_seconds[uj]) << '\n';
    }
}

nlohmann::json stats_json(const Chain& chain, const ChainStats& stats,
                          const std::string& mode, double t_precompute) {
    nlohmann::json j;
    j["mode"] = mode;
    j["acceptance_rate"] = stats.acceptance_rate;
    j["accepted_count"] = stats.accepted_count;
    j["mean"] = {stats.mean[0], stats.mean[1], stats.mean[2]};
    j["mad"] = {stats.mad[0], stats.mad[1], stats.mad[2]};
    j["var"] = {stats.var[0], stats.var[1], stats.var[2]};
    j["direction_freq"] = {stats.direction_freq[0], stats.direction_freq[1],
                           stats.direction_freq[2]};
    nlohmann::json timing;
    const double med = median_seconds(chain.elapsed_seconds);
    if (mode == "TA") {
        timing["T_p"] = t_precompute;
        timing["T_e_median"] = med;
    } else {
        timing["T_p"] = nullptr;
        timing["T_s_median"] = med;
    }
    timing["speedup_measured"] = nullptr;
    timing["speedup_model"] = nullptr;
    j["timing"] = timing;
    return j;
}

fs::path tensor_path(const fs::path& dir, int direction) {
    return dir / ("solution_d" + std::to_string(direction) + ".ht");
}

struct LoadedSolution {
    SolutionTensor sol;
    double t_precompute = 0.0;
};

LoadedSolution load_solution(const ExperimentConfig& cfg, const fs::path& dir) {
    const fs::path meta_path = dir / "solution_meta.json";
    if (!fs::exists(meta_path))
        throw MissingArtifactError(
            "no precomputed solution at " + dir.string() +
            " (run `emgtensor precompute --config ...` first)");
    std::ifstream is(meta_path);
    nlohmann::json meta;
    is >> meta;
    if (meta.value("forward_hash", "") != cfg.forward_hash())
        throw MissingArtifactError(
            "precomputed solution at " + dir.string() +
            " was built from a different model configuration; rerun precompute");
    LoadedSolution out;
    out.sol.grid = cfg.grid();
    out.sol.t_steps = cfg.model.t_steps;
    out.sol.spatial_nodes = cfg.model.spatial_nodes();
    out.sol.trunc_tol = cfg.pcg.trunc_tol;
    out.sol.model_hash = meta.value("forward_hash", "");
    out.t_precompute = meta.value("precompute_seconds_total", 0.0);
    for (int dir_k = 1; dir_k <= 3; ++dir_k) {
        const fs::path p = tensor_path(dir, dir_k);
        if (!fs::exists(p))
            throw MissingArtifactError("missing tensor file " + p.string() +
                                       " (run `emgtensor precompute` first)");
        out.sol.per_direction[static_cast<std::size_t>(dir_k - 1)] = ht_load(p);
    }
    return out;
}

} // namespace

int cmd_forward(const ExperimentConfig& cfg, const ForwardOptions& opt,
                const std::string& out_dir) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const Eigen::Vector3d p = opt.p.value_or(cfg.p_ref);
    const int direction = opt.direction.value_or(cfg.ref_direction);
    if (direction < 1 || direction > 3)
        throw InvalidArgumentError("forward: direction must be 1, 2 or 3");
    if (!cfg.cond.contains(p))
        throw InvalidArgumentError("forward: p outside [s_minus, s_plus]^3");
    const Index t_snapshot = opt.t.value_or(cfg.model.t_steps - 1);
    if (t_snapshot < 0 || t_snapshot >= cfg.model.t_steps)
        throw InvalidArgumentError("forward: time index out of range");

    const MuscleModel model = cfg.model.with_direction(direction);
    const ParameterGrid grid = cfg.grid();
    const AffineOperator aff = affine_decomposition(model, cfg.cond, grid.midpoint());
    const RhsComponents rhs = assemble_rhs(model);
    const ForwardFactorization fact(aff, p);

    const auto nodes = electrode_nodes(model, cfg.setup);
    std::ofstream obs = open_out(dir / "observations.csv");
    obs << "electrode,t,value\n";
    Eigen::VectorXd snapshot;
    for (Index t = 0; t < model.t_steps; ++t) {
        const Eigen::VectorXd phi = fact.solve(rhs, p, t);
        if (t == t_snapshot) snapshot = phi;
        for (std::size_t e = 0; e < nodes.size(); ++e)
            obs << e << ',' << t << ',' << fmt(phi[nodes[e]]) << '\n';
    }

    std::ofstream field = open_out(dir / "field.csv");
    field << "node_index,x,y,z,value\n";
    for (Index i = 0; i < snapshot.size(); ++i) {
        const Eigen::Vector3d x = model.node_position(i);
        field << i << ',' << fmt(x[0]) << ',' << fmt(x[1]) << ',' << fmt(x[2]) << ','
              << fmt(snapshot[i]) << '\n';
    }
    std::cout << "forward: wrote " << (dir / "field.csv").string() << " (t=" << t_snapshot
              << ") and observations.csv\n";
    return kExitOk;
}

int cmd_precompute(const ExperimentConfig& cfg, const std::string& out_dir) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const ParameterGrid grid = cfg.grid();
    const AffineOperator aff = affine_decomposition(cfg.model, cfg.cond, grid.midpoint());
    SolutionTensor sol = precompute_solution(cfg.model, cfg.cond, aff, grid, cfg.pcg);
    sol.model_hash = cfg.forward_hash();

    for (int dir_k = 1; dir_k <= 3; ++dir_k)
        ht_save(sol.per_direction[static_cast<std::size_t>(dir_k - 1)],
                tensor_path(dir, dir_k));

    std::ofstream ranks = open_out(dir / "ranks.csv");
    ranks << "direction,node,rank\n";
    std::ofstream svs = open_out(dir / "singular_values.csv");
    svs << "direction,node,index,sigma,sigma_rel\n";
    for (int dir_k = 1; dir_k <= 3; ++dir_k) {
        const HtTensor<double>& x = sol.per_direction[static_cast<std::size_t>(dir_k - 1)];
        const auto r = ht_ranks(x);
        for (int id = 0; id < x.tree.node_count(); ++id)
            ranks << dir_k << ',' << x.tree.label_string(id) << ','
                  << r[static_cast<std::size_t>(id)] << '\n';
        const auto sv = node_singular_values(x);
        for (int id = 0; id < x.tree.node_count(); ++id) {
            const Eigen::VectorXd& s = sv[static_cast<std::size_t>(id)];
            const double top = s.size() > 0 ? s[0] : 0.0;
            for (Index i = 0; i < s.size(); ++i)
                svs << dir_k << ',' << x.tree.label_string(id) << ',' << i << ','
                    << fmt(s[i]) << ',' << fmt(top > 0 ? s[i] / top : 0.0) << '\n';
        }
    }

    nlohmann::json meta;
    meta["forward_hash"] = sol.model_hash;
    meta["trunc_tol"] = sol.trunc_tol;
    meta["t_steps"] = sol.t_steps;
    meta["spatial_nodes"] = sol.spatial_nodes;
    meta["grid"] = {{"s_minus", cfg.cond.s_minus},
                    {"s_plus", cfg.cond.s_plus},
                    {"h_sigma", cfg.h_sigma},
                    {"sizes", {grid.sizes()[0], grid.sizes()[1], grid.sizes()[2]}}};
    for (int dir_k = 1; dir_k <= 3; ++dir_k) {
        const auto k = static_cast<std::size_t>(dir_k - 1);
        meta["pcg_history"]["direction_" + std::to_string(dir_k)] = sol.history[k];
        meta["precompute_seconds"]["direction_" + std::to_string(dir_k)] =
            sol.precompute_seconds[k];
    }
    meta["precompute_seconds_total"] = sol.total_precompute_seconds();
    std::ofstream meta_os = open_out(dir / "solution_meta.json");
    meta_os << meta.dump(2) << '\n';

    std::cout << "precompute: wrote 3 direction tensors to " << dir.string() << " in "
              << sol.total_precompute_seconds() << " s\n";
    return kExitOk;
}

int cmd_sample(const ExperimentConfig& cfg, const SampleOptions& opt,
               const std::string& out_dir) {
    if (opt.mode != "SA" && opt.mode != "TA")
        throw InvalidArgumentError("sample: mode must be SA or TA");
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    const ParameterGrid grid = cfg.grid();
    const AffineOperator aff = affine_decomposition(cfg.model, cfg.cond, grid.midpoint());
    const DenseForwardMap dense(cfg.model, cfg.setup, aff, grid);

    PosteriorProblem problem;
    problem.data = synthetic_or_loaded_data(cfg, dense, opt.data_path);
    problem.xi = cfg.setup.xi;
    problem.grid = grid;
    problem.delta = cfg.delta;
    problem.j_samples = cfg.samples;
    problem.burn_in = cfg.burn_in;
    problem.seed = cfg.seed;
    problem.sample_direction = cfg.sample_direction;
    problem.start = cfg.p_ref;
    problem.start_direction = cfg.ref_direction;

    Chain chain;
    if (opt.mode == "SA") {
        chain = run_chain(problem, dense);
    } else {
        const fs::path tdir = opt.tensor_dir.empty() ? dir : fs::path(opt.tensor_dir);
        const LoadedSolution loaded = load_solution(cfg, tdir);
        const TensorForwardMap ta(loaded.sol, cfg.model, cfg.setup);
        chain = run_chain(problem, ta);
        chain.t_precompute = loaded.t_precompute;
    }

    write_chain_csv(dir / ("chain_" + opt.mode + ".csv"), chain);
    const ChainStats stats = chain_stats(chain, cfg.burn_in);
    std::ofstream os = open_out(dir / ("stats_" + opt.mode + ".json"));
    os << stats_json(chain, stats, opt.mode, chain.t_precompute).dump(2) << '\n';
    std::cout << "sample(" << opt.mode << "): acceptance rate " << stats.acceptance_rate
              << ", accepted " << stats.accepted_count << " of "
              << (chain.length() - cfg.burn_in) << " post-burn-in steps\n";
    return kExitOk;
}

int cmd_bench(const ExperimentConfig& cfg, const BenchOptions& opt,
              const std::string& out_dir) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    // fixed grid size, varying sample count
    {
        const ParameterGrid grid = cfg.grid();
        const AffineOperator aff =
            affine_decomposition(cfg.model, cfg.cond, grid.midpoint());
        const DenseForwardMap dense(cfg.model, cfg.setup, aff, grid);

        const auto t0 = std::chrono::steady_clock::now();
        SolutionTensor sol = precompute_solution(cfg.model, cfg.cond, aff, grid, cfg.pcg);
        const std::chrono::duration<double> dt_p = std::chrono::steady_clock::now() - t0;
        const double t_p = dt_p.count();
        const TensorForwardMap ta(sol, cfg.model, cfg.setup);

        PosteriorProblem problem;
        {
            RngStream noise(cfg.seed, "noise");
            problem.data = add_noise(dense.evaluate_at(cfg.p_ref, cfg.ref_direction),
                                     cfg.setup.xi, noise);
        }
        problem.xi = cfg.setup.xi;
        problem.grid = grid;
        problem.delta = cfg.delta;
        problem.burn_in = 0;
        problem.seed = cfg.seed;
        problem.sample_direction = cfg.sample_direction;
        problem.start = cfg.p_ref;
        problem.start_direction = cfg.ref_direction;

        std::ofstream os = open_out(dir / "bench_samples.csv");
        os << "j,t_p_s,t_s_median,t_e_median,t_sa_total,t_ta_total,speedup_measured,"
              "speedup_model\n";
        for (const Index j : opt.sample_counts) {
            problem.j_samples = j;
            auto t1 = std::chrono::steady_clock::now();
            const Chain chain_sa = run_chain(problem, dense);
            const std::chrono::duration<double> dt_sa =
                std::chrono::steady_clock::now() - t1;
            t1 = std::chrono::steady_clock::now();
            const Chain chain_ta = run_chain(problem, ta);
            const std::chrono::duration<double> dt_ta =
                std::chrono::steady_clock::now() - t1;
            const double t_s = median_seconds(chain_sa.elapsed_seconds);
            const double t_e = median_seconds(chain_ta.elapsed_seconds);
            const double measured = dt_sa.count() / (t_p + dt_ta.count());
            const double model = speedup_model(static_cast<double>(j), t_s, t_p, t_e);
            os << j << ',' << fmt(t_p) << ',' << fmt(t_s) << ',' << fmt(t_e) << ','
               << fmt(dt_sa.count()) << ',' << fmt(dt_ta.count()) << ',' << fmt(measured)
               << ',' << fmt(model) << '\n';
            std::cout << "bench: J=" << j << " measured speedup " << measured << " model "
                      << model << '\n';
        }
    }

    // varying grid size, extrapolated sample count
    std::ofstream os = open_out(dir / "bench_grids.csv");
    os << "h_inv,t_p_s,t_s_median,t_e_median,speedup_extrapolated\n";
    for (const int g : opt.inverse_grid_sizes) {
        ExperimentConfig scaled = cfg;
        scaled.model.h_m = 1.0 / g;
        scaled.model.validate();
        const ParameterGrid grid = scaled.grid();
        const AffineOperator aff =
            affine_decomposition(scaled.model, scaled.cond, grid.midpoint());
        const DenseForwardMap dense(scaled.model, scaled.setup, aff, grid);
        const auto t0 = std::chrono::steady_clock::now();
        SolutionTensor sol =
            precompute_solution(scaled.model, scaled.cond, aff, grid, scaled.pcg);
        const std::chrono::duration<double> dt_p = std::chrono::steady_clock::now() - t0;
        const TensorForwardMap ta(sol, scaled.model, scaled.setup);

        PosteriorProblem problem;
        {
            RngStream noise(scaled.seed, "noise");
            problem.data =
                add_noise(dense.evaluate_at(scaled.p_ref, scaled.ref_direction),
                          scaled.setup.xi, noise);
        }
        problem.xi = scaled.setup.xi;
        problem.grid = grid;
        problem.delta = scaled.delta;
        problem.burn_in = 0;
        problem.j_samples = opt.probe_samples;
        problem.seed = scaled.seed;
        problem.sample_direction = scaled.sample_direction;
        problem.start = scaled.p_ref;
        problem.start_direction = scaled.ref_direction;

        const Chain chain_sa = run_chain(problem, dense);
        const Chain chain_ta = run_chain(problem, ta);
        const double t_s = median_seconds(chain_sa.elapsed_seconds);
        const double t_e = median_seconds(chain_ta.elapsed_seconds);
        const double extrapolated = speedup_model(
            static_cast<double>(opt.extrapolate_to), t_s, dt_p.count(), t_e);
        os << g << ',' << fmt(dt_p.count()) << ',' << fmt(t_s) << ',' << fmt(t_e) << ','
           << fmt(extrapolated) << '\n';
        std::cout << "bench: h=1/" << g << " extrapolated speedup " << extrapolated
                  << " at J=" << opt.extrapolate_to << '\n';
    }
    return kExitOk;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const InvalidArgumentError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << '\n';
        return kExitMissingArtifact;
    } catch (const SolverBreakdownError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumericalFailure;
    } catch (const NumericalFailureError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace emg
