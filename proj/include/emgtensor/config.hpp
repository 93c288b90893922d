// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "emgtensor/mh.hpp"
#include "emgtensor/muscle_model.hpp"
#include "emgtensor/parameter_grid.hpp"
#include "emgtensor/pcg.hpp"

namespace emg {

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const std::string& key,
                                         const std::string& path) {
    if (!j.contains(key))
        throw InvalidArgumentError("missing config key: " +
                                   (path.empty() ? key : path + "." + key));
    return j.at(key);
}

template <typename T>
T require(const nlohmann::json& j, const std::string& key, const std::string& path) {
    try {
        return require_key(j, key, path).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgumentError("bad config value for key: " +
                                   (path.empty() ? key : path + "." + key) + " (" +
                                   e.what() + ")");
    }
}

inline Eigen::Vector3d require_vec3(const nlohmann::json& j, const std::string& key,
                                    const std::string& path) {
    const auto v = require<std::vector<double>>(j, key, path);
    if (v.size() != 3)
        throw InvalidArgumentError("config key " + path + "." + key +
                                   " must have 3 entries");
    return {v[0], v[1], v[2]};
}

} // namespace detail

/// Everything an experiment run needs, parsed from one JSON file.
struct ExperimentConfig {
    MuscleModel model;
    ConductivitySpec cond;
    MeasurementSetup setup;
    double h_sigma = 0.001;
    Eigen::Vector3d p_ref{0.893, 8.930, 0.893};
    int ref_direction = 2;
    PcgConfig pcg;
    Index samples = 10000;
    Index burn_in = 200;
    double delta = 1.5;
    bool sample_direction = true;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    ParameterGrid grid() const {
        return build_parameter_grid(cond.s_minus, cond.s_plus, h_sigma);
    }

    void validate() const {
        model.validate();
        cond.validate();
        setup.validate(model.extent);
        if (!cond.contains(p_ref))
            throw InvalidArgumentError("config: reference.p outside [s_minus, s_plus]^3");
        if (ref_direction < 1 || ref_direction > 3)
            throw InvalidArgumentError("config: reference.direction must be 1, 2 or 3");
        pcg.validate();
        if (burn_in >= samples)
            throw InvalidArgumentError("config: sampling.burn_in must be < samples");
        if (delta <= 0) throw InvalidArgumentError("config: sampling.delta must be > 0");
        grid();
    }

    /// Stable hash of the forward-model parameters; stored next to
    /// precomputed tensors so samplers can detect mismatched artifacts.
    std::string forward_hash() const {
        nlohmann::json j;
        j["extent"] = {model.extent[0], model.extent[1], model.extent[2]};
        j["h_m"] = model.h_m;
        j["fibers"] = {model.fiber_layout[0], model.fiber_layout[1]};
        j["fiber_points"] = model.fiber_points;
        j["ap"] = {model.ap.r1, model.ap.r2, model.ap.r3};
        j["velocity"] = model.velocity;
        j["beta"] = model.beta;
        j["t_steps"] = model.t_steps;
        j["h_t"] = model.h_t;
        j["sigma_e"] = {cond.sigma_e[0], cond.sigma_e[1], cond.sigma_e[2]};
        j["bounds"] = {cond.s_minus, cond.s_plus};
        j["h_sigma"] = h_sigma;
        const std::string dump = j.dump();
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (const char c : dump) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001B3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using detail::require;
    using detail::require_key;
    using detail::require_vec3;
    ExperimentConfig cfg;

    const auto& geometry = require_key(j, "geometry", "");
    cfg.model.extent = require_vec3(geometry, "extent", "geometry");
    cfg.model.h_m = require<double>(geometry, "h_m", "geometry");

    const auto& fibers = require_key(j, "fibers", "");
    const auto layout = require<std::vector<int>>(fibers, "layout", "fibers");
    if (layout.size() != 2)
        throw InvalidArgumentError("config key fibers.layout must have 2 entries");
    cfg.model.fiber_layout = {layout[0], layout[1]};
    cfg.model.fiber_points = require<int>(fibers, "points_per_fiber", "fibers");
    const Eigen::Vector3d ap = require_vec3(fibers, "rosenfalck", "fibers");
    cfg.model.ap = {ap[0], ap[1], ap[2]};
    cfg.model.velocity = require<double>(fibers, "velocity", "fibers");
    cfg.model.beta = require<double>(fibers, "beta", "fibers");

    const auto& time = require_key(j, "time", "");
    cfg.model.t_steps = require<int>(time, "steps", "time");
    cfg.model.h_t = require<double>(time, "h_t", "time");

    const auto& cond = require_key(j, "conductivity", "");
    cfg.cond.sigma_e = require_vec3(cond, "sigma_e", "conductivity");
    cfg.cond.s_minus = require<double>(cond, "s_minus", "conductivity");
    cfg.cond.s_plus = require<double>(cond, "s_plus", "conductivity");
    cfg.h_sigma = require<double>(cond, "h_sigma", "conductivity");

    const auto& ref = require_key(j, "reference", "");
    cfg.p_ref = require_vec3(ref, "p", "reference");
    cfg.ref_direction = require<int>(ref, "direction", "reference");
    cfg.model.direction = cfg.ref_direction;

    const auto& noise = require_key(j, "noise", "");
    const double xi = require<double>(noise, "xi", "noise");

    const auto& electrodes = require_key(j, "electrodes", "");
    if (electrodes.contains("positions")) {
        const auto pos =
            require<std::vector<std::vector<double>>>(electrodes, "positions", "electrodes");
        cfg.setup.electrodes.resize(static_cast<Index>(pos.size()), 3);
        for (std::size_t e = 0; e < pos.size(); ++e) {
            if (pos[e].size() != 3)
                throw InvalidArgumentError("electrodes.positions entries must have 3 coords");
            cfg.setup.electrodes.row(static_cast<Index>(e)) =
                Eigen::Vector3d(pos[e][0], pos[e][1], pos[e][2]);
        }
        cfg.setup.xi = xi;
    } else {
        const auto grid_layout = require<std::vector<int>>(electrodes, "layout", "electrodes");
        if (grid_layout.size() != 2)
            throw InvalidArgumentError("config key electrodes.layout must have 2 entries");
        cfg.setup =
            MeasurementSetup::grid(cfg.model.extent, grid_layout[0], grid_layout[1], xi);
    }

    const auto& pcg = require_key(j, "pcg", "");
    cfg.pcg.epsilon = require<double>(pcg, "epsilon", "pcg");
    cfg.pcg.k_max = require<int>(pcg, "k_max", "pcg");
    cfg.pcg.trunc_tol = require<double>(pcg, "trunc_tol", "pcg");

    const auto& sampling = require_key(j, "sampling", "");
    cfg.samples = require<Index>(sampling, "samples", "sampling");
    cfg.burn_in = require<Index>(sampling, "burn_in", "sampling");
    cfg.delta = require<double>(sampling, "delta", "sampling");
    cfg.sample_direction = require<bool>(sampling, "sample_direction", "sampling");

    cfg.seed = require<std::uint64_t>(j, "seed", "");
    cfg.output_dir = require<std::string>(j, "output_dir", "");

    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw InvalidArgumentError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgumentError("config parse error in " + path.string() + ": " +
                                   e.what());
    }
    return parse_experiment_config(j);
}

} // namespace emg
