// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "emgtensor/fd_operator.hpp"
#include "emgtensor/parameter_grid.hpp"
#include "emgtensor/rng.hpp"
#include "emgtensor/tensorization.hpp"

namespace emg {

/// Covariance-weighted norm ||Xi^{-1/2} v|| for Xi = xi * Identity.
inline double xi_norm(const Eigen::VectorXd& v, double xi) {
    if (xi <= 0) throw InvalidArgumentError("xi_norm: xi must be > 0");
    return v.norm() / std::sqrt(xi);
}

/// Misfit potential Phi = 1/2 ||data - g||_Xi^2 - 1/2 ||data||_Xi^2.
inline double potential(const Eigen::VectorXd& g, const Eigen::VectorXd& data,
                        double xi) {
    if (g.size() != data.size())
        throw InvalidArgumentError("potential: prediction and data sizes differ");
    const double r = xi_norm(data - g, xi);
    const double d = xi_norm(data, xi);
    return 0.5 * r * r - 0.5 * d * d;
}

/// Acceptance probability min{1, exp(Phi_old - Phi_new)}: equals one exactly
/// when the proposal's residual norm does not exceed the current one.
inline double acceptance(double phi_old, double phi_new) {
    const double diff = phi_old - phi_new;
    if (diff >= 0.0) return 1.0;
    return std::exp(diff);
}

/// Forward map interface shared by the standard (dense solve) and the
/// tensorized (precomputed tensor) samplers: maps grid indices plus fiber
/// direction to the stacked electrode-by-time signal.
class ForwardMap {
public:
    virtual ~ForwardMap() = default;
    virtual Eigen::VectorXd evaluate(const std::array<Index, 3>& idx,
                                     int direction) const = 0;
    virtual Index signal_size() const = 0;
};

/// Standard-algorithm forward map: one sparse factorization and T solves
/// per evaluation, observed at the electrodes.
class DenseForwardMap final : public ForwardMap {
public:
    DenseForwardMap(const MuscleModel& model, const MeasurementSetup& setup,
                    const AffineOperator& aff, const ParameterGrid& grid)
        : model_(model), setup_(setup), aff_(aff), grid_(grid),
          nodes_(electrode_nodes(model, setup)) {
        for (int dir = 1; dir <= 3; ++dir)
            rhs_[static_cast<std::size_t>(dir - 1)] =
                assemble_rhs(model.with_direction(dir));
    }

    Eigen::VectorXd evaluate(const std::array<Index, 3>& idx, int direction) const override {
        const Eigen::Vector3d p = grid_.value_at(idx);
        const RhsComponents& rhs = rhs_[static_cast<std::size_t>(direction - 1)];
        const ForwardFactorization fact(aff_, p);
        Eigen::MatrixXd obs(static_cast<Index>(nodes_.size()), rhs.t_steps);
        for (Index t = 0; t < rhs.t_steps; ++t) {
            const Eigen::VectorXd phi = fact.solve(rhs, p, t);
            for (std::size_t e = 0; e < nodes_.size(); ++e)
                obs(static_cast<Index>(e), t) = phi[nodes_[e]];
        }
        return stack_observations(obs);
    }

    Index signal_size() const override {
        return static_cast<Index>(nodes_.size()) * rhs_[0].t_steps;
    }

    /// Signal at an arbitrary (off-grid) conductivity; used to synthesize
    /// reference data.
    Eigen::VectorXd evaluate_at(const Eigen::Vector3d& p, int direction) const {
        const RhsComponents& rhs = rhs_[static_cast<std::size_t>(direction - 1)];
        const ForwardFactorization fact(aff_, p);
        Eigen::MatrixXd obs(static_cast<Index>(nodes_.size()), rhs.t_steps);
        for (Index t = 0; t < rhs.t_steps; ++t) {
            const Eigen::VectorXd phi = fact.solve(rhs, p, t);
            for (std::size_t e = 0; e < nodes_.size(); ++e)
                obs(static_cast<Index>(e), t) = phi[nodes_[e]];
        }
        return stack_observations(obs);
    }

private:
    MuscleModel model_;
    MeasurementSetup setup_;
    AffineOperator aff_;
    ParameterGrid grid_;
    std::vector<Index> nodes_;
    std::array<RhsComponents, 3> rhs_;
};

/// Tensorized-algorithm forward map: evaluates the precomputed HT solution.
class TensorForwardMap final : public ForwardMap {
public:
    TensorForwardMap(const SolutionTensor& sol, const MuscleModel& model,
                     const MeasurementSetup& setup)
        : evaluator_(sol, model, setup) {}

    Eigen::VectorXd evaluate(const std::array<Index, 3>& idx, int direction) const override {
        return evaluator_.evaluate(direction, idx);
    }

    Index signal_size() const override { return evaluator_.signal_size(); }

private:
    SolutionEvaluator evaluator_;
};

struct PosteriorProblem {
    Eigen::VectorXd data; // measured signal, electrode fastest
    double xi = 2.0;
    ParameterGrid grid;
    double delta = 1.5;
    Index j_samples = 10000;
    Index burn_in = 200;
    std::uint64_t seed = 0;
    bool sample_direction = true;
    Eigen::Vector3d start{0.893, 8.930, 0.893}; // reference conductivity
    int start_direction = 2;

    void validate() const {
        if (delta <= 0) throw InvalidArgumentError("PosteriorProblem: delta must be > 0");
        if (xi <= 0) throw InvalidArgumentError("PosteriorProblem: xi must be > 0");
        if (burn_in >= j_samples)
            throw InvalidArgumentError("PosteriorProblem: burn_in must be < J");
    }
};

struct Chain {
    std::vector<std::array<Index, 3>> indices;  // grid indices per step
    std::vector<Eigen::Vector3d> samples;       // conductivity values per step
    std::vector<int> directions;                // fiber axis per step
    std::vector<char> accepted;                 // step 0 counts as accepted
    std::vector<double> phis;                   // potential of the kept sample
    std::vector<double> elapsed_seconds;        // wall time per step
    double t_precompute = 0.0;                  // tensor precompute time if TA

    Index length() const { return static_cast<Index>(samples.size()); }
};

struct ChainStats {
    double acceptance_rate = 0.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d mad = Eigen::Vector3d::Zero();
    Eigen::Vector3d var = Eigen::Vector3d::Zero();
    std::array<double, 3> direction_freq{0, 0, 0};
    Index accepted_count = 0;
};

/// Componentwise uniform proposal on the grid values inside
/// [current - delta, current + delta]; draw order is axis 1, 2, 3 (then the
/// direction draw, when enabled, in run_chain). The window always contains
/// the current point, so it is never empty.
inline std::array<Index, 3> propose(const std::array<Index, 3>& current, double delta,
                                    const ParameterGrid& grid, RngStream& rng) {
    std::array<Index, 3> next{};
    for (int k = 0; k < 3; ++k) {
        const double cur =
            grid.values[static_cast<std::size_t>(k)][current[static_cast<std::size_t>(k)]];
        const auto [lo, hi] = grid.window(k, cur, delta);
        next[static_cast<std::size_t>(k)] =
            lo + static_cast<Index>(rng.uniform_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }
    return next;
}

enum class SamplerMode { SA, TA };

/// Metropolis-Hastings chain over the discrete conductivity grid (and
/// optionally the fiber direction). Consumes two named random streams,
/// "proposal" and "acceptance", in a fixed order, so SA and TA runs with the
/// same seed see identical randomness. The initial point is drawn uniformly
/// from the grid window of radius delta around the configured start.
inline Chain run_chain(const PosteriorProblem& problem, const ForwardMap& forward) {
    problem.validate();
    if (problem.data.size() != forward.signal_size())
        throw InvalidArgumentError("run_chain: data size does not match the forward map");
    RngStream proposal_rng(problem.seed, "proposal");
    RngStream acceptance_rng(problem.seed, "acceptance");

    Chain chain;
    chain.indices.reserve(static_cast<std::size_t>(problem.j_samples));
    chain.samples.reserve(static_cast<std::size_t>(problem.j_samples));

    const auto step_clock = [] { return std::chrono::steady_clock::now(); };

    // initial sample: uniform on the delta-window around the start point
    std::array<Index, 3> start_idx{};
    for (int k = 0; k < 3; ++k)
        start_idx[static_cast<std::size_t>(k)] =
            problem.grid.nearest_index(k, problem.start[k]);
    auto t0 = step_clock();
    std::array<Index, 3> cur_idx = propose(start_idx, problem.delta, problem.grid, proposal_rng);
    int cur_dir = problem.start_direction;
    double cur_phi = potential(forward.evaluate(cur_idx, cur_dir), problem.data, problem.xi);
    std::chrono::duration<double> dt = step_clock() - t0;
    chain.indices.push_back(cur_idx);
    chain.samples.push_back(problem.grid.value_at(cur_idx));
    chain.directions.push_back(cur_dir);
    chain.accepted.push_back(1);
    chain.phis.push_back(cur_phi);
    chain.elapsed_seconds.push_back(dt.count());

    for (Index j = 1; j < problem.j_samples; ++j) {
        t0 = step_clock();
        const std::array<Index, 3> prop_idx =
            propose(cur_idx, problem.delta, problem.grid, proposal_rng);
        const int prop_dir =
            problem.sample_direction
                ? 1 + static_cast<int>(proposal_rng.uniform_below(3))
                : cur_dir;
        const double c = acceptance_rng.uniform01();
        const double prop_phi =
            potential(forward.evaluate(prop_idx, prop_dir), problem.data, problem.xi);
        const double a = acceptance(cur_phi, prop_phi);
        const bool accept = (c <= a);
        if (accept) {
            cur_idx = prop_idx;
            cur_dir = prop_dir;
            cur_phi = prop_phi;
        }
        dt = step_clock() - t0;
        chain.indices.push_back(cur_idx);
        chain.samples.push_back(problem.grid.value_at(cur_idx));
        chain.directions.push_back(cur_dir);
        chain.accepted.push_back(accept ? 1 : 0);
        chain.phis.push_back(cur_phi);
        chain.elapsed_seconds.push_back(dt.count());
    }
    return chain;
}

/// Statistics over the accepted post-burn-in samples, with the paper's
/// denominators: MAD uses the accepted count, the variance uses count - 1.
inline ChainStats chain_stats(const Chain& chain, Index burn_in) {
    if (burn_in < 0 || burn_in >= chain.length())
        throw InvalidArgumentError("chain_stats: burn_in out of range");
    std::vector<Index> picks;
    for (Index j = burn_in; j < chain.length(); ++j)
        if (chain.accepted[static_cast<std::size_t>(j)]) picks.push_back(j);
    if (picks.size() < 2)
        throw InvalidArgumentError("chain_stats: need at least 2 accepted samples");

    ChainStats stats;
    stats.accepted_count = static_cast<Index>(picks.size());
    stats.acceptance_rate = static_cast<double>(picks.size()) /
                            static_cast<double>(chain.length() - burn_in);
    for (const Index j : picks)
        stats.mean += chain.samples[static_cast<std::size_t>(j)];
    stats.mean /= static_cast<double>(picks.size());
    for (const Index j : picks) {
        const Eigen::Vector3d d = chain.samples[static_cast<std::size_t>(j)] - stats.mean;
        stats.mad += d.cwiseAbs();
        stats.var += d.cwiseProduct(d);
        stats.direction_freq[static_cast<std::size_t>(
            chain.directions[static_cast<std::size_t>(j)] - 1)] += 1.0;
    }
    stats.mad /= static_cast<double>(picks.size());
    stats.var /= static_cast<double>(picks.size() - 1);
    for (double& f : stats.direction_freq) f /= static_cast<double>(picks.size());
    return stats;
}

/// Median of the per-step times; resistant to scheduler noise.
inline double median_seconds(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

/// Predicted speedup of the tensorized over the standard sampler for J
/// samples: J T_s / (T_p + J T_e).
inline double speedup_model(double j_samples, double t_s, double t_p, double t_e) {
    return j_samples * t_s / (t_p + j_samples * t_e);
}

} // namespace emg
