// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <string>
#include <vector>

#include "emgtensor/fd_operator.hpp"
#include "emgtensor/ht_tensor.hpp"
#include "emgtensor/parameter_grid.hpp"
#include "emgtensor/pcg.hpp"

namespace emg {

/// Dimension tree of the 5-mode solution tensor (space, time, p1, p2, p3):
/// space and time grouped, parameter modes split off one by one.
inline DimensionTree solution_dimension_tree() {
    return DimensionTree::build(TreeSpec::inner(
        TreeSpec::inner(TreeSpec::leaf(1), TreeSpec::leaf(2)),
        TreeSpec::inner(TreeSpec::leaf(3),
                        TreeSpec::inner(TreeSpec::leaf(4), TreeSpec::leaf(5)))));
}

/// CP operator of the all-parameters block system over the modes
/// (space, time, p1, p2, p3). Term 0 carries A0 with identities elsewhere;
/// term k carries Ak in the space mode and diag(p^(k) - centering) in
/// parameter mode k. Representation rank is exactly 4; the time mode is
/// always the identity since the operator is time-independent.
inline CpOperator<double> tensorize_operator(const AffineOperator& aff,
                                             const ParameterGrid& grid, Index t_steps) {
    const auto sizes = grid.sizes();
    CpOperator<double> op({aff.n, t_steps, sizes[0], sizes[1], sizes[2]});
    using Factor = CpOperator<double>::Factor;
    const Factor id_t = CpOperator<double>::identity(t_steps);
    const std::array<Factor, 3> id_p = {CpOperator<double>::identity(sizes[0]),
                                        CpOperator<double>::identity(sizes[1]),
                                        CpOperator<double>::identity(sizes[2])};
    op.add_term({aff.a0, id_t, id_p[0], id_p[1], id_p[2]});
    for (int k = 0; k < 3; ++k) {
        std::vector<Factor> term = {aff.ak[static_cast<std::size_t>(k)], id_t, id_p[0],
                                    id_p[1], id_p[2]};
        const Eigen::VectorXd centered =
            grid.values[static_cast<std::size_t>(k)].array() - aff.p_ref0[k];
        term[static_cast<std::size_t>(2 + k)] = CpOperator<double>::diagonal(centered);
        op.add_term(std::move(term));
    }
    return op;
}

/// CP right-hand side over (space, time, p1, p2, p3): each directional
/// component bk is compressed by a truncated SVD (relative Frobenius tail
/// <= svd_tol) and paired with the raw grid values in parameter mode k and
/// all-ones vectors elsewhere, realizing b(p, t) = sum_k p_k bk(:, t).
inline CpVector<double> tensorize_rhs(const RhsComponents& rhs, const ParameterGrid& grid,
                                      double svd_tol) {
    if (svd_tol < 0) throw InvalidArgumentError("tensorize_rhs: svd_tol must be >= 0");
    const auto sizes = grid.sizes();
    const Index n_space = rhs.bk[0].rows();
    CpVector<double> b({n_space, rhs.t_steps, sizes[0], sizes[1], sizes[2]});
    const std::array<Eigen::VectorXd, 3> ones = {Eigen::VectorXd::Ones(sizes[0]),
                                                 Eigen::VectorXd::Ones(sizes[1]),
                                                 Eigen::VectorXd::Ones(sizes[2])};
    for (int k = 0; k < 3; ++k) {
        const Eigen::MatrixXd& bk = rhs.bk[static_cast<std::size_t>(k)];
        const double total = bk.norm();
        if (total == 0.0) continue;
        Eigen::BDCSVD<Eigen::MatrixXd> svd(bk, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& s = svd.singularValues();
        // keep the leading block whose discarded tail stays within budget;
        // svd_tol = 0 drops only numerically zero singular values
        double tail_sq = 0.0;
        Index keep = s.size();
        const double budget_sq = (svd_tol * total) * (svd_tol * total);
        while (keep > 1) {
            const double sig = s[keep - 1];
            const bool negligible = sig <= 1e-15 * s[0];
            const double cand = tail_sq + sig * sig;
            if (!negligible && (svd_tol == 0.0 || cand > budget_sq)) break;
            tail_sq = cand;
            --keep;
        }
        for (Index q = 0; q < keep; ++q) {
            std::vector<Eigen::VectorXd> term = {
                Eigen::VectorXd(svd.matrixU().col(q) * s[q]),
                Eigen::VectorXd(svd.matrixV().col(q)), ones[0], ones[1], ones[2]};
            term[static_cast<std::size_t>(2 + k)] = grid.values[static_cast<std::size_t>(k)];
            b.add_term(std::move(term));
        }
    }
    return b;
}

/// Precomputed parameter-dependent forward solution: one HT tensor per
/// fiber direction over (space, time, p1, p2, p3), plus solver metadata.
struct SolutionTensor {
    std::array<HtTensor<double>, 3> per_direction; // index k <-> fiber axis k+1
    ParameterGrid grid;
    Index t_steps = 0;
    Index spatial_nodes = 0;
    double trunc_tol = 0.0;
    std::string model_hash;
    std::array<std::vector<double>, 3> history;
    std::array<double, 3> precompute_seconds{0, 0, 0};

    double total_precompute_seconds() const {
        return precompute_seconds[0] + precompute_seconds[1] + precompute_seconds[2];
    }
};

/// Solves the 5-mode system once per fiber direction. The right-hand side of
/// each direction is assembled from that direction's membrane potential and
/// compressed with svd_tol = trunc_tol / 10.
inline SolutionTensor precompute_solution(const MuscleModel& model,
                                          const ConductivitySpec& cond,
                                          const AffineOperator& aff,
                                          const ParameterGrid& grid,
                                          const PcgConfig& cfg) {
    cfg.validate();
    const auto sizes = grid.sizes();
    const DimensionTree tree = solution_dimension_tree();
    const CpOperator<double> op = tensorize_operator(aff, grid, model.t_steps);
    const auto precond = Rank1Preconditioner<double>::spatial(
        {aff.n, model.t_steps, sizes[0], sizes[1], sizes[2]}, aff.a0);

    SolutionTensor sol;
    sol.grid = grid;
    sol.t_steps = model.t_steps;
    sol.spatial_nodes = aff.n;
    sol.trunc_tol = cfg.trunc_tol;
    for (int dir = 1; dir <= 3; ++dir) {
        const auto start = std::chrono::steady_clock::now();
        const RhsComponents rhs = assemble_rhs(model.with_direction(dir));
        const CpVector<double> b_cp = tensorize_rhs(rhs, grid, cfg.trunc_tol / 10.0);
        const HtTensor<double> b = cp_to_ht(b_cp, tree);
        const HtTensor<double> x0 = ht_zero<double>(tree, b.mode_sizes);
        try {
            PcgResult<double> res = pcg_solve(op, b, precond, x0, cfg);
            sol.per_direction[static_cast<std::size_t>(dir - 1)] = std::move(res.x);
            sol.history[static_cast<std::size_t>(dir - 1)] = std::move(res.history);
        } catch (const SolverBreakdownError& e) {
            throw SolverBreakdownError(
                "precompute_solution: direction " + std::to_string(dir) + ": " + e.what(),
                e.iteration);
        }
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
        sol.precompute_seconds[static_cast<std::size_t>(dir - 1)] = dt.count();
    }
    (void)cond;
    return sol;
}

/// Fast slice evaluation of a SolutionTensor at fixed parameter indices:
/// returns the stacked electrode-by-time observation vector (electrode
/// fastest), shifted to zero spatial mean per time step exactly like the
/// dense forward solver. After construction the per-sample cost depends on
/// ranks only, not on the parameter grid sizes.
class SolutionEvaluator {
public:
    SolutionEvaluator(const SolutionTensor& sol, const MuscleModel& model,
                      const MeasurementSetup& setup)
        : sol_(sol) {
        const std::vector<Index> nodes = electrode_nodes(model, setup);
        for (int dir = 0; dir < 3; ++dir) {
            const HtTensor<double>& x = sol.per_direction[static_cast<std::size_t>(dir)];
            auto& pre = pre_[static_cast<std::size_t>(dir)];
            const DimensionTree& tree = x.tree;
            pre.node12 = tree.find_label({1, 2});
            if (pre.node12 < 0 || tree.is_leaf(pre.node12) ||
                !tree.is_root(tree.node(pre.node12).parent))
                throw InvalidArgumentError(
                    "SolutionEvaluator: tree must pair space and time under the root");
            pre.left_of_root = (tree.node(tree.root()).left == pre.node12);
            pre.sibling = pre.left_of_root ? tree.node(tree.root()).right
                                           : tree.node(tree.root()).left;
            const int leaf_space = tree.node(pre.node12).left;
            const int leaf_time = tree.node(pre.node12).right;
            const auto& u1 = x.leaf_frames[static_cast<std::size_t>(leaf_space)];
            const auto& u2 = x.leaf_frames[static_cast<std::size_t>(leaf_time)];
            Eigen::MatrixXd sel(static_cast<Index>(nodes.size()), u1.cols());
            for (std::size_t e = 0; e < nodes.size(); ++e)
                sel.row(static_cast<Index>(e)) =
                    u1.row(nodes[e]) - u1.colwise().mean();
            const auto& b12 = x.transfers[static_cast<std::size_t>(pre.node12)];
            pre.obs.resize(static_cast<Index>(nodes.size()) * u2.rows(),
                           static_cast<Index>(b12.size()));
            for (std::size_t i = 0; i < b12.size(); ++i) {
                const Eigen::MatrixXd block = sel * b12[i] * u2.transpose();
                pre.obs.col(static_cast<Index>(i)) =
                    Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
            }
        }
    }

    Index signal_size() const { return pre_[0].obs.rows(); }

    /// direction is the fiber axis (1..3); idx are 0-based grid indices.
    Eigen::VectorXd evaluate(int direction, const std::array<Index, 3>& idx) const {
        if (direction < 1 || direction > 3)
            throw InvalidArgumentError("evaluate_solution: direction must be 1, 2 or 3");
        const HtTensor<double>& x =
            sol_.per_direction[static_cast<std::size_t>(direction - 1)];
        const auto& pre = pre_[static_cast<std::size_t>(direction - 1)];
        for (int k = 0; k < 3; ++k)
            if (idx[static_cast<std::size_t>(k)] < 0 ||
                idx[static_cast<std::size_t>(k)] >= x.mode_size(3 + k))
                throw InvalidArgumentError("evaluate_solution: parameter index out of range");
        const Eigen::RowVectorXd w_param = contract_params(x, pre.sibling, idx);
        const auto& root = x.transfers[static_cast<std::size_t>(x.tree.root())][0];
        const Eigen::VectorXd w12 = pre.left_of_root
                                        ? Eigen::VectorXd(root * w_param.transpose())
                                        : Eigen::VectorXd(root.transpose() * w_param.transpose());
        return pre.obs * w12;
    }

private:
    Eigen::RowVectorXd contract_params(const HtTensor<double>& x, int id,
                                       const std::array<Index, 3>& idx) const {
        const DimensionTree& tree = x.tree;
        if (tree.is_leaf(id)) {
            const Index mode = tree.node(id).leaf_mode;
            return x.leaf_frames[static_cast<std::size_t>(id)].row(
                idx[static_cast<std::size_t>(mode - 3)]);
        }
        const Eigen::RowVectorXd wl = contract_params(x, tree.node(id).left, idx);
        const Eigen::RowVectorXd wr = contract_params(x, tree.node(id).right, idx);
        const auto& b = x.transfers[static_cast<std::size_t>(id)];
        Eigen::RowVectorXd w(b.size());
        for (std::size_t i = 0; i < b.size(); ++i)
            w[static_cast<Index>(i)] = wl * b[i] * wr.transpose();
        return w;
    }

    struct PerDirection {
        Eigen::MatrixXd obs; // (M*T) x r12, zero-mean shifted
        int node12 = -1;
        int sibling = -1;
        bool left_of_root = true;
    };

    const SolutionTensor& sol_;
    std::array<PerDirection, 3> pre_;
};

/// One-off slice evaluation; builds the evaluator internally.
inline Eigen::VectorXd evaluate_solution(const SolutionTensor& sol, int direction,
                                         const std::array<Index, 3>& idx,
                                         const MuscleModel& model,
                                         const MeasurementSetup& setup) {
    return SolutionEvaluator(sol, model, setup).evaluate(direction, idx);
}

} // namespace emg
