// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "emgtensor/ht_tensor.hpp"

namespace emg {

inline constexpr double kSingularValueFloor = 1e-14; // relative to sigma_max

/// Brings the representation into orthogonalized form: every non-root leaf
/// frame and matricized transfer gets orthonormal columns, with the removed
/// factors absorbed into the parent transfers. The represented tensor is
/// unchanged.
template <typename Scalar>
HtTensor<Scalar> ht_orthogonalize(HtTensor<Scalar> x) {
    const DimensionTree& tree = x.tree;
    if (tree.dims() == 1) return x;

    // reverse pre-order visits children before parents
    for (int id = tree.node_count() - 1; id >= 0; --id) {
        if (tree.is_root(id)) continue;
        const auto uid = static_cast<std::size_t>(id);
        Eigen::MatrixX<Scalar> r_factor;
        if (tree.is_leaf(id)) {
            Eigen::HouseholderQR<Eigen::MatrixX<Scalar>> qr(x.leaf_frames[uid]);
            const Index q = std::min(x.leaf_frames[uid].rows(), x.leaf_frames[uid].cols());
            r_factor = qr.matrixQR()
                           .topRows(q)
                           .template triangularView<Eigen::Upper>();
            x.leaf_frames[uid] =
                qr.householderQ() * Eigen::MatrixX<Scalar>::Identity(x.leaf_frames[uid].rows(), q);
        } else {
            const auto& b = x.transfers[uid];
            const Index rl = b[0].rows(), rr = b[0].cols();
            Eigen::MatrixX<Scalar> w(rl * rr, static_cast<Index>(b.size()));
            for (std::size_t i = 0; i < b.size(); ++i)
                w.col(static_cast<Index>(i)) =
                    Eigen::Map<const Eigen::VectorX<Scalar>>(b[i].data(), rl * rr);
            Eigen::HouseholderQR<Eigen::MatrixX<Scalar>> qr(w);
            const Index q = std::min(w.rows(), w.cols());
            r_factor = qr.matrixQR()
                           .topRows(q)
                           .template triangularView<Eigen::Upper>();
            const Eigen::MatrixX<Scalar> qmat =
                qr.householderQ() * Eigen::MatrixX<Scalar>::Identity(w.rows(), q);
            std::vector<Eigen::MatrixX<Scalar>> nb(static_cast<std::size_t>(q));
            for (Index i = 0; i < q; ++i)
                nb[static_cast<std::size_t>(i)] =
                    Eigen::Map<const Eigen::MatrixX<Scalar>>(qmat.col(i).data(), rl, rr);
            x.transfers[uid] = std::move(nb);
        }
        // absorb the triangular factor into the parent transfer
        const int parent = tree.node(id).parent;
        auto& pb = x.transfers[static_cast<std::size_t>(parent)];
        const bool is_left = (tree.node(parent).left == id);
        for (auto& m : pb) m = is_left ? (r_factor * m).eval() : (m * r_factor.transpose()).eval();
    }
    return x;
}

/// Reduced Gramians per node of an orthogonalized representation. The
/// eigenvalues of G_z are the squared singular values of the matricization
/// at z.
template <typename Scalar>
std::vector<Eigen::MatrixX<Scalar>> ht_gramians(const HtTensor<Scalar>& x) {
    const DimensionTree& tree = x.tree;
    std::vector<Eigen::MatrixX<Scalar>> g(static_cast<std::size_t>(tree.node_count()));
    g[static_cast<std::size_t>(tree.root())] = Eigen::MatrixX<Scalar>::Ones(1, 1);
    for (int id = 0; id < tree.node_count(); ++id) {
        if (tree.is_leaf(id)) continue;
        const auto uid = static_cast<std::size_t>(id);
        const auto& b = x.transfers[uid];
        const auto& gz = g[uid];
        const Index rl = b[0].rows(), rr = b[0].cols();
        // contract the parent Gramian first: c[j] = sum_i gz(i,j) b[i]
        std::vector<Eigen::MatrixX<Scalar>> c(
            b.size(), Eigen::MatrixX<Scalar>::Zero(rl, rr));
        for (Index j = 0; j < gz.cols(); ++j)
            for (Index i = 0; i < gz.rows(); ++i) {
                if (gz(i, j) == Scalar(0)) continue;
                c[static_cast<std::size_t>(j)].noalias() +=
                    gz(i, j) * b[static_cast<std::size_t>(i)];
            }
        Eigen::MatrixX<Scalar> gl = Eigen::MatrixX<Scalar>::Zero(rl, rl);
        Eigen::MatrixX<Scalar> gr = Eigen::MatrixX<Scalar>::Zero(rr, rr);
        for (std::size_t j = 0; j < b.size(); ++j) {
            gl.noalias() += c[j] * b[j].transpose();
            gr.noalias() += c[j].transpose() * b[j];
        }
        g[static_cast<std::size_t>(tree.node(id).left)] = Scalar(0.5) * (gl + gl.transpose());
        g[static_cast<std::size_t>(tree.node(id).right)] = Scalar(0.5) * (gr + gr.transpose());
    }
    return g;
}

/// Singular values of every node's matricization, by node id (descending).
template <typename Scalar>
std::vector<Eigen::VectorX<Scalar>> node_singular_values(const HtTensor<Scalar>& x) {
    const HtTensor<Scalar> y = ht_orthogonalize(x);
    const auto g = ht_gramians(y);
    std::vector<Eigen::VectorX<Scalar>> out(g.size());
    for (std::size_t id = 0; id < g.size(); ++id) {
        if (static_cast<int>(id) == y.tree.root() && y.tree.dims() > 1) {
            out[id] = Eigen::VectorX<Scalar>::Constant(1, ht_norm(y));
            continue;
        }
        Eigen::MatrixX<Scalar> gz = g[id];
        if (y.tree.dims() == 1) gz = y.leaf_frames[0].transpose() * y.leaf_frames[0];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixX<Scalar>> eig(gz);
        Eigen::VectorX<Scalar> vals = eig.eigenvalues().reverse();
        out[id] = vals.cwiseMax(Scalar(0)).cwiseSqrt();
    }
    return out;
}

namespace detail {

template <typename Scalar>
struct NodeProjection {
    Eigen::MatrixX<Scalar> p; // r_z x r_kept, orthonormal columns
};

/// Applies per-node projections computed from the Gramians of an
/// orthogonalized tensor.
template <typename Scalar>
HtTensor<Scalar> project_nodes(const HtTensor<Scalar>& y,
                               const std::vector<NodeProjection<Scalar>>& proj) {
    const DimensionTree& tree = y.tree;
    HtTensor<Scalar> out(tree, y.mode_sizes);
    for (int id = 0; id < tree.node_count(); ++id) {
        const auto uid = static_cast<std::size_t>(id);
        if (tree.is_leaf(id)) {
            out.leaf_frames[uid] = y.leaf_frames[uid] * proj[uid].p;
            continue;
        }
        const auto& pl = proj[static_cast<std::size_t>(tree.node(id).left)].p;
        const auto& pr = proj[static_cast<std::size_t>(tree.node(id).right)].p;
        const auto& b = y.transfers[uid];
        if (tree.is_root(id)) {
            out.transfers[uid] = {pl.transpose() * b[0] * pr};
            continue;
        }
        const auto& pz = proj[uid].p;
        std::vector<Eigen::MatrixX<Scalar>> nb(static_cast<std::size_t>(pz.cols()));
        for (Index c = 0; c < pz.cols(); ++c) {
            Eigen::MatrixX<Scalar> acc =
                Eigen::MatrixX<Scalar>::Zero(b[0].rows(), b[0].cols());
            for (std::size_t i = 0; i < b.size(); ++i)
                acc += pz(static_cast<Index>(i), c) * b[i];
            nb[static_cast<std::size_t>(c)] = pl.transpose() * acc * pr;
        }
        out.transfers[uid] = std::move(nb);
    }
    return out;
}

template <typename Scalar, typename RankChooser>
HtTensor<Scalar> truncate_impl(const HtTensor<Scalar>& x, RankChooser&& choose_rank) {
    if (x.tree.dims() == 1) return x; // single node carries the root rank 1
    const HtTensor<Scalar> y = ht_orthogonalize(x);
    const auto g = ht_gramians(y);
    std::vector<NodeProjection<Scalar>> proj(g.size());
    for (int id = 0; id < y.tree.node_count(); ++id) {
        const auto uid = static_cast<std::size_t>(id);
        if (y.tree.is_root(id)) {
            proj[uid].p = Eigen::MatrixX<Scalar>::Identity(1, 1);
            continue;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixX<Scalar>> eig(g[uid]);
        // eigenvalues ascending; we keep the trailing (largest) block
        const Eigen::VectorX<Scalar> lambda = eig.eigenvalues().cwiseMax(Scalar(0));
        const Index r = lambda.size();
        const Index keep = std::min<Index>(r, std::max<Index>(1, choose_rank(id, lambda)));
        proj[uid].p = eig.eigenvectors().rightCols(keep).rowwise().reverse();
    }
    return project_nodes(y, proj);
}

} // namespace detail

/// Truncation to node-wise target ranks (by node id); the root stays rank 1.
/// The result satisfies the quasi-optimal bound with factor sqrt(2d-3).
template <typename Scalar>
HtTensor<Scalar> truncate(const HtTensor<Scalar>& x, const std::vector<Index>& node_ranks) {
    if (static_cast<int>(node_ranks.size()) != x.tree.node_count())
        throw InvalidArgumentError("truncate: need one target rank per tree node");
    for (const Index r : node_ranks)
        if (r < 1) throw InvalidArgumentError("truncate: target ranks must be >= 1");
    return detail::truncate_impl(
        x, [&](int id, const Eigen::VectorX<Scalar>&) {
            return node_ranks[static_cast<std::size_t>(id)];
        });
}

/// Uniform target rank for every non-root node.
template <typename Scalar>
HtTensor<Scalar> truncate_to_rank(const HtTensor<Scalar>& x, Index rank) {
    std::vector<Index> ranks(static_cast<std::size_t>(x.tree.node_count()),
                             std::max<Index>(1, rank));
    ranks[static_cast<std::size_t>(x.tree.root())] = 1;
    return truncate(x, ranks);
}

/// Relative-tolerance truncation: per node the singular-value tail kept
/// below eps_rel * ||x|| / sqrt(2d-3), so the accumulated error stays below
/// eps_rel * ||x||.
template <typename Scalar>
HtTensor<Scalar> truncate(const HtTensor<Scalar>& x, double eps_rel) {
    if (eps_rel <= 0) throw InvalidArgumentError("truncate: tolerance must be > 0");
    const Index d = x.dims();
    if (d == 1) return x;
    const double norm = static_cast<double>(ht_norm(x));
    const double budget = eps_rel * norm / std::sqrt(static_cast<double>(2 * d - 3));
    const double budget_sq = budget * budget;
    return detail::truncate_impl(x, [&](int, const Eigen::VectorX<Scalar>& lambda_asc) {
        const Index r = lambda_asc.size();
        const double floor_sq = kSingularValueFloor * kSingularValueFloor *
                                static_cast<double>(lambda_asc[r - 1]);
        double tail = 0;
        Index drop = 0;
        while (drop < r - 1) {
            const double lam = static_cast<double>(lambda_asc[drop]);
            const double next = tail + (lam > floor_sq ? lam : 0.0);
            if (next > budget_sq) break;
            tail = next;
            ++drop;
        }
        return r - drop;
    });
}

} // namespace emg
