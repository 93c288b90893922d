// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <vector>

#include "emgtensor/cp_format.hpp"
#include "emgtensor/dense_tensor.hpp"
#include "emgtensor/dimension_tree.hpp"
#include "emgtensor/errors.hpp"

namespace emg {

/// Hierarchical Tucker representation. Every leaf {l} stores a frame
/// U_l (n_l x r_l); every inner node z with children (L, R) stores its
/// transfer tensor as r_z matrices of size r_L x r_R, so that the implicit
/// frame columns satisfy
///   U_z(i) = sum_{j,k} B_z[i](j,k) * (U_L(j) kron U_R(k)),
/// with the L-part of the combined multi-index running fastest. The root
/// rank is fixed to 1 and the represented tensor is U_root(0).
template <typename Scalar>
struct HtTensor {
    DimensionTree tree;
    std::vector<Index> mode_sizes;
    std::vector<Eigen::MatrixX<Scalar>> leaf_frames;             // by node id
    std::vector<std::vector<Eigen::MatrixX<Scalar>>> transfers;  // by node id

    HtTensor() = default;

    HtTensor(DimensionTree t, std::vector<Index> sizes)
        : tree(std::move(t)), mode_sizes(std::move(sizes)) {
        if (static_cast<Index>(mode_sizes.size()) != tree.dims())
            throw InvalidArgumentError("HtTensor: mode count differs from tree dimension");
        DenseTensor<Scalar>::check_shape(mode_sizes);
        leaf_frames.resize(static_cast<std::size_t>(tree.node_count()));
        transfers.resize(static_cast<std::size_t>(tree.node_count()));
    }

    Index dims() const { return tree.dims(); }

    Index rank(int node) const {
        if (tree.is_leaf(node))
            return leaf_frames[static_cast<std::size_t>(node)].cols();
        return static_cast<Index>(transfers[static_cast<std::size_t>(node)].size());
    }

    Index mode_size(Index mode) const {
        return mode_sizes[static_cast<std::size_t>(mode - 1)];
    }

    /// Checks that stored array shapes are mutually consistent and that the
    /// root rank is 1.
    void validate() const {
        tree.validate();
        for (int id = 0; id < tree.node_count(); ++id) {
            if (tree.is_leaf(id)) {
                const auto& u = leaf_frames[static_cast<std::size_t>(id)];
                if (u.rows() != mode_size(tree.node(id).leaf_mode))
                    throw InvalidArgumentError("HtTensor: leaf frame row count mismatch");
                if (u.cols() < 1)
                    throw InvalidArgumentError("HtTensor: leaf rank must be >= 1");
            } else {
                const auto& b = transfers[static_cast<std::size_t>(id)];
                if (b.empty())
                    throw InvalidArgumentError("HtTensor: inner rank must be >= 1");
                const Index rl = rank(tree.node(id).left);
                const Index rr = rank(tree.node(id).right);
                for (const auto& m : b)
                    if (m.rows() != rl || m.cols() != rr)
                        throw InvalidArgumentError("HtTensor: transfer shape mismatch");
            }
        }
        if (rank(tree.root()) != 1)
            throw InvalidArgumentError("HtTensor: root rank must be 1");
    }
};

/// All-rank-1 representation of the zero tensor.
template <typename Scalar>
HtTensor<Scalar> ht_zero(const DimensionTree& tree, std::vector<Index> mode_sizes) {
    HtTensor<Scalar> x(tree, std::move(mode_sizes));
    for (int id = 0; id < tree.node_count(); ++id) {
        if (tree.is_leaf(id))
            x.leaf_frames[static_cast<std::size_t>(id)] =
                Eigen::MatrixX<Scalar>::Zero(x.mode_size(tree.node(id).leaf_mode), 1);
        else
            x.transfers[static_cast<std::size_t>(id)] = {Eigen::MatrixX<Scalar>::Ones(1, 1)};
    }
    return x;
}

/// Converts a CP vector into the hierarchical Tucker format on the given
/// tree; all node ranks are bounded by the CP representation rank. Rank-0
/// input yields the all-rank-1 zero tensor.
template <typename Scalar>
HtTensor<Scalar> cp_to_ht(const CpVector<Scalar>& v, const DimensionTree& tree) {
    if (static_cast<Index>(v.mode_sizes.size()) != tree.dims())
        throw InvalidArgumentError("cp_to_ht: dimension mismatch");
    const Index r = v.rank();
    if (r == 0) return ht_zero<Scalar>(tree, v.mode_sizes);

    HtTensor<Scalar> x(tree, v.mode_sizes);
    for (int id = 0; id < tree.node_count(); ++id) {
        if (tree.is_leaf(id)) {
            const Index mode = tree.node(id).leaf_mode;
            Eigen::MatrixX<Scalar> u(x.mode_size(mode), r);
            for (Index k = 0; k < r; ++k)
                u.col(k) = v.factors[static_cast<std::size_t>(k)]
                                    [static_cast<std::size_t>(mode - 1)];
            x.leaf_frames[static_cast<std::size_t>(id)] = std::move(u);
        } else if (tree.is_root(id)) {
            // d = 1 has a root that is also a leaf; handled above
            x.transfers[static_cast<std::size_t>(id)] = {
                Eigen::MatrixX<Scalar>::Identity(r, r)};
        } else {
            std::vector<Eigen::MatrixX<Scalar>> b(
                static_cast<std::size_t>(r), Eigen::MatrixX<Scalar>::Zero(r, r));
            for (Index k = 0; k < r; ++k) b[static_cast<std::size_t>(k)](k, k) = 1;
            x.transfers[static_cast<std::size_t>(id)] = std::move(b);
        }
    }
    if (tree.dims() == 1) {
        // single node: root and leaf at once, frame is the summed term
        Eigen::VectorX<Scalar> sum = Eigen::VectorX<Scalar>::Zero(v.mode_sizes[0]);
        for (const auto& term : v.factors) sum += term[0];
        x.leaf_frames[0] = sum;
    }
    return x;
}

/// Operator variant: each n_l x n_l factor is treated as a leaf mode of
/// length n_l^2.
template <typename Scalar>
HtTensor<Scalar> cp_to_ht(const CpOperator<Scalar>& a, const DimensionTree& tree) {
    return cp_to_ht(cp_operator_as_vector(a), tree);
}

/// Structural sum; node-wise ranks add, no truncation.
template <typename Scalar>
HtTensor<Scalar> ht_add(const HtTensor<Scalar>& a, const HtTensor<Scalar>& b) {
    if (!(a.tree == b.tree) || a.mode_sizes != b.mode_sizes)
        throw InvalidArgumentError("ht_add: tree or mode sizes differ");
    const DimensionTree& tree = a.tree;
    HtTensor<Scalar> c(tree, a.mode_sizes);
    for (int id = 0; id < tree.node_count(); ++id) {
        const auto uid = static_cast<std::size_t>(id);
        if (tree.is_leaf(id)) {
            const auto& ua = a.leaf_frames[uid];
            const auto& ub = b.leaf_frames[uid];
            Eigen::MatrixX<Scalar> u(ua.rows(), ua.cols() + ub.cols());
            u << ua, ub;
            c.leaf_frames[uid] = std::move(u);
            continue;
        }
        const Index ral = a.rank(tree.node(id).left), rar = a.rank(tree.node(id).right);
        const Index rbl = b.rank(tree.node(id).left), rbr = b.rank(tree.node(id).right);
        std::vector<Eigen::MatrixX<Scalar>> bt;
        if (tree.is_root(id)) {
            Eigen::MatrixX<Scalar> m = Eigen::MatrixX<Scalar>::Zero(ral + rbl, rar + rbr);
            m.topLeftCorner(ral, rar) = a.transfers[uid][0];
            m.bottomRightCorner(rbl, rbr) = b.transfers[uid][0];
            bt.push_back(std::move(m));
        } else {
            bt.reserve(static_cast<std::size_t>(a.rank(id) + b.rank(id)));
            for (const auto& ba : a.transfers[uid]) {
                Eigen::MatrixX<Scalar> m =
                    Eigen::MatrixX<Scalar>::Zero(ral + rbl, rar + rbr);
                m.topLeftCorner(ral, rar) = ba;
                bt.push_back(std::move(m));
            }
            for (const auto& bb : b.transfers[uid]) {
                Eigen::MatrixX<Scalar> m =
                    Eigen::MatrixX<Scalar>::Zero(ral + rbl, rar + rbr);
                m.bottomRightCorner(rbl, rbr) = bb;
                bt.push_back(std::move(m));
            }
        }
        c.transfers[uid] = std::move(bt);
    }
    if (tree.dims() == 1) c.leaf_frames[0] = a.leaf_frames[0] + b.leaf_frames[0];
    return c;
}

/// Scales the represented tensor by alpha (root transfer only).
template <typename Scalar>
HtTensor<Scalar> ht_scale(HtTensor<Scalar> x, Scalar alpha) {
    if (x.tree.dims() == 1) {
        x.leaf_frames[0] *= alpha;
        return x;
    }
    for (auto& m : x.transfers[static_cast<std::size_t>(x.tree.root())]) m *= alpha;
    return x;
}

namespace detail {

/// Per-node contraction vectors w_z (1 x r_z) given one row vector per mode:
/// leaf {l} contributes row_l * U_l; inner nodes combine children through the
/// transfer tensor. With delta rows this evaluates a single entry in O(d r^3).
template <typename Scalar>
Eigen::RowVectorX<Scalar> contract_node(const HtTensor<Scalar>& x, int id,
                                        const std::vector<Eigen::RowVectorX<Scalar>>& mode_rows) {
    if (x.tree.is_leaf(id)) {
        const Index mode = x.tree.node(id).leaf_mode;
        return mode_rows[static_cast<std::size_t>(mode - 1)] *
               x.leaf_frames[static_cast<std::size_t>(id)];
    }
    const Eigen::RowVectorX<Scalar> wl = contract_node(x, x.tree.node(id).left, mode_rows);
    const Eigen::RowVectorX<Scalar> wr = contract_node(x, x.tree.node(id).right, mode_rows);
    const auto& b = x.transfers[static_cast<std::size_t>(id)];
    Eigen::RowVectorX<Scalar> w(b.size());
    for (std::size_t i = 0; i < b.size(); ++i)
        w[static_cast<Index>(i)] = wl * b[i] * wr.transpose();
    return w;
}

} // namespace detail

/// Contracts every mode with a row vector and returns the resulting scalar.
template <typename Scalar>
Scalar ht_contract(const HtTensor<Scalar>& x,
                   const std::vector<Eigen::RowVectorX<Scalar>>& mode_rows) {
    if (static_cast<Index>(mode_rows.size()) != x.dims())
        throw InvalidArgumentError("ht_contract: need one vector per mode");
    for (Index l = 1; l <= x.dims(); ++l)
        if (mode_rows[static_cast<std::size_t>(l - 1)].size() != x.mode_size(l))
            throw InvalidArgumentError("ht_contract: vector length mismatch");
    return detail::contract_node(x, x.tree.root(), mode_rows)[0];
}

/// Entry of the represented tensor; cost O(d r^3), independent of mode sizes.
template <typename Scalar>
Scalar ht_entry(const HtTensor<Scalar>& x, const std::vector<Index>& idx) {
    if (static_cast<Index>(idx.size()) != x.dims())
        throw InvalidArgumentError("ht_entry: index arity mismatch");
    struct Evaluator {
        const HtTensor<Scalar>& x;
        const std::vector<Index>& idx;
        Eigen::RowVectorX<Scalar> operator()(int id) const {
            if (x.tree.is_leaf(id)) {
                const Index mode = x.tree.node(id).leaf_mode;
                const Index i = idx[static_cast<std::size_t>(mode - 1)];
                if (i < 0 || i >= x.mode_size(mode))
                    throw InvalidArgumentError("ht_entry: index out of range");
                return x.leaf_frames[static_cast<std::size_t>(id)].row(i);
            }
            const Eigen::RowVectorX<Scalar> wl = (*this)(x.tree.node(id).left);
            const Eigen::RowVectorX<Scalar> wr = (*this)(x.tree.node(id).right);
            const auto& b = x.transfers[static_cast<std::size_t>(id)];
            Eigen::RowVectorX<Scalar> w(b.size());
            for (std::size_t i = 0; i < b.size(); ++i)
                w[static_cast<Index>(i)] = wl * b[i] * wr.transpose();
            return w;
        }
    };
    return Evaluator{x, idx}(x.tree.root())[0];
}

/// Euclidean inner product of the represented tensors, computed
/// tree-recursively without densification.
template <typename Scalar>
Scalar ht_inner(const HtTensor<Scalar>& a, const HtTensor<Scalar>& b) {
    if (!(a.tree == b.tree) || a.mode_sizes != b.mode_sizes)
        throw InvalidArgumentError("ht_inner: tree or mode sizes differ");
    struct Cross {
        const HtTensor<Scalar>& a;
        const HtTensor<Scalar>& b;
        Eigen::MatrixX<Scalar> operator()(int id) const {
            const auto uid = static_cast<std::size_t>(id);
            if (a.tree.is_leaf(id))
                return a.leaf_frames[uid].transpose() * b.leaf_frames[uid];
            const Eigen::MatrixX<Scalar> ml = (*this)(a.tree.node(id).left);
            const Eigen::MatrixX<Scalar> mr = (*this)(a.tree.node(id).right);
            const auto& ba = a.transfers[uid];
            const auto& bb = b.transfers[uid];
            Eigen::MatrixX<Scalar> m(ba.size(), bb.size());
            for (std::size_t jb = 0; jb < bb.size(); ++jb) {
                const Eigen::MatrixX<Scalar> mid = ml * bb[jb] * mr.transpose();
                for (std::size_t ja = 0; ja < ba.size(); ++ja)
                    m(static_cast<Index>(ja), static_cast<Index>(jb)) =
                        ba[ja].cwiseProduct(mid).sum();
            }
            return m;
        }
    };
    return Cross{a, b}(a.tree.root())(0, 0);
}

template <typename Scalar>
Scalar ht_norm(const HtTensor<Scalar>& x) {
    const Scalar s = ht_inner(x, x);
    return s > Scalar(0) ? std::sqrt(s) : Scalar(0);
}

/// Representation ranks by node id; pair with tree.label_string for reports.
template <typename Scalar>
std::vector<Index> ht_ranks(const HtTensor<Scalar>& x) {
    std::vector<Index> r(static_cast<std::size_t>(x.tree.node_count()));
    for (int id = 0; id < x.tree.node_count(); ++id)
        r[static_cast<std::size_t>(id)] = x.rank(id);
    return r;
}

template <typename Scalar>
Index ht_max_rank(const HtTensor<Scalar>& x) {
    Index m = 0;
    for (int id = 0; id < x.tree.node_count(); ++id) m = std::max(m, x.rank(id));
    return m;
}

/// Number of stored scalars (leaf frames plus transfer tensors).
template <typename Scalar>
Index ht_storage(const HtTensor<Scalar>& x) {
    Index total = 0;
    for (int id = 0; id < x.tree.node_count(); ++id) {
        const auto uid = static_cast<std::size_t>(id);
        if (x.tree.is_leaf(id)) {
            total += x.leaf_frames[uid].size();
        } else {
            for (const auto& m : x.transfers[uid]) total += m.size();
        }
    }
    return total;
}

/// Applies a CP operator to an HT vector. Each rank-1 operator term acts on
/// the leaf frames only, so the result's node ranks are rank(A) times the
/// input's. No truncation.
template <typename Scalar>
HtTensor<Scalar> apply_operator(const CpOperator<Scalar>& a, const HtTensor<Scalar>& x) {
    if (a.mode_sizes != x.mode_sizes)
        throw InvalidArgumentError("apply_operator: mode sizes differ");
    if (a.rank() == 0)
        return ht_zero<Scalar>(x.tree, x.mode_sizes);
    HtTensor<Scalar> sum;
    for (Index k = 0; k < a.rank(); ++k) {
        HtTensor<Scalar> term = x;
        for (Index mode = 1; mode <= x.dims(); ++mode) {
            const int leaf = x.tree.leaf_of_mode(mode);
            term.leaf_frames[static_cast<std::size_t>(leaf)] =
                a.factors[static_cast<std::size_t>(k)][static_cast<std::size_t>(mode - 1)] *
                x.leaf_frames[static_cast<std::size_t>(leaf)];
        }
        sum = (k == 0) ? std::move(term) : ht_add(sum, term);
    }
    return sum;
}

namespace detail {

/// Explicit frame of a node: an (n_z x r_z) matrix over the multi-index of
/// the node's label (modes ascending, first mode fastest). Only used for
/// densification of small tensors.
template <typename Scalar>
Eigen::MatrixX<Scalar> node_frame_dense(const HtTensor<Scalar>& x, int id) {
    if (x.tree.is_leaf(id)) return x.leaf_frames[static_cast<std::size_t>(id)];
    const int left = x.tree.node(id).left;
    const int right = x.tree.node(id).right;
    const Eigen::MatrixX<Scalar> fl = node_frame_dense(x, left);
    const Eigen::MatrixX<Scalar> fr = node_frame_dense(x, right);

    // Decompose each linearized index of this node's label into the
    // linearized indices of the child labels.
    const auto& label = x.tree.node(id).label;
    Index n_total = 1;
    for (const Index m : label) n_total *= x.mode_size(m);
    std::vector<Index> map_l(static_cast<std::size_t>(n_total));
    std::vector<Index> map_r(static_cast<std::size_t>(n_total));
    {
        const auto& ll = x.tree.node(left).label;
        const auto& rl = x.tree.node(right).label;
        std::vector<Index> digit(label.size(), 0);
        for (Index flat = 0; flat < n_total; ++flat) {
            Index il = 0, sl = 1, ir = 0, sr = 1;
            std::size_t pl = 0, pr = 0;
            for (std::size_t q = 0; q < label.size(); ++q) {
                const Index mode = label[q];
                if (pl < ll.size() && ll[pl] == mode) {
                    il += digit[q] * sl;
                    sl *= x.mode_size(mode);
                    ++pl;
                } else {
                    ir += digit[q] * sr;
                    sr *= x.mode_size(mode);
                    ++pr;
                }
            }
            map_l[static_cast<std::size_t>(flat)] = il;
            map_r[static_cast<std::size_t>(flat)] = ir;
            for (std::size_t q = 0; q < label.size(); ++q) {
                if (++digit[q] < x.mode_size(label[q])) break;
                digit[q] = 0;
            }
        }
    }

    const auto& b = x.transfers[static_cast<std::size_t>(id)];
    Eigen::MatrixX<Scalar> f(n_total, static_cast<Index>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) {
        const Eigen::MatrixX<Scalar> m = fl * b[i] * fr.transpose();
        for (Index flat = 0; flat < n_total; ++flat)
            f(flat, static_cast<Index>(i)) =
                m(map_l[static_cast<std::size_t>(flat)], map_r[static_cast<std::size_t>(flat)]);
    }
    return f;
}

} // namespace detail

/// Dense reconstruction; guarded by the materialization cap.
template <typename Scalar>
DenseTensor<Scalar> to_dense(const HtTensor<Scalar>& x,
                             Index cap = kDenseMaterializationCap) {
    const Index total = DenseTensor<Scalar>::check_shape(x.mode_sizes);
    if (total > cap)
        throw ResourceLimitError("to_dense: tensor exceeds materialization cap");
    Eigen::MatrixX<Scalar> f = detail::node_frame_dense(x, x.tree.root());
    return DenseTensor<Scalar>(x.mode_sizes, f.col(0));
}

} // namespace emg
