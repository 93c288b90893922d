// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "emgtensor/dense_tensor.hpp"
#include "emgtensor/errors.hpp"

namespace emg {

/// Recursive description used to construct a DimensionTree.
class TreeSpec {
public:
    static TreeSpec leaf(Index mode) {
        auto impl = std::make_shared<Impl>();
        impl->mode = mode;
        TreeSpec s;
        s.impl_ = std::move(impl);
        return s;
    }

    static TreeSpec inner(TreeSpec left, TreeSpec right) {
        auto impl = std::make_shared<Impl>();
        impl->left = std::move(left.impl_);
        impl->right = std::move(right.impl_);
        TreeSpec s;
        s.impl_ = std::move(impl);
        return s;
    }

private:
    struct Impl {
        Index mode = 0; // nonzero for leaves (1-based)
        std::shared_ptr<const Impl> left, right;
    };
    std::shared_ptr<const Impl> impl_;
    friend class DimensionTree;
};

/// Binary tree over the mode set {1..d}: the root is labeled {1..d}, leaves
/// carry singletons, and every inner node's label is the disjoint union of
/// its children's labels. Nodes are stored in pre-order (parent before
/// children, left subtree first), which is also the on-disk node order.
class DimensionTree {
public:
    struct Node {
        std::vector<Index> label; // sorted ascending, 1-based modes
        int parent = -1;
        int left = -1;
        int right = -1;
        Index leaf_mode = 0; // 0 for inner nodes
    };

    DimensionTree() = default;

    static DimensionTree build(const TreeSpec& spec) {
        DimensionTree t;
        t.add_spec(spec.impl_.get(), -1);
        t.finalize();
        return t;
    }

    /// Canonical balanced tree splitting contiguous ranges by ceil-halving,
    /// e.g. d=4 gives children {1,2} and {3,4}; d=5 gives {1,2,3} and {4,5}.
    static DimensionTree balanced(Index d) {
        if (d < 1)
            throw InvalidArgumentError("DimensionTree: dimension must be >= 1");
        return build(balanced_spec(1, d));
    }

    Index dims() const { return d_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int root() const { return 0; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    bool is_leaf(int id) const { return node(id).leaf_mode != 0; }
    bool is_root(int id) const { return node(id).parent < 0; }

    int leaf_of_mode(Index mode) const {
        if (mode < 1 || mode > d_)
            throw InvalidArgumentError("DimensionTree: mode out of range");
        return leaf_of_mode_[static_cast<std::size_t>(mode - 1)];
    }

    /// Node whose label equals z (sorted comparison); -1 if absent.
    int find_label(std::vector<Index> z) const {
        std::sort(z.begin(), z.end());
        for (int i = 0; i < node_count(); ++i)
            if (nodes_[static_cast<std::size_t>(i)].label == z) return i;
        return -1;
    }

    std::string label_string(int id) const {
        std::string s;
        for (const Index m : node(id).label) {
            if (!s.empty()) s += '-';
            s += std::to_string(m);
        }
        return s;
    }

    bool operator==(const DimensionTree& other) const {
        if (nodes_.size() != other.nodes_.size()) return false;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const Node& a = nodes_[i];
            const Node& b = other.nodes_[i];
            if (a.label != b.label || a.parent != b.parent || a.left != b.left ||
                a.right != b.right || a.leaf_mode != b.leaf_mode)
                return false;
        }
        return true;
    }

    /// Checks the defining invariants: d leaves, singleton leaf labels, each
    /// inner label the disjoint union of its children, root label {1..d}.
    void validate() const {
        if (nodes_.empty()) throw InvalidArgumentError("DimensionTree: empty");
        Index leaves = 0;
        for (int i = 0; i < node_count(); ++i) {
            const Node& n = node(i);
            if (n.label.empty())
                throw InvalidArgumentError("DimensionTree: empty node label");
            if (n.leaf_mode != 0) {
                ++leaves;
                if (n.label.size() != 1 || n.label[0] != n.leaf_mode)
                    throw InvalidArgumentError("DimensionTree: bad leaf label");
            } else {
                if (n.left < 0 || n.right < 0)
                    throw InvalidArgumentError("DimensionTree: inner node lacks children");
                std::vector<Index> merged = node(n.left).label;
                merged.insert(merged.end(), node(n.right).label.begin(),
                              node(n.right).label.end());
                std::sort(merged.begin(), merged.end());
                if (std::adjacent_find(merged.begin(), merged.end()) != merged.end())
                    throw InvalidArgumentError("DimensionTree: child labels overlap");
                if (merged != n.label)
                    throw InvalidArgumentError(
                        "DimensionTree: inner label is not the union of its children");
            }
        }
        if (leaves != d_)
            throw InvalidArgumentError("DimensionTree: leaf count differs from dimension");
        std::vector<Index> all(static_cast<std::size_t>(d_));
        for (Index m = 1; m <= d_; ++m) all[static_cast<std::size_t>(m - 1)] = m;
        if (node(root()).label != all)
            throw InvalidArgumentError("DimensionTree: root label is not {1..d}");
    }

private:
    static TreeSpec balanced_spec(Index lo, Index hi) {
        if (lo == hi) return TreeSpec::leaf(lo);
        const Index mid = lo + (hi - lo + 2) / 2; // left child takes the ceil half
        return TreeSpec::inner(balanced_spec(lo, mid - 1), balanced_spec(mid, hi));
    }

    int add_spec(const TreeSpec::Impl* spec, int parent) {
        if (spec == nullptr)
            throw InvalidArgumentError("DimensionTree: empty tree spec");
        const int id = node_count();
        nodes_.emplace_back();
        nodes_.back().parent = parent;
        if (spec->mode != 0) {
            nodes_[static_cast<std::size_t>(id)].leaf_mode = spec->mode;
            nodes_[static_cast<std::size_t>(id)].label = {spec->mode};
        } else {
            const int l = add_spec(spec->left.get(), id);
            const int r = add_spec(spec->right.get(), id);
            nodes_[static_cast<std::size_t>(id)].left = l;
            nodes_[static_cast<std::size_t>(id)].right = r;
            std::vector<Index> merged = nodes_[static_cast<std::size_t>(l)].label;
            merged.insert(merged.end(), nodes_[static_cast<std::size_t>(r)].label.begin(),
                          nodes_[static_cast<std::size_t>(r)].label.end());
            std::sort(merged.begin(), merged.end());
            nodes_[static_cast<std::size_t>(id)].label = std::move(merged);
        }
        return id;
    }

    void finalize() {
        d_ = static_cast<Index>(nodes_[0].label.size());
        leaf_of_mode_.assign(static_cast<std::size_t>(d_), -1);
        for (int i = 0; i < node_count(); ++i)
            if (is_leaf(i))
                leaf_of_mode_[static_cast<std::size_t>(node(i).leaf_mode - 1)] = i;
        validate();
    }

    std::vector<Node> nodes_;
    std::vector<int> leaf_of_mode_;
    Index d_ = 0;
};

/// Canonical balanced dimension tree for dimension d.
inline DimensionTree build_balanced_tree(Index d) { return DimensionTree::balanced(d); }

} // namespace emg
