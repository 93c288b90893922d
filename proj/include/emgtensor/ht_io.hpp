// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "emgtensor/ht_tensor.hpp"

namespace emg {

// On-disk layout (all integers and floats little-endian):
//   magic "HTv1"
//   u64 d, u64 mode_sizes[d]
//   u64 node_count, i64 parent[node_count]   (pre-order, root parent = -1)
//   u64 rank[node_count]
//   per node in pre-order: leaf frame (n_l x r, column-major f64) or
//   transfer tensor (r matrices of r_left x r_right, column-major f64).
// Leaves appear in pre-order in ascending mode order; the loader relies on
// this to reconstruct the node labels from the parent array alone.
static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

inline std::int64_t read_i64(std::istream& is) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

} // namespace detail

inline void ht_save(const HtTensor<double>& x, std::ostream& os) {
    const DimensionTree& tree = x.tree;
    {
        // serialized trees must list leaves in ascending mode order
        Index expected = 1;
        for (int id = 0; id < tree.node_count(); ++id)
            if (tree.is_leaf(id)) {
                if (tree.node(id).leaf_mode != expected)
                    throw InvalidArgumentError(
                        "ht_save: tree leaves are not in ascending mode order");
                ++expected;
            }
    }
    os.write("HTv1", 4);
    detail::write_u64(os, static_cast<std::uint64_t>(x.dims()));
    for (const Index n : x.mode_sizes)
        detail::write_u64(os, static_cast<std::uint64_t>(n));
    detail::write_u64(os, static_cast<std::uint64_t>(tree.node_count()));
    for (int id = 0; id < tree.node_count(); ++id)
        detail::write_i64(os, tree.node(id).parent);
    for (int id = 0; id < tree.node_count(); ++id)
        detail::write_u64(os, static_cast<std::uint64_t>(x.rank(id)));
    for (int id = 0; id < tree.node_count(); ++id) {
        const auto uid = static_cast<std::size_t>(id);
        if (tree.is_leaf(id)) {
            const auto& u = x.leaf_frames[uid];
            os.write(reinterpret_cast<const char*>(u.data()),
                     static_cast<std::streamsize>(sizeof(double)) * u.size());
        } else {
            for (const auto& m : x.transfers[uid])
                os.write(reinterpret_cast<const char*>(m.data()),
                         static_cast<std::streamsize>(sizeof(double)) * m.size());
        }
    }
    if (!os) throw NumericalFailureError("ht_save: write failed");
}

inline HtTensor<double> ht_load(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "HTv1")
        throw MissingArtifactError("ht_load: bad magic, not an HTv1 file");
    const auto d = static_cast<Index>(detail::read_u64(is));
    if (d < 1 || d > 64) throw MissingArtifactError("ht_load: implausible dimension");
    std::vector<Index> mode_sizes(static_cast<std::size_t>(d));
    for (auto& n : mode_sizes) n = static_cast<Index>(detail::read_u64(is));
    const auto node_count = static_cast<int>(detail::read_u64(is));
    if (node_count != 2 * static_cast<int>(d) - 1)
        throw MissingArtifactError("ht_load: node count inconsistent with dimension");
    std::vector<int> parent(static_cast<std::size_t>(node_count));
    for (auto& p : parent) p = static_cast<int>(detail::read_i64(is));
    std::vector<Index> rank(static_cast<std::size_t>(node_count));
    for (auto& r : rank) r = static_cast<Index>(detail::read_u64(is));
    if (!is) throw MissingArtifactError("ht_load: truncated header");

    // children by parent id, in pre-order (left child first)
    std::vector<int> left(static_cast<std::size_t>(node_count), -1);
    std::vector<int> right(static_cast<std::size_t>(node_count), -1);
    for (int id = 1; id < node_count; ++id) {
        const int p = parent[static_cast<std::size_t>(id)];
        if (p < 0 || p >= node_count)
            throw MissingArtifactError("ht_load: invalid parent index");
        if (left[static_cast<std::size_t>(p)] < 0)
            left[static_cast<std::size_t>(p)] = id;
        else if (right[static_cast<std::size_t>(p)] < 0)
            right[static_cast<std::size_t>(p)] = id;
        else
            throw MissingArtifactError("ht_load: node with more than two children");
    }

    // rebuild the TreeSpec; leaves take modes 1..d in pre-order
    Index next_mode = 1;
    struct Builder {
        const std::vector<int>& left;
        const std::vector<int>& right;
        Index& next_mode;
        TreeSpec operator()(int id) const {
            if (left[static_cast<std::size_t>(id)] < 0)
                return TreeSpec::leaf(next_mode++);
            if (right[static_cast<std::size_t>(id)] < 0)
                throw MissingArtifactError("ht_load: inner node with one child");
            TreeSpec l = (*this)(left[static_cast<std::size_t>(id)]);
            TreeSpec r = (*this)(right[static_cast<std::size_t>(id)]);
            return TreeSpec::inner(std::move(l), std::move(r));
        }
    };
    const DimensionTree tree = DimensionTree::build(Builder{left, right, next_mode}(0));

    HtTensor<double> x(tree, mode_sizes);
    for (int id = 0; id < node_count; ++id) {
        const auto uid = static_cast<std::size_t>(id);
        const Index r = rank[uid];
        if (tree.is_leaf(id)) {
            Eigen::MatrixXd u(x.mode_size(tree.node(id).leaf_mode), r);
            is.read(reinterpret_cast<char*>(u.data()),
                    static_cast<std::streamsize>(sizeof(double)) * u.size());
            x.leaf_frames[uid] = std::move(u);
        } else {
            const Index rl = rank[static_cast<std::size_t>(tree.node(id).left)];
            const Index rr = rank[static_cast<std::size_t>(tree.node(id).right)];
            std::vector<Eigen::MatrixXd> b(static_cast<std::size_t>(r));
            for (auto& m : b) {
                m.resize(rl, rr);
                is.read(reinterpret_cast<char*>(m.data()),
                        static_cast<std::streamsize>(sizeof(double)) * m.size());
            }
            x.transfers[uid] = std::move(b);
        }
    }
    if (!is) throw MissingArtifactError("ht_load: truncated payload");
    x.validate();
    return x;
}

inline void ht_save(const HtTensor<double>& x, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingArtifactError("ht_save: cannot open " + path.string());
    ht_save(x, os);
}

inline HtTensor<double> ht_load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("ht_load: cannot open " + path.string());
    return ht_load(is);
}

} // namespace emg
