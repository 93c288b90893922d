// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "emgtensor/errors.hpp"

namespace emg {

using Index = Eigen::Index;

/// Dense tensor with entries linearized first-mode-fastest, i.e. the flat
/// index of (i_1, ..., i_d) is i_1 + n_1*(i_2 + n_2*(i_3 + ...)). All other
/// modules share this convention.
template <typename Scalar>
struct DenseTensor {
    std::vector<Index> shape;
    Eigen::VectorX<Scalar> values;

    DenseTensor() = default;

    explicit DenseTensor(std::vector<Index> shape_in)
        : shape(std::move(shape_in)) {
        values = Eigen::VectorX<Scalar>::Zero(check_shape(shape));
    }

    DenseTensor(std::vector<Index> shape_in, Eigen::VectorX<Scalar> values_in)
        : shape(std::move(shape_in)), values(std::move(values_in)) {
        if (values.size() != check_shape(shape))
            throw InvalidArgumentError("DenseTensor: value count does not match shape");
    }

    Index dims() const { return static_cast<Index>(shape.size()); }

    Index size() const { return values.size(); }

    Index linear_index(const std::vector<Index>& idx) const {
        if (static_cast<Index>(idx.size()) != dims())
            throw InvalidArgumentError("DenseTensor: index arity mismatch");
        Index flat = 0;
        Index stride = 1;
        for (std::size_t l = 0; l < shape.size(); ++l) {
            if (idx[l] < 0 || idx[l] >= shape[l])
                throw InvalidArgumentError("DenseTensor: index out of range");
            flat += idx[l] * stride;
            stride *= shape[l];
        }
        return flat;
    }

    Scalar operator()(const std::vector<Index>& idx) const {
        return values[linear_index(idx)];
    }

    Scalar& operator()(const std::vector<Index>& idx) {
        return values[linear_index(idx)];
    }

    static Index check_shape(const std::vector<Index>& shape) {
        if (shape.empty())
            throw InvalidArgumentError("DenseTensor: dimension must be >= 1");
        Index total = 1;
        for (const Index n : shape) {
            if (n < 1)
                throw InvalidArgumentError("DenseTensor: mode sizes must be >= 1");
            total *= n;
        }
        return total;
    }
};

/// Validates a mode subset z against dimension d and returns it sorted.
inline std::vector<Index> sorted_mode_subset(const std::vector<Index>& z, Index d) {
    if (z.empty())
        throw InvalidArgumentError("mode subset must be non-empty");
    std::vector<Index> sorted = z;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] < 1 || sorted[i] > d)
            throw InvalidArgumentError("mode index out of range");
        if (i > 0 && sorted[i] == sorted[i - 1])
            throw InvalidArgumentError("mode subset contains duplicates");
    }
    return sorted;
}

/// Matricization of t with row modes z (1-based) and column modes D\z.
/// Rows and columns are linearized over their mode sets in ascending mode
/// order, first mode fastest; z = {1..d} yields the vectorization column.
template <typename Scalar>
Eigen::MatrixX<Scalar> matricize(const DenseTensor<Scalar>& t, const std::vector<Index>& z) {
    const Index d = t.dims();
    const std::vector<Index> rows = sorted_mode_subset(z, d);
    std::vector<Index> cols;
    {
        std::vector<bool> in_z(static_cast<std::size_t>(d) + 1, false);
        for (const Index m : rows) in_z[static_cast<std::size_t>(m)] = true;
        for (Index m = 1; m <= d; ++m)
            if (!in_z[static_cast<std::size_t>(m)]) cols.push_back(m);
    }

    Index n_rows = 1;
    for (const Index m : rows) n_rows *= t.shape[static_cast<std::size_t>(m - 1)];
    Index n_cols = 1;
    for (const Index m : cols) n_cols *= t.shape[static_cast<std::size_t>(m - 1)];

    // strides of each mode in the flat value array
    std::vector<Index> stride(static_cast<std::size_t>(d));
    {
        Index s = 1;
        for (Index m = 0; m < d; ++m) {
            stride[static_cast<std::size_t>(m)] = s;
            s *= t.shape[static_cast<std::size_t>(m)];
        }
    }

    Eigen::MatrixX<Scalar> out(n_rows, n_cols);
    std::vector<Index> idx(static_cast<std::size_t>(d), 0);
    for (Index flat = 0; flat < t.size(); ++flat) {
        Index r = 0, rs = 1;
        for (const Index m : rows) {
            r += idx[static_cast<std::size_t>(m - 1)] * rs;
            rs *= t.shape[static_cast<std::size_t>(m - 1)];
        }
        Index c = 0, cs = 1;
        for (const Index m : cols) {
            c += idx[static_cast<std::size_t>(m - 1)] * cs;
            cs *= t.shape[static_cast<std::size_t>(m - 1)];
        }
        out(r, c) = t.values[flat];
        for (Index m = 0; m < d; ++m) {
            auto& im = idx[static_cast<std::size_t>(m)];
            if (++im < t.shape[static_cast<std::size_t>(m)]) break;
            im = 0;
        }
    }
    return out;
}

} // namespace emg
