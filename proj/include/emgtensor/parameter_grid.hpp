// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>

#include "emgtensor/dense_tensor.hpp"
#include "emgtensor/errors.hpp"

namespace emg {

/// Discrete conductivity grid: per axis the arithmetic progression
/// s_-, s_- + h_sigma, ..., <= s_+.
struct ParameterGrid {
    std::array<Eigen::VectorXd, 3> values;

    std::array<Index, 3> sizes() const {
        return {values[0].size(), values[1].size(), values[2].size()};
    }

    Eigen::Vector3d midpoint() const {
        Eigen::Vector3d m;
        for (int k = 0; k < 3; ++k) {
            const auto& v = values[static_cast<std::size_t>(k)];
            m[k] = 0.5 * (v[0] + v[v.size() - 1]);
        }
        return m;
    }

    Eigen::Vector3d value_at(const std::array<Index, 3>& idx) const {
        Eigen::Vector3d p;
        for (int k = 0; k < 3; ++k) {
            const auto& v = values[static_cast<std::size_t>(k)];
            if (idx[static_cast<std::size_t>(k)] < 0 ||
                idx[static_cast<std::size_t>(k)] >= v.size())
                throw InvalidArgumentError("ParameterGrid: index out of range");
            p[k] = v[idx[static_cast<std::size_t>(k)]];
        }
        return p;
    }

    /// Index of the grid value nearest to x on the given axis (0-based).
    Index nearest_index(int axis, double x) const {
        const auto& v = values[static_cast<std::size_t>(axis)];
        if (v.size() == 1) return 0;
        const double step = v[1] - v[0];
        const auto i = static_cast<Index>(std::lround((x - v[0]) / step));
        return std::clamp<Index>(i, 0, v.size() - 1);
    }

    /// Index range [lo, hi] of values inside [x - delta, x + delta].
    std::pair<Index, Index> window(int axis, double x, double delta) const {
        const auto& v = values[static_cast<std::size_t>(axis)];
        if (v.size() == 1) return {0, 0};
        const double step = v[1] - v[0];
        const double tol = 1e-9 * step;
        auto lo = static_cast<Index>(std::ceil((x - delta - v[0]) / step - tol));
        auto hi = static_cast<Index>(std::floor((x + delta - v[0]) / step + tol));
        lo = std::clamp<Index>(lo, 0, v.size() - 1);
        hi = std::clamp<Index>(hi, 0, v.size() - 1);
        if (hi < lo) throw InvalidArgumentError("ParameterGrid: empty proposal window");
        return {lo, hi};
    }
};

inline ParameterGrid build_parameter_grid(double s_minus, double s_plus, double h_sigma) {
    if (!(0.0 < s_minus) || !(s_minus < s_plus))
        throw InvalidArgumentError("build_parameter_grid: need 0 < s_minus < s_plus");
    if (!(h_sigma > 0.0))
        throw InvalidArgumentError("build_parameter_grid: h_sigma must be > 0");
    const auto count =
        static_cast<Index>(std::floor((s_plus - s_minus) / h_sigma + 1e-9)) + 1;
    Eigen::VectorXd axis(count);
    for (Index i = 0; i < count; ++i) axis[i] = s_minus + static_cast<double>(i) * h_sigma;
    ParameterGrid grid;
    grid.values = {axis, axis, axis};
    return grid;
}

} // namespace emg
