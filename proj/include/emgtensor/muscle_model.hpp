// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <vector>

#include "emgtensor/dense_tensor.hpp"
#include "emgtensor/errors.hpp"

namespace emg {

struct RosenfalckParams {
    double r1 = 96.0;
    double r2 = 1.0;
    double r3 = 90.0; // resting potential magnitude (mV)
};

/// Muscle fiber action potential; s is the signed distance behind the
/// wavefront, negative s means the excitation has not yet arrived and the
/// fiber sits at the resting value -r3 (continuous with the profile at 0).
inline double rosenfalck_ap(double s, const RosenfalckParams& ap) {
    if (s < 0.0) return -ap.r3;
    return ap.r1 * s * s * s * std::exp(-ap.r2 * s) - ap.r3;
}

/// Orthogonal projection of x onto the line through y with direction d.
inline Eigen::Vector3d project_to_fiber(const Eigen::Vector3d& x,
                                        const Eigen::Vector3d& y,
                                        const Eigen::Vector3d& d) {
    const double dd = d.squaredNorm();
    if (dd == 0.0) throw InvalidArgumentError("project_to_fiber: zero direction");
    return y + ((x - y).dot(d) / dd) * d;
}

/// Cuboid muscle with axis-aligned fibers. Fibers run along the coordinate
/// axis `direction` (1, 2 or 3), start on the face x_direction = 0, and are
/// laid out on the cell centers of a fiber_layout grid over the transverse
/// cross-section.
struct MuscleModel {
    Eigen::Vector3d extent{4.0, 2.0, 1.0}; // cm
    double h_m = 1.0 / 3.0;                // spatial grid size, cm
    std::array<int, 2> fiber_layout{30, 30};
    int fiber_points = 30; // grid points per fiber (used for fiber exports)
    int direction = 2;     // fiber direction e_1, e_2 or e_3
    RosenfalckParams ap;
    double velocity = 4.0; // AP velocity u, cm/s, uniform across fibers
    double beta = 100.0;   // transverse smoothing parameter, 1/cm^2
    int t_steps = 101;
    double h_t = 0.005; // s

    void validate() const {
        if (direction < 1 || direction > 3)
            throw InvalidArgumentError("MuscleModel: direction must be 1, 2 or 3");
        if (beta <= 0 || velocity <= 0 || h_t <= 0 || h_m <= 0)
            throw InvalidArgumentError("MuscleModel: beta, u, h_t, h_M must be > 0");
        if (t_steps < 1 || fiber_points < 1 || fiber_layout[0] < 0 || fiber_layout[1] < 0)
            throw InvalidArgumentError("MuscleModel: invalid counts");
        node_counts();
    }

    std::array<Index, 3> node_counts() const {
        std::array<Index, 3> n{};
        for (int k = 0; k < 3; ++k) {
            const double cells = extent[k] / h_m;
            const double rounded = std::round(cells);
            if (std::abs(cells - rounded) > 1e-6 * std::max(1.0, cells))
                throw InvalidArgumentError(
                    "MuscleModel: extent must be an integer multiple of h_M");
            n[static_cast<std::size_t>(k)] = static_cast<Index>(rounded) + 1;
        }
        return n;
    }

    Index spatial_nodes() const {
        const auto n = node_counts();
        return n[0] * n[1] * n[2];
    }

    /// Flat node index with the first axis fastest.
    Index node_index(Index i1, Index i2, Index i3) const {
        const auto n = node_counts();
        return i1 + n[0] * (i2 + n[1] * i3);
    }

    Eigen::Vector3d node_position(Index flat) const {
        const auto n = node_counts();
        const Index i1 = flat % n[0];
        const Index i2 = (flat / n[0]) % n[1];
        const Index i3 = flat / (n[0] * n[1]);
        return {static_cast<double>(i1) * h_m, static_cast<double>(i2) * h_m,
                static_cast<double>(i3) * h_m};
    }

    MuscleModel with_direction(int dir) const {
        MuscleModel m = *this;
        m.direction = dir;
        return m;
    }

    Eigen::Vector3d direction_vector() const {
        Eigen::Vector3d d = Eigen::Vector3d::Zero();
        d[direction - 1] = 1.0;
        return d;
    }

    std::vector<Eigen::Vector3d> fiber_starts() const {
        validate();
        const int axis = direction - 1;
        const int a = (axis + 1) % 3;
        const int b = (axis + 2) % 3;
        const int ta = std::min(a, b); // transverse axes in ascending order
        const int tb = std::max(a, b);
        std::vector<Eigen::Vector3d> starts;
        starts.reserve(static_cast<std::size_t>(fiber_layout[0] * fiber_layout[1]));
        for (int j = 0; j < fiber_layout[1]; ++j) {
            for (int i = 0; i < fiber_layout[0]; ++i) {
                Eigen::Vector3d y = Eigen::Vector3d::Zero();
                y[ta] = (i + 0.5) / fiber_layout[0] * extent[ta];
                y[tb] = (j + 0.5) / fiber_layout[1] * extent[tb];
                starts.push_back(y);
            }
        }
        return starts;
    }
};

/// Contribution of one fiber to the tissue potential at x and time t: the
/// fiber AP evaluated at the projected point, attenuated transversally by
/// exp(-beta/2 * dist^2). The wavefront leaves the start point at t = 0.
inline double smooth_fiber_potential(const Eigen::Vector3d& x, const Eigen::Vector3d& y,
                                     const Eigen::Vector3d& d_unit, double u, double t,
                                     double beta, const RosenfalckParams& ap) {
    const Eigen::Vector3d pi_x = project_to_fiber(x, y, d_unit);
    const double along = (pi_x - y).dot(d_unit);
    const double transverse_sq = (x - pi_x).squaredNorm();
    const double s = u * t - along;
    return rosenfalck_ap(s, ap) * std::exp(-0.5 * beta * transverse_sq);
}

/// Membrane potential field V_m at time step t_index: sum of the smoothed
/// fiber potentials over all fibers, sampled on the spatial grid nodes.
inline Eigen::VectorXd assemble_vm(const MuscleModel& model, Index t_index) {
    if (t_index < 0 || t_index >= model.t_steps)
        throw InvalidArgumentError("assemble_vm: time index out of range");
    const double t = static_cast<double>(t_index) * model.h_t;
    const auto n = model.node_counts();
    const Eigen::Vector3d d = model.direction_vector();
    const auto starts = model.fiber_starts();
    const int axis = model.direction - 1;

    Eigen::VectorXd field = Eigen::VectorXd::Zero(model.spatial_nodes());
    for (const Eigen::Vector3d& y : starts) {
        Index flat = 0;
        for (Index i3 = 0; i3 < n[2]; ++i3) {
            for (Index i2 = 0; i2 < n[1]; ++i2) {
                for (Index i1 = 0; i1 < n[0]; ++i1, ++flat) {
                    const Eigen::Vector3d x{static_cast<double>(i1) * model.h_m,
                                            static_cast<double>(i2) * model.h_m,
                                            static_cast<double>(i3) * model.h_m};
                    const double along = x[axis]; // y has zero component on the axis
                    Eigen::Vector3d diff = x - y;
                    diff[axis] = 0.0;
                    const double s = model.velocity * t - along;
                    field[flat] += rosenfalck_ap(s, model.ap) *
                                   std::exp(-0.5 * model.beta * diff.squaredNorm());
                }
            }
        }
    }
    return field;
}

/// Diagonal conductivities: fixed extracellular sigma_e and the admissible
/// box [s_minus, s_plus]^3 for the intracellular diagonal p.
struct ConductivitySpec {
    Eigen::Vector3d sigma_e{6.7, 6.7, 6.7};
    double s_minus = 0.001;
    double s_plus = 10.0;

    void validate() const {
        if (!(0.0 < s_minus) || !(s_minus <= s_plus) || !std::isfinite(s_plus))
            throw InvalidArgumentError(
                "ConductivitySpec: need 0 < s_minus <= s_plus < inf");
        if (!(sigma_e.minCoeff() > 0.0))
            throw InvalidArgumentError("ConductivitySpec: sigma_e must be positive");
    }

    bool contains(const Eigen::Vector3d& p) const {
        return p.minCoeff() >= s_minus && p.maxCoeff() <= s_plus;
    }
};

/// Electrode positions on the top face (x_3 = L_z) and the noise variance.
struct MeasurementSetup {
    Eigen::Matrix<double, Eigen::Dynamic, 3> electrodes;
    double xi = 2.0; // noise variance

    Index count() const { return electrodes.rows(); }

    void validate(const Eigen::Vector3d& extent) const {
        if (xi <= 0) throw InvalidArgumentError("MeasurementSetup: xi must be > 0");
        for (Index e = 0; e < electrodes.rows(); ++e) {
            const Eigen::Vector3d pos = electrodes.row(e);
            if (pos[0] < 0 || pos[0] > extent[0] || pos[1] < 0 || pos[1] > extent[1])
                throw InvalidArgumentError(
                    "MeasurementSetup: electrode outside the top face");
            if (std::abs(pos[2] - extent[2]) > 1e-9)
                throw InvalidArgumentError(
                    "MeasurementSetup: electrode not on the top face");
        }
    }

    /// Regular nx x ny electrode array on the top face.
    static MeasurementSetup grid(const Eigen::Vector3d& extent, int nx = 8, int ny = 4,
                                 double xi = 2.0) {
        MeasurementSetup s;
        s.xi = xi;
        s.electrodes.resize(static_cast<Index>(nx) * ny, 3);
        Index e = 0;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i, ++e)
                s.electrodes.row(e) = Eigen::Vector3d(
                    (i + 0.5) / nx * extent[0], (j + 0.5) / ny * extent[1], extent[2]);
        return s;
    }
};

} // namespace emg
