// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <vector>

#include "emgtensor/muscle_model.hpp"
#include "emgtensor/rng.hpp"

namespace emg {

using SpMat = Eigen::SparseMatrix<double>;

namespace fd {

/// Finite-volume node weight: boundary nodes own half a cell per boundary
/// axis, which restores the symmetry lost by ghost-node reflection.
inline double node_weight(const std::array<Index, 3>& n, Index i1, Index i2, Index i3) {
    double w = 1.0;
    const std::array<Index, 3> idx{i1, i2, i3};
    for (int k = 0; k < 3; ++k) {
        const Index m = n[static_cast<std::size_t>(k)];
        if (m > 1 && (idx[static_cast<std::size_t>(k)] == 0 ||
                      idx[static_cast<std::size_t>(k)] == m - 1))
            w *= 0.5;
    }
    return w;
}

} // namespace fd

/// Directional part of the divergence-form operator: the 1D stencil
///   [ (s_{j-1}+s_j)/2, -(s_{j-1}+2 s_j+s_{j+1})/2, (s_j+s_{j+1})/2 ] / h^2
/// along the given axis (1-based), with no-flow boundaries realized by
/// mirroring neighbor value and conductivity across the boundary, and rows
/// scaled by the finite-volume node weights. Symmetric negative
/// semidefinite with constant functions in its kernel.
inline SpMat directional_operator(const std::array<Index, 3>& n, double h,
                                  const Eigen::VectorXd& sigma_field, int axis) {
    if (axis < 1 || axis > 3)
        throw InvalidArgumentError("directional_operator: axis must be 1, 2 or 3");
    const Index total = n[0] * n[1] * n[2];
    if (sigma_field.size() != total)
        throw InvalidArgumentError("directional_operator: field size mismatch");
    const Index stride = (axis == 1) ? 1 : (axis == 2 ? n[0] : n[0] * n[1]);
    const Index m = n[static_cast<std::size_t>(axis - 1)];
    const double inv_h2 = 1.0 / (h * h);

    std::vector<Eigen::Triplet<double>> trip;
    if (m > 1) trip.reserve(static_cast<std::size_t>(3 * total));
    Index flat = 0;
    for (Index i3 = 0; i3 < n[2]; ++i3) {
        for (Index i2 = 0; i2 < n[1]; ++i2) {
            for (Index i1 = 0; i1 < n[0]; ++i1, ++flat) {
                if (m == 1) continue;
                const std::array<Index, 3> idx{i1, i2, i3};
                const Index j = idx[static_cast<std::size_t>(axis - 1)];
                const double w = fd::node_weight(n, i1, i2, i3) * inv_h2;
                const double s_c = sigma_field[flat];
                // mirrored neighbors at the ends
                const Index prev = (j == 0) ? flat + stride : flat - stride;
                const Index next = (j == m - 1) ? flat - stride : flat + stride;
                const double s_prev = sigma_field[prev];
                const double s_next = sigma_field[next];
                const double c_prev = 0.5 * (s_prev + s_c);
                const double c_next = 0.5 * (s_c + s_next);
                trip.emplace_back(flat, prev, w * c_prev);
                trip.emplace_back(flat, next, w * c_next);
                trip.emplace_back(flat, flat, -w * (c_prev + c_next));
            }
        }
    }
    SpMat out(total, total);
    out.setFromTriplets(trip.begin(), trip.end()); // duplicate entries are summed
    return out;
}

/// 7-point operator for an isotropic per-node conductivity field: the sum of
/// the three directional stencils. For constant sigma = 1 and h = 1 the
/// interior rows carry the weights [1,1,1,-6,1,1,1].
inline SpMat assemble_stencil_operator(const std::array<Index, 3>& n, double h,
                                       const Eigen::VectorXd& sigma_field) {
    if (!(sigma_field.minCoeff() > 0.0))
        throw InvalidArgumentError("assemble_stencil_operator: sigma must be positive");
    SpMat b = directional_operator(n, h, sigma_field, 1);
    b += directional_operator(n, h, sigma_field, 2);
    b += directional_operator(n, h, sigma_field, 3);
    return b;
}

namespace fd {

/// Zeroes row and column `node`; optionally puts a 1 on the diagonal.
inline SpMat pin_node(const SpMat& a, Index node, bool identity_row) {
    SpMat out = a;
    for (int outer = 0; outer < out.outerSize(); ++outer)
        for (SpMat::InnerIterator it(out, outer); it; ++it)
            if (it.row() == node || it.col() == node) it.valueRef() = 0.0;
    if (identity_row) out.coeffRef(node, node) = 1.0;
    out.prune(0.0);
    out.makeCompressed();
    return out;
}

} // namespace fd

/// Affine decomposition A(p) = A0 + sum_k (p_k - p_ref0_k) Ak of the
/// (sign-flipped) system operator. Ak is the negated unit-coefficient
/// directional stencil, A0 collects the extracellular part and the
/// centering conductivity. The gauge is fixed by pinning node 0
/// symmetrically: row/column 0 cleared in every Ak, identity row in A0; the
/// combined operator is then symmetric positive definite throughout the
/// admissible box.
struct AffineOperator {
    SpMat a0;
    std::array<SpMat, 3> ak;
    Eigen::Vector3d p_ref0;
    Index n = 0;

    SpMat combined(const Eigen::Vector3d& p) const {
        SpMat a = a0;
        for (int k = 0; k < 3; ++k)
            a += (p[k] - p_ref0[k]) * ak[static_cast<std::size_t>(k)];
        return a;
    }
};

inline AffineOperator affine_decomposition(const MuscleModel& model,
                                           const ConductivitySpec& cond,
                                           const Eigen::Vector3d& p_mid) {
    cond.validate();
    if (!cond.contains(p_mid))
        throw InvalidArgumentError("affine_decomposition: centering outside [s-,s+]^3");
    const auto n = model.node_counts();
    const Index total = model.spatial_nodes();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(total);

    AffineOperator aff;
    aff.n = total;
    aff.p_ref0 = p_mid;
    SpMat a0(total, total);
    for (int k = 0; k < 3; ++k) {
        const SpMat lk = directional_operator(n, model.h_m, ones, k + 1);
        aff.ak[static_cast<std::size_t>(k)] = fd::pin_node(SpMat(-lk), 0, false);
        a0 += (-(cond.sigma_e[k] + p_mid[k])) * lk;
    }
    aff.a0 = fd::pin_node(a0, 0, true);
    return aff;
}

/// Direct one-pass assembly of the pinned system operator at a fixed
/// conductivity; an independent route used to cross-check the affine
/// reconstruction.
inline SpMat assemble_system_operator(const MuscleModel& model,
                                      const ConductivitySpec& cond,
                                      const Eigen::Vector3d& p) {
    const auto n = model.node_counts();
    const Index total = model.spatial_nodes();
    const double inv_h2 = 1.0 / (model.h_m * model.h_m);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(7 * total));
    Index flat = 0;
    for (Index i3 = 0; i3 < n[2]; ++i3) {
        for (Index i2 = 0; i2 < n[1]; ++i2) {
            for (Index i1 = 0; i1 < n[0]; ++i1, ++flat) {
                if (flat == 0) {
                    trip.emplace_back(0, 0, 1.0);
                    continue;
                }
                const double w = fd::node_weight(n, i1, i2, i3) * inv_h2;
                const std::array<Index, 3> idx{i1, i2, i3};
                for (int k = 0; k < 3; ++k) {
                    const Index m = n[static_cast<std::size_t>(k)];
                    if (m == 1) continue;
                    const Index stride = (k == 0) ? 1 : (k == 1 ? n[0] : n[0] * n[1]);
                    const double sigma = cond.sigma_e[k] + p[k];
                    const Index j = idx[static_cast<std::size_t>(k)];
                    const Index prev = (j == 0) ? flat + stride : flat - stride;
                    const Index next = (j == m - 1) ? flat - stride : flat + stride;
                    // negated divergence form: positive diagonal
                    if (prev != 0) trip.emplace_back(flat, prev, -w * sigma);
                    if (next != 0) trip.emplace_back(flat, next, -w * sigma);
                    trip.emplace_back(flat, flat, 2.0 * w * sigma);
                }
            }
        }
    }
    SpMat out(total, total);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

/// Per-direction right-hand-side components: column t of bk[k] is the
/// unit-conductivity directional stencil applied to V_m(., t) along axis
/// k+1, with the pinned entry forced to zero. The full right-hand side is
/// b(p, t) = sum_k p_k bk[k](:, t), matching the sign convention of
/// AffineOperator.
struct RhsComponents {
    std::array<Eigen::MatrixXd, 3> bk;
    Index t_steps = 0;

    Eigen::VectorXd combine(const Eigen::Vector3d& p, Index t) const {
        if (t < 0 || t >= t_steps)
            throw InvalidArgumentError("RhsComponents: time index out of range");
        return p[0] * bk[0].col(t) + p[1] * bk[1].col(t) + p[2] * bk[2].col(t);
    }
};

inline RhsComponents assemble_rhs(const MuscleModel& model) {
    const auto n = model.node_counts();
    const Index total = model.spatial_nodes();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(total);
    std::array<SpMat, 3> lk;
    for (int k = 0; k < 3; ++k) lk[static_cast<std::size_t>(k)] =
        directional_operator(n, model.h_m, ones, k + 1);

    RhsComponents rhs;
    rhs.t_steps = model.t_steps;
    for (int k = 0; k < 3; ++k)
        rhs.bk[static_cast<std::size_t>(k)].resize(total, model.t_steps);
    for (Index t = 0; t < model.t_steps; ++t) {
        const Eigen::VectorXd vm = assemble_vm(model, t);
        for (int k = 0; k < 3; ++k) {
            Eigen::VectorXd col = lk[static_cast<std::size_t>(k)] * vm;
            col[0] = 0.0; // pinned node
            rhs.bk[static_cast<std::size_t>(k)].col(t) = col;
        }
    }
    return rhs;
}

/// Reusable factorization of A(p) for solving many right-hand sides.
class ForwardFactorization {
public:
    ForwardFactorization(const AffineOperator& aff, const Eigen::Vector3d& p) {
        solver_.compute(aff.combined(p));
        if (solver_.info() != Eigen::Success)
            throw NumericalFailureError("forward solve: factorization failed");
    }

    /// Solves one time step and shifts the result to zero mean.
    Eigen::VectorXd solve(const RhsComponents& rhs, const Eigen::Vector3d& p,
                          Index t) const {
        Eigen::VectorXd phi = solver_.solve(rhs.combine(p, t));
        if (solver_.info() != Eigen::Success)
            throw NumericalFailureError("forward solve: solve failed");
        phi.array() -= phi.mean();
        return phi;
    }

    /// All time steps as columns, each shifted to zero mean.
    Eigen::MatrixXd solve_all(const RhsComponents& rhs, const Eigen::Vector3d& p) const {
        Eigen::MatrixXd phi(rhs.bk[0].rows(), rhs.t_steps);
        for (Index t = 0; t < rhs.t_steps; ++t) phi.col(t) = solve(rhs, p, t);
        return phi;
    }

private:
    Eigen::SimplicialLLT<SpMat> solver_;
};

inline Eigen::VectorXd solve_forward_dense(const AffineOperator& aff,
                                           const RhsComponents& rhs,
                                           const Eigen::Vector3d& p, Index t) {
    return ForwardFactorization(aff, p).solve(rhs, p, t);
}

/// Nearest grid node for each electrode position.
inline std::vector<Index> electrode_nodes(const MuscleModel& model,
                                          const MeasurementSetup& setup) {
    setup.validate(model.extent);
    const auto n = model.node_counts();
    std::vector<Index> nodes;
    nodes.reserve(static_cast<std::size_t>(setup.count()));
    for (Index e = 0; e < setup.count(); ++e) {
        std::array<Index, 3> idx{};
        for (int k = 0; k < 3; ++k) {
            const double pos = setup.electrodes(e, k) / model.h_m;
            idx[static_cast<std::size_t>(k)] = std::clamp<Index>(
                static_cast<Index>(std::lround(pos)), 0, n[static_cast<std::size_t>(k)] - 1);
        }
        nodes.push_back(model.node_index(idx[0], idx[1], idx[2]));
    }
    return nodes;
}

/// Field values at the nodes nearest to the electrodes.
inline Eigen::VectorXd observe(const Eigen::VectorXd& field, const MuscleModel& model,
                               const MeasurementSetup& setup) {
    const auto nodes = electrode_nodes(model, setup);
    Eigen::VectorXd out(static_cast<Index>(nodes.size()));
    for (std::size_t e = 0; e < nodes.size(); ++e)
        out[static_cast<Index>(e)] = field[nodes[e]];
    return out;
}

/// Stacks an M x T observation matrix into one vector, electrode fastest.
inline Eigen::VectorXd stack_observations(const Eigen::MatrixXd& obs) {
    return Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size());
}

/// Adds i.i.d. N(0, xi) noise; xi is the variance. xi = 0 passes the signal
/// through untouched.
inline Eigen::VectorXd add_noise(const Eigen::VectorXd& signal, double xi,
                                 RngStream& rng) {
    if (xi < 0) throw InvalidArgumentError("add_noise: xi must be >= 0");
    if (xi == 0.0) return signal;
    Eigen::VectorXd out = signal;
    const double sd = std::sqrt(xi);
    for (Index i = 0; i < out.size(); ++i) out[i] += sd * rng.normal();
    return out;
}

} // namespace emg
