// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emgtensor/ht_tensor.hpp"
#include "emgtensor/ht_truncation.hpp"

namespace emg {

struct PcgConfig {
    double epsilon = 1e-4;   // relative residual target
    int k_max = 15;          // iteration cap
    double trunc_tol = 1e-6; // relative truncation accuracy inside the loop
    std::string log_path;    // optional per-iteration CSV log

    void validate() const {
        if (epsilon <= 0) throw InvalidArgumentError("PcgConfig: epsilon must be > 0");
        if (k_max < 1) throw InvalidArgumentError("PcgConfig: k_max must be >= 1");
        if (trunc_tol <= 0) throw InvalidArgumentError("PcgConfig: trunc_tol must be > 0");
    }
};

/// Rank-1 preconditioner M = F_d x ... x F_1 where all but a few factors are
/// identities. Non-identity factors must be symmetric positive definite;
/// each is Cholesky-factorized once at construction. Applying the inverse
/// maps every leaf frame through the factor solve and never changes ranks.
template <typename Scalar>
class Rank1Preconditioner {
public:
    using Factor = Eigen::SparseMatrix<Scalar>;

    /// factors[l] empty means identity in mode l+1.
    Rank1Preconditioner(std::vector<Index> mode_sizes,
                        std::vector<std::optional<Factor>> factors)
        : mode_sizes_(std::move(mode_sizes)) {
        if (factors.size() != mode_sizes_.size())
            throw InvalidArgumentError("Rank1Preconditioner: one factor slot per mode");
        for (std::size_t l = 0; l < factors.size(); ++l) {
            if (!factors[l].has_value()) {
                solvers_.push_back(nullptr);
                continue;
            }
            const Factor& m = *factors[l];
            if (m.rows() != mode_sizes_[l] || m.cols() != mode_sizes_[l])
                throw InvalidArgumentError("Rank1Preconditioner: factor size mismatch");
            auto solver = std::make_shared<Eigen::SimplicialLLT<Factor>>();
            solver->compute(m);
            if (solver->info() != Eigen::Success)
                throw InvalidArgumentError(
                    "Rank1Preconditioner: factor is not symmetric positive definite");
            solvers_.push_back(std::move(solver));
        }
    }

    /// Identity preconditioner on the given mode sizes.
    static Rank1Preconditioner identity(std::vector<Index> mode_sizes) {
        std::vector<std::optional<Factor>> none(mode_sizes.size());
        return Rank1Preconditioner(std::move(mode_sizes), std::move(none));
    }

    /// Preconditioner Id x ... x Id x A0 with the given spatial factor in
    /// mode 1.
    static Rank1Preconditioner spatial(std::vector<Index> mode_sizes, Factor a0) {
        std::vector<std::optional<Factor>> f(mode_sizes.size());
        f[0] = std::move(a0);
        return Rank1Preconditioner(std::move(mode_sizes), std::move(f));
    }

    const std::vector<Index>& mode_sizes() const { return mode_sizes_; }

    bool is_identity_mode(Index mode) const {
        return solvers_[static_cast<std::size_t>(mode - 1)] == nullptr;
    }

    Eigen::MatrixX<Scalar> solve_mode(Index mode, const Eigen::MatrixX<Scalar>& rhs) const {
        return solvers_[static_cast<std::size_t>(mode - 1)]->solve(rhs);
    }

private:
    std::vector<Index> mode_sizes_;
    std::vector<std::shared_ptr<Eigen::SimplicialLLT<Factor>>> solvers_;
};

/// zeta = M^{-1} rho: the inverse factors act on the leaf frames only, so
/// no node rank changes.
template <typename Scalar>
HtTensor<Scalar> apply_preconditioner_inverse(const Rank1Preconditioner<Scalar>& m,
                                              const HtTensor<Scalar>& r) {
    if (m.mode_sizes() != r.mode_sizes)
        throw InvalidArgumentError("apply_preconditioner_inverse: mode sizes differ");
    HtTensor<Scalar> out = r;
    for (Index mode = 1; mode <= r.dims(); ++mode) {
        if (m.is_identity_mode(mode)) continue;
        const int leaf = r.tree.leaf_of_mode(mode);
        out.leaf_frames[static_cast<std::size_t>(leaf)] =
            m.solve_mode(mode, r.leaf_frames[static_cast<std::size_t>(leaf)]);
    }
    return out;
}

template <typename Scalar>
struct PcgResult {
    HtTensor<Scalar> x;
    std::vector<double> history; // relative residual norms, starting at k=0
    int iterations = 0;
};

/// Preconditioned conjugate gradients with truncated tensor arithmetic.
/// The operator must be symmetric positive definite on the represented
/// space. Coefficients follow the truncated-CG formulation:
///   alpha_k = <rho_k, pi_k> / <theta_k, pi_k>,
///   beta_k  = <theta_k, zeta_{k+1}> / <theta_k, pi_k>,
/// with theta = truncate(A pi) and truncation after every update. A
/// non-positive <theta, pi> aborts with SolverBreakdownError; truncation can
/// cause this even for definite operators.
template <typename Scalar>
PcgResult<Scalar> pcg_solve(
    const CpOperator<Scalar>& a, const HtTensor<Scalar>& b,
    const Rank1Preconditioner<Scalar>& m, const HtTensor<Scalar>& x0,
    const PcgConfig& cfg,
    const std::function<void(const HtTensor<std::type_identity_t<Scalar>>&, int)>&
        on_iterate = {}) {
    cfg.validate();
    if (a.mode_sizes != b.mode_sizes || x0.mode_sizes != b.mode_sizes)
        throw InvalidArgumentError("pcg_solve: inconsistent mode sizes");

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        log << "iter,k,rel_residual,max_rank\n";
    }

    const double norm_b = static_cast<double>(ht_norm(b));
    PcgResult<Scalar> result{x0, {}, 0};
    if (norm_b == 0.0) {
        result.x = ht_zero<Scalar>(b.tree, b.mode_sizes);
        return result;
    }

    const auto trunc = [&](const HtTensor<Scalar>& t) { return truncate(t, cfg.trunc_tol); };
    const auto residual = [&](const HtTensor<Scalar>& x) {
        return trunc(ht_add(b, ht_scale(apply_operator(a, x), Scalar(-1))));
    };

    HtTensor<Scalar> x = x0;
    HtTensor<Scalar> rho = residual(x);
    HtTensor<Scalar> zeta = apply_preconditioner_inverse(m, rho);
    HtTensor<Scalar> pi = zeta;
    HtTensor<Scalar> theta = trunc(apply_operator(a, pi));
    int k = 0;
    double rel = static_cast<double>(ht_norm(rho)) / norm_b;
    result.history.push_back(rel);
    int log_row = 0;
    if (log.is_open())
        log << log_row++ << ',' << k << ',' << rel << ',' << ht_max_rank(x) << '\n';

    while (rel > cfg.epsilon && k < cfg.k_max) {
        const Scalar den = ht_inner(theta, pi);
        if (!(den > Scalar(0)))
            throw SolverBreakdownError(
                "pcg_solve: <theta, pi> <= 0 (indefinite direction) at iteration " +
                    std::to_string(k),
                k);
        const Scalar alpha = ht_inner(rho, pi) / den;
        x = trunc(ht_add(x, ht_scale(pi, alpha)));
        rho = residual(x);
        const double nr = static_cast<double>(ht_norm(rho));
        if (!std::isfinite(nr))
            throw NumericalFailureError("pcg_solve: non-finite residual norm");
        rel = nr / norm_b;
        result.history.push_back(rel);
        zeta = apply_preconditioner_inverse(m, rho);
        const Scalar beta = ht_inner(theta, zeta) / den;
        pi = trunc(ht_add(zeta, ht_scale(pi, -beta)));
        theta = trunc(apply_operator(a, pi));
        ++k;
        if (on_iterate) on_iterate(x, k);
        if (log.is_open())
            log << log_row++ << ',' << k << ',' << rel << ',' << ht_max_rank(x) << '\n';
    }
    result.x = std::move(x);
    result.iterations = k;
    return result;
}

} // namespace emg
