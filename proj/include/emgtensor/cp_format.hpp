// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

#include "emgtensor/dense_tensor.hpp"
#include "emgtensor/errors.hpp"

namespace emg {

inline constexpr Index kDenseMaterializationCap = 10'000'000;

/// Sum of rank-1 Kronecker products: b = sum_k b_k^(1) x ... x b_k^(d).
/// Rank 0 is legal and represents the zero tensor.
template <typename Scalar>
struct CpVector {
    std::vector<Index> mode_sizes;
    // factors[k][l] is the length-n_l factor of term k in mode l
    std::vector<std::vector<Eigen::VectorX<Scalar>>> factors;

    CpVector() = default;
    explicit CpVector(std::vector<Index> sizes) : mode_sizes(std::move(sizes)) {
        DenseTensor<Scalar>::check_shape(mode_sizes);
    }

    Index dims() const { return static_cast<Index>(mode_sizes.size()); }
    Index rank() const { return static_cast<Index>(factors.size()); }

    void add_term(std::vector<Eigen::VectorX<Scalar>> term) {
        if (term.size() != mode_sizes.size())
            throw InvalidArgumentError("CpVector: term arity mismatch");
        for (std::size_t l = 0; l < term.size(); ++l)
            if (term[l].size() != mode_sizes[l])
                throw InvalidArgumentError("CpVector: factor length mismatch");
        factors.push_back(std::move(term));
    }

    /// Entry (i_1..i_d) by direct summation; O(r d) per call.
    Scalar entry(const std::vector<Index>& idx) const {
        Scalar sum = 0;
        for (const auto& term : factors) {
            Scalar prod = 1;
            for (std::size_t l = 0; l < term.size(); ++l)
                prod *= term[l][idx[l]];
            sum += prod;
        }
        return sum;
    }
};

/// CP operator: each factor is an n_l x n_l matrix, stored sparse.
template <typename Scalar>
struct CpOperator {
    using Factor = Eigen::SparseMatrix<Scalar>;

    std::vector<Index> mode_sizes;
    std::vector<std::vector<Factor>> factors; // factors[k][l]

    CpOperator() = default;
    explicit CpOperator(std::vector<Index> sizes) : mode_sizes(std::move(sizes)) {
        DenseTensor<Scalar>::check_shape(mode_sizes);
    }

    Index dims() const { return static_cast<Index>(mode_sizes.size()); }
    Index rank() const { return static_cast<Index>(factors.size()); }

    void add_term(std::vector<Factor> term) {
        if (term.size() != mode_sizes.size())
            throw InvalidArgumentError("CpOperator: term arity mismatch");
        for (std::size_t l = 0; l < term.size(); ++l)
            if (term[l].rows() != mode_sizes[l] || term[l].cols() != mode_sizes[l])
                throw InvalidArgumentError("CpOperator: factor must be square n_l x n_l");
        factors.push_back(std::move(term));
    }

    static Factor identity(Index n) {
        Factor id(n, n);
        id.setIdentity();
        return id;
    }

    static Factor diagonal(const Eigen::VectorX<Scalar>& d) {
        Factor m(d.size(), d.size());
        m.reserve(Eigen::VectorXi::Constant(static_cast<int>(d.size()), 1));
        for (Index i = 0; i < d.size(); ++i) m.insert(i, i) = d[i];
        m.makeCompressed();
        return m;
    }

    /// Rank-1 identity operator on the given mode sizes.
    static CpOperator identity_operator(std::vector<Index> sizes) {
        CpOperator op(std::move(sizes));
        std::vector<Factor> term;
        term.reserve(op.mode_sizes.size());
        for (const Index n : op.mode_sizes) term.push_back(identity(n));
        op.add_term(std::move(term));
        return op;
    }
};

/// Materializes a CP vector; guarded by a configurable entry cap.
template <typename Scalar>
DenseTensor<Scalar> cp_to_full(const CpVector<Scalar>& v,
                               Index cap = kDenseMaterializationCap) {
    const Index total = DenseTensor<Scalar>::check_shape(v.mode_sizes);
    if (total > cap)
        throw ResourceLimitError("cp_to_full: tensor exceeds materialization cap");
    DenseTensor<Scalar> out(v.mode_sizes);
    Eigen::VectorX<Scalar> term_values(total);
    for (const auto& term : v.factors) {
        // build x_k^(d) x ... x x_k^(1) with the first mode fastest
        term_values.head(v.mode_sizes[0]) = term[0];
        Index built = v.mode_sizes[0];
        for (Index l = 1; l < v.dims(); ++l) {
            const auto& f = term[static_cast<std::size_t>(l)];
            for (Index j = f.size() - 1; j >= 0; --j)
                term_values.segment(j * built, built) =
                    term_values.head(built) * f[j];
            built *= f.size();
        }
        out.values += term_values;
    }
    return out;
}

/// Applies a CP operator to a CP vector without truncation. The result has
/// representation rank rank(A)*rank(x); term (i, j) of the inputs lands at
/// output index i + rank(A)*j, matching y_k^(nu) = A_i^(nu) x_j^(nu).
template <typename Scalar>
CpVector<Scalar> cp_apply(const CpOperator<Scalar>& a, const CpVector<Scalar>& x) {
    if (a.mode_sizes != x.mode_sizes)
        throw InvalidArgumentError("cp_apply: mode sizes of operator and vector differ");
    CpVector<Scalar> y(x.mode_sizes);
    y.factors.reserve(static_cast<std::size_t>(a.rank() * x.rank()));
    for (Index j = 0; j < x.rank(); ++j) {
        for (Index i = 0; i < a.rank(); ++i) {
            std::vector<Eigen::VectorX<Scalar>> term(x.mode_sizes.size());
            for (std::size_t l = 0; l < x.mode_sizes.size(); ++l)
                term[l] = a.factors[static_cast<std::size_t>(i)][l] *
                          x.factors[static_cast<std::size_t>(j)][l];
            y.factors.push_back(std::move(term));
        }
    }
    return y;
}

/// Reinterprets a CP operator as a CP vector over modes of size n_l^2
/// (each factor matrix vectorized column-major).
template <typename Scalar>
CpVector<Scalar> cp_operator_as_vector(const CpOperator<Scalar>& a) {
    std::vector<Index> sizes(a.mode_sizes.size());
    for (std::size_t l = 0; l < sizes.size(); ++l)
        sizes[l] = a.mode_sizes[l] * a.mode_sizes[l];
    CpVector<Scalar> v(std::move(sizes));
    for (const auto& term : a.factors) {
        std::vector<Eigen::VectorX<Scalar>> vec_term(term.size());
        for (std::size_t l = 0; l < term.size(); ++l) {
            Eigen::MatrixX<Scalar> dense = Eigen::MatrixX<Scalar>(term[l]);
            vec_term[l] = Eigen::Map<Eigen::VectorX<Scalar>>(dense.data(), dense.size());
        }
        v.add_term(std::move(vec_term));
    }
    return v;
}

} // namespace emg
