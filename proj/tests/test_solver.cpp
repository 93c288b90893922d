// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "emgtensor/fd_operator.hpp"
#include "emgtensor/pcg.hpp"
#include "emgtensor/tensorization.hpp"
#include "test_util.hpp"

using namespace emg;

namespace {

MuscleModel tiny_model() {
    MuscleModel m;
    m.extent = {2.0, 1.0, 0.5};
    m.h_m = 0.5; // 5 x 3 x 2 grid, 30 nodes
    m.fiber_layout = {3, 3};
    m.t_steps = 5;
    m.h_t = 0.1;
    m.direction = 2;
    return m;
}

} // namespace

TEST_CASE("identity system converges in one iteration") {
    RngStream rng(51, "pcg-id");
    const DimensionTree tree = build_balanced_tree(3);
    const std::vector<Index> sizes = {4, 3, 5};
    const HtTensor<double> b = cp_to_ht(test::random_cp(sizes, 2, rng), tree);
    const auto a = CpOperator<double>::identity_operator(sizes);
    const auto m = Rank1Preconditioner<double>::identity(sizes);
    const HtTensor<double> x0 = ht_zero<double>(tree, sizes);

    PcgConfig cfg;
    const auto res = pcg_solve(a, b, m, x0, cfg);
    CHECK(res.iterations == 1);
    REQUIRE(res.history.size() == 2);
    CHECK(res.history[0] == doctest::Approx(1.0));
    CHECK(res.history[1] < cfg.epsilon);
    CHECK(ht_norm(ht_add(res.x, ht_scale(b, -1.0))) / ht_norm(b) < 10 * cfg.trunc_tol);
}

TEST_CASE("zero right-hand side returns the zero tensor") {
    const DimensionTree tree = build_balanced_tree(3);
    const std::vector<Index> sizes = {4, 3, 5};
    const HtTensor<double> b = ht_zero<double>(tree, sizes);
    const auto a = CpOperator<double>::identity_operator(sizes);
    const auto m = Rank1Preconditioner<double>::identity(sizes);
    const auto res = pcg_solve(a, b, m, ht_zero<double>(tree, sizes), PcgConfig{});
    CHECK(res.history.empty());
    CHECK(ht_norm(res.x) == 0.0);
}

TEST_CASE("parameter-dependent system matches dense blockwise solves") {
    // 4-mode variant: (space 30, time 5, p1 4, p2 4) with the third
    // conductivity fixed into the constant part of the operator
    const MuscleModel model = tiny_model();
    ConductivitySpec cond;
    cond.s_minus = 0.5;
    const RhsComponents rhs = assemble_rhs(model);
    Eigen::VectorXd g1(4), g2(4);
    g1 << 0.5, 2.0, 5.0, 9.0;
    g2 << 1.0, 3.0, 6.0, 10.0;
    const double p3_fixed = 2.5;
    const Eigen::Vector3d mid(4.75, 5.5, p3_fixed);
    const AffineOperator aff = affine_decomposition(model, cond, mid);

    // A = A(mid) (x) I (x) I (x) I + A1 (x) I (x) diag(g1-c1) (x) I + ...
    CpOperator<double> op({aff.n, model.t_steps, 4, 4});
    const auto id_t = CpOperator<double>::identity(model.t_steps);
    const auto id_p = CpOperator<double>::identity(4);
    op.add_term({aff.a0, id_t, id_p, id_p});
    op.add_term({aff.ak[0], id_t,
                 CpOperator<double>::diagonal(g1.array() - mid[0]), id_p});
    op.add_term({aff.ak[1], id_t, id_p,
                 CpOperator<double>::diagonal(g2.array() - mid[1])});

    // right-hand side: b(p, t) = p1 B1(:,t) + p2 B2(:,t) + p3_fixed B3(:,t)
    CpVector<double> b({aff.n, model.t_steps, 4, 4});
    const Eigen::VectorXd ones4 = Eigen::VectorXd::Ones(4);
    for (int k = 0; k < 3; ++k) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(rhs.bk[static_cast<std::size_t>(k)],
                                           Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& s = svd.singularValues();
        for (Index q = 0; q < s.size(); ++q) {
            if (s[q] <= 1e-14 * s[0]) break;
            std::vector<Eigen::VectorXd> term = {svd.matrixU().col(q) * s[q],
                                                 svd.matrixV().col(q), ones4, ones4};
            if (k == 0) term[2] = g1;
            if (k == 1) term[3] = g2;
            if (k == 2) term[0] *= p3_fixed;
            b.add_term(std::move(term));
        }
    }

    const DimensionTree tree = build_balanced_tree(4);
    const HtTensor<double> b_ht = cp_to_ht(b, tree);
    const auto precond = Rank1Preconditioner<double>::spatial(
        {aff.n, model.t_steps, 4, 4}, aff.a0);
    PcgConfig cfg; // epsilon 1e-4, k_max 15, trunc 1e-6
    const auto res =
        pcg_solve(op, b_ht, precond, ht_zero<double>(tree, b_ht.mode_sizes), cfg);
    CHECK(res.history.back() <= cfg.epsilon);

    double worst = 0.0;
    for (Index i1 = 0; i1 < 4; ++i1) {
        for (Index i2 = 0; i2 < 4; ++i2) {
            const Eigen::Vector3d p(g1[i1], g2[i2], p3_fixed);
            Eigen::SimplicialLLT<SpMat> llt(aff.combined(p));
            REQUIRE(llt.info() == Eigen::Success);
            for (Index t = 0; t < model.t_steps; ++t) {
                const Eigen::VectorXd want = llt.solve(rhs.combine(p, t));
                Eigen::VectorXd got(aff.n);
                for (Index i = 0; i < aff.n; ++i)
                    got[i] = ht_entry(res.x, {i, t, i1, i2});
                worst = std::max(worst, test::rel_err(got, want));
            }
        }
    }
    MESSAGE("worst slice error vs dense blockwise solves: ", worst);
    CHECK(worst <= 1e-3);
}

TEST_CASE("preconditioner inverse application") {
    RngStream rng(52, "precond");
    const DimensionTree tree = build_balanced_tree(3);
    const std::vector<Index> sizes = {6, 3, 4};
    const HtTensor<double> r = cp_to_ht(test::random_cp(sizes, 2, rng), tree);

    SUBCASE("all-identity preconditioner returns the input") {
        const auto m = Rank1Preconditioner<double>::identity(sizes);
        const HtTensor<double> z = apply_preconditioner_inverse(m, r);
        CHECK(ht_norm(ht_add(z, ht_scale(r, -1.0))) == 0.0);
    }
    SUBCASE("diagonal spatial factor scales leaf rows") {
        Eigen::VectorXd d(6);
        d << 1, 2, 4, 8, 16, 32;
        const auto m = Rank1Preconditioner<double>::spatial(
            sizes, CpOperator<double>::diagonal(d));
        const HtTensor<double> z = apply_preconditioner_inverse(m, r);
        const int leaf = tree.leaf_of_mode(1);
        const Eigen::MatrixXd want =
            d.cwiseInverse().asDiagonal() *
            r.leaf_frames[static_cast<std::size_t>(leaf)];
        CHECK((z.leaf_frames[static_cast<std::size_t>(leaf)] - want).norm() < 1e-14);
        for (int id = 0; id < tree.node_count(); ++id) CHECK(z.rank(id) == r.rank(id));
    }
    SUBCASE("random SPD factor matches the dense Kronecker solve") {
        Eigen::MatrixXd g(6, 6);
        for (Index i = 0; i < 36; ++i) g(i / 6, i % 6) = rng.normal();
        const Eigen::MatrixXd spd =
            g * g.transpose() + 6.0 * Eigen::MatrixXd::Identity(6, 6);
        const auto m = Rank1Preconditioner<double>::spatial(sizes, spd.sparseView());
        const HtTensor<double> z = apply_preconditioner_inverse(m, r);
        // dense oracle: (M^-1 (x) I (x) I) vec(r) applied slice by slice
        const Eigen::VectorXd dense_r = to_dense(r).values;
        Eigen::VectorXd want(dense_r.size());
        for (Index block = 0; block < dense_r.size() / 6; ++block)
            want.segment(6 * block, 6) =
                spd.ldlt().solve(dense_r.segment(6 * block, 6));
        CHECK(test::rel_err(to_dense(z).values, want) < 1e-12);
    }
    SUBCASE("non-SPD factor is rejected at construction") {
        Eigen::VectorXd d(6);
        d << 1, 2, 3, -1, 5, 6;
        CHECK_THROWS_AS(Rank1Preconditioner<double>::spatial(
                            sizes, CpOperator<double>::diagonal(d)),
                        InvalidArgumentError);
    }
}

TEST_CASE("indefinite operator triggers the breakdown error") {
    const DimensionTree tree = build_balanced_tree(2);
    const std::vector<Index> sizes = {3, 3};
    Eigen::VectorXd d(3);
    d << 1.0, -2.0, 1.0;
    CpOperator<double> a(sizes);
    a.add_term({CpOperator<double>::diagonal(d), CpOperator<double>::identity(3)});
    CpVector<double> bv(sizes);
    bv.add_term({Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(1, 1, 1)});
    const HtTensor<double> b = cp_to_ht(bv, tree);
    const auto m = Rank1Preconditioner<double>::identity(sizes);
    try {
        pcg_solve(a, b, m, ht_zero<double>(tree, sizes), PcgConfig{});
        FAIL("expected SolverBreakdownError");
    } catch (const SolverBreakdownError& e) {
        CHECK(e.iteration == 0);
    }
}

TEST_CASE("history matches independently recomputed residuals") {
    RngStream rng(53, "pcg-hist");
    const std::vector<Index> sizes = {8, 4, 4};
    const DimensionTree tree = build_balanced_tree(3);
    Eigen::MatrixXd g(8, 8);
    for (Index i = 0; i < 64; ++i) g(i / 8, i % 8) = rng.normal();
    const Eigen::MatrixXd spd =
        g * g.transpose() + 8.0 * Eigen::MatrixXd::Identity(8, 8);
    CpOperator<double> a(sizes);
    a.add_term({spd.sparseView(), CpOperator<double>::identity(4),
                CpOperator<double>::identity(4)});
    Eigen::VectorXd scale(4);
    scale << 1.0, 1.2, 1.5, 2.0;
    a.add_term({Eigen::MatrixXd::Identity(8, 8).sparseView(),
                CpOperator<double>::diagonal(scale), CpOperator<double>::identity(4)});
    const HtTensor<double> b = cp_to_ht(test::random_cp(sizes, 3, rng), tree);
    const auto m = Rank1Preconditioner<double>::spatial(sizes, spd.sparseView());

    PcgConfig cfg;
    cfg.trunc_tol = 1e-8;
    std::vector<double> recomputed;
    const double norm_b = ht_norm(b);
    const auto res = pcg_solve(
        a, b, m, ht_zero<double>(tree, sizes), cfg,
        [&](const HtTensor<double>& xk, int) {
            const HtTensor<double> r = ht_add(b, ht_scale(apply_operator(a, xk), -1.0));
            recomputed.push_back(ht_norm(r) / norm_b);
        });
    REQUIRE(recomputed.size() + 1 == res.history.size());
    for (std::size_t i = 0; i < recomputed.size(); ++i)
        CHECK(std::abs(res.history[i + 1] - recomputed[i]) <=
              10 * cfg.trunc_tol * std::max(1.0, recomputed[i]));
    CHECK(res.history.back() <= cfg.epsilon);
}

TEST_CASE("untruncated iterations match a dense textbook PCG") {
    RngStream rng(54, "pcg-dense-cmp");
    const std::vector<Index> sizes = {6, 3};
    const DimensionTree tree = build_balanced_tree(2);
    Eigen::MatrixXd g(6, 6);
    for (Index i = 0; i < 36; ++i) g(i / 6, i % 6) = rng.normal();
    const Eigen::MatrixXd spd =
        g * g.transpose() + 6.0 * Eigen::MatrixXd::Identity(6, 6);
    CpOperator<double> a(sizes);
    a.add_term({spd.sparseView(), CpOperator<double>::identity(3)});
    const HtTensor<double> b = cp_to_ht(test::random_cp(sizes, 2, rng), tree);
    const auto m = Rank1Preconditioner<double>::identity(sizes);

    PcgConfig cfg;
    cfg.trunc_tol = 1e-13; // effectively disables truncation
    cfg.epsilon = 1e-9;
    cfg.k_max = 18;
    std::vector<Eigen::VectorXd> iterates;
    pcg_solve(a, b, m, ht_zero<double>(tree, sizes), cfg,
              [&](const HtTensor<double>& xk, int) {
                  iterates.push_back(to_dense(xk).values);
              });

    // dense reference with the same coefficient formulas
    const Eigen::VectorXd b_dense = to_dense(b).values;
    Eigen::MatrixXd a_dense = Eigen::MatrixXd::Zero(18, 18);
    for (Index c = 0; c < 3; ++c) a_dense.block(6 * c, 6 * c, 6, 6) = spd;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(18);
    Eigen::VectorXd rho = b_dense;
    Eigen::VectorXd pi = rho;
    Eigen::VectorXd theta = a_dense * pi;
    for (std::size_t it = 0; it < iterates.size(); ++it) {
        const double alpha = rho.dot(pi) / theta.dot(pi);
        x += alpha * pi;
        rho = b_dense - a_dense * x;
        const double beta = theta.dot(rho) / theta.dot(pi);
        pi = rho - beta * pi;
        theta = a_dense * pi;
        CHECK((iterates[it] - x).norm() <= 1e-10 * std::max(1.0, x.norm()));
    }
}
