// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "emgtensor/ht_truncation.hpp"
#include "test_util.hpp"

using namespace emg;

namespace {

HtTensor<double> dense_to_ht(const DenseTensor<double>& t, const DimensionTree& tree) {
    return cp_to_ht(test::dense_to_cp(t), tree);
}

} // namespace

TEST_CASE("orthogonalization preserves the represented tensor") {
    RngStream rng(31, "orth");
    const DimensionTree tree = build_balanced_tree(4);
    const HtTensor<double> x =
        cp_to_ht(test::random_cp({3, 4, 3, 2}, 3, rng), tree);
    const HtTensor<double> y = ht_orthogonalize(x);
    CHECK(test::rel_err(to_dense(y).values, to_dense(x).values) < 1e-12);
    for (int id = 0; id < tree.node_count(); ++id) {
        if (tree.is_root(id) || !tree.is_leaf(id)) continue;
        const auto& u = y.leaf_frames[static_cast<std::size_t>(id)];
        CHECK((u.transpose() * u - Eigen::MatrixXd::Identity(u.cols(), u.cols()))
                  .norm() < 1e-12);
    }
}

TEST_CASE("gramian eigenvalues are squared matricization singular values") {
    RngStream rng(32, "gram");
    const DimensionTree tree = build_balanced_tree(3);
    const DenseTensor<double> t = test::random_dense({4, 3, 5}, rng);
    const HtTensor<double> x = dense_to_ht(t, tree);
    const auto sv = node_singular_values(x);
    for (int id = 0; id < tree.node_count(); ++id) {
        if (tree.is_root(id)) continue;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(matricize(t, tree.node(id).label));
        const Eigen::VectorXd want = svd.singularValues();
        const Eigen::VectorXd& got = sv[static_cast<std::size_t>(id)];
        REQUIRE(got.size() >= want.size());
        for (Index i = 0; i < want.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-8).scale(want[0]));
    }
}

TEST_CASE("truncation to the existing ranks reproduces the tensor") {
    RngStream rng(33, "trunc-id");
    const DimensionTree tree = build_balanced_tree(3);
    const HtTensor<double> x =
        cp_to_ht(test::random_cp({4, 4, 4}, 2, rng), tree);
    const HtTensor<double> y = truncate(x, ht_ranks(x));
    CHECK(test::rel_err(to_dense(y).values, to_dense(x).values) < 1e-12);
}

TEST_CASE("truncating the zero tensor yields the zero tensor") {
    const DimensionTree tree = build_balanced_tree(3);
    const HtTensor<double> z = ht_zero<double>(tree, {4, 4, 4});
    CHECK(to_dense(truncate(z, 1e-6)).values.norm() == 0.0);
    CHECK(to_dense(truncate_to_rank(z, 1)).values.norm() == 0.0);
}

TEST_CASE("rank-target truncation is quasi-optimal against the dense oracle") {
    RngStream rng(34, "trunc-qo");
    const DimensionTree tree = build_balanced_tree(3);
    int worst_exceeded = 0;
    double worst_ratio = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const DenseTensor<double> t = test::random_dense({6, 6, 6}, rng);
        const HtTensor<double> x = dense_to_ht(t, tree);
        const HtTensor<double> y = truncate_to_rank(x, 1);
        const double err = (to_dense(y).values - t.values).norm();
        const double best = test::best_rank1_error(t);
        const double bound = std::sqrt(3.0) * best;
        worst_ratio = std::max(worst_ratio, err / best);
        if (err > bound * (1 + 1e-10)) ++worst_exceeded;
    }
    MESSAGE("worst error/best ratio over 20 trials: ", worst_ratio);
    CHECK(worst_exceeded == 0);
    CHECK(worst_ratio <= std::sqrt(3.0) + 1e-10);
}

TEST_CASE("tolerance-mode truncation meets the requested relative accuracy") {
    RngStream rng(35, "trunc-tol");
    const DimensionTree tree = build_balanced_tree(4);
    // smooth-ish tensor: low-rank plus small noise so there is a tail to cut
    const HtTensor<double> base =
        cp_to_ht(test::random_cp({5, 4, 5, 4}, 3, rng), tree);
    const HtTensor<double> noise = ht_scale(
        cp_to_ht(test::random_cp({5, 4, 5, 4}, 5, rng), tree), 1e-8);
    const HtTensor<double> x = ht_add(base, noise);

    for (const double tol : {1e-2, 1e-6}) {
        const HtTensor<double> y = truncate(x, tol);
        const double err =
            (to_dense(y).values - to_dense(x).values).norm() / to_dense(x).values.norm();
        CHECK(err <= tol * (1 + 1e-9));
    }
    // with a loose tolerance the noise ranks are actually removed
    const HtTensor<double> y = truncate(x, 1e-2);
    for (int id = 0; id < tree.node_count(); ++id) CHECK(y.rank(id) <= 3);
}

TEST_CASE("truncate validates targets") {
    const DimensionTree tree = build_balanced_tree(2);
    const HtTensor<double> z = ht_zero<double>(tree, {3, 3});
    CHECK_THROWS_AS(truncate(z, std::vector<Index>{1, 1}), InvalidArgumentError);
    CHECK_THROWS_AS(truncate(z, std::vector<Index>{1, 0, 1}), InvalidArgumentError);
    CHECK_THROWS_AS(truncate(z, -1.0), InvalidArgumentError);
}
