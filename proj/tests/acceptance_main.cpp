// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each criterion prints one pass/fail line;
// the exit code is the number of failed criteria. Criteria that exercise
// the sampling pipeline run on the desk-scale configuration shipped in
// configs/desk.json.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emgtensor/config.hpp"
#include "emgtensor/fd_operator.hpp"
#include "emgtensor/ht_truncation.hpp"
#include "emgtensor/mh.hpp"
#include "emgtensor/tensorization.hpp"
#include "test_util.hpp"

#ifndef EMGTENSOR_CONFIG_DIR
#define EMGTENSOR_CONFIG_DIR "configs"
#endif

namespace {

using namespace emg;

struct DeskFixture {
    ExperimentConfig cfg;
    AffineOperator aff;
    ParameterGrid grid;
    SolutionTensor sol;
    double t_precompute = 0.0;
};

std::optional<DeskFixture> g_desk;

const DeskFixture& desk() {
    if (!g_desk) {
        DeskFixture f;
        f.cfg = load_experiment_config(std::string(EMGTENSOR_CONFIG_DIR) + "/desk.json");
        f.grid = f.cfg.grid();
        f.aff = affine_decomposition(f.cfg.model, f.cfg.cond, f.grid.midpoint());
        const auto t0 = std::chrono::steady_clock::now();
        f.sol = precompute_solution(f.cfg.model, f.cfg.cond, f.aff, f.grid, f.cfg.pcg);
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        f.t_precompute = dt.count();
        g_desk = std::move(f);
    }
    return *g_desk;
}

PosteriorProblem desk_problem(const DenseForwardMap& dense, double xi, Index j_samples) {
    const DeskFixture& f = desk();
    PosteriorProblem problem;
    problem.xi = xi;
    problem.grid = f.grid;
    problem.delta = f.cfg.delta;
    problem.j_samples = j_samples;
    problem.burn_in = f.cfg.burn_in;
    problem.seed = f.cfg.seed;
    problem.sample_direction = f.cfg.sample_direction;
    problem.start = f.cfg.p_ref;
    problem.start_direction = f.cfg.ref_direction;
    RngStream noise(f.cfg.seed, "noise");
    problem.data =
        add_noise(dense.evaluate_at(f.cfg.p_ref, f.cfg.ref_direction), xi, noise);
    return problem;
}

// --- criterion implementations -------------------------------------------

bool criterion_stencil_order(std::string& detail) {
    const auto sigma_fn = [](const Eigen::Vector3d& x) {
        return 2.0 + std::sin(x[0] + 0.5 * x[1] - 0.3 * x[2]);
    };
    const auto phi_fn = [](const Eigen::Vector3d& x) {
        return std::sin(x[0]) * std::cos(2.0 * x[1]) + x[2] * x[2] * x[2];
    };
    const auto rhs_fn = [&](const Eigen::Vector3d& x) {
        const double s = sigma_fn(x);
        const double c = std::cos(x[0] + 0.5 * x[1] - 0.3 * x[2]);
        const Eigen::Vector3d ds(c, 0.5 * c, -0.3 * c);
        const Eigen::Vector3d dphi(std::cos(x[0]) * std::cos(2.0 * x[1]),
                                   -2.0 * std::sin(x[0]) * std::sin(2.0 * x[1]),
                                   3.0 * x[2] * x[2]);
        const double lap = -5.0 * std::sin(x[0]) * std::cos(2.0 * x[1]) + 6.0 * x[2];
        return ds.dot(dphi) + s * lap;
    };

    std::vector<double> errs;
    for (const double h : {0.25, 0.125, 0.0625, 0.03125}) {
        const Index nn = static_cast<Index>(std::lround(1.0 / h)) + 1;
        const std::array<Index, 3> n{nn, nn, nn};
        Eigen::VectorXd sig(nn * nn * nn), phi(nn * nn * nn);
        Index flat = 0;
        for (Index i3 = 0; i3 < nn; ++i3)
            for (Index i2 = 0; i2 < nn; ++i2)
                for (Index i1 = 0; i1 < nn; ++i1, ++flat) {
                    const Eigen::Vector3d x(i1 * h, i2 * h, i3 * h);
                    sig[flat] = sigma_fn(x);
                    phi[flat] = phi_fn(x);
                }
        const Eigen::VectorXd got = assemble_stencil_operator(n, h, sig) * phi;
        double err_sq = 0.0;
        Index count = 0;
        flat = 0;
        for (Index i3 = 0; i3 < nn; ++i3)
            for (Index i2 = 0; i2 < nn; ++i2)
                for (Index i1 = 0; i1 < nn; ++i1, ++flat) {
                    if (i1 == 0 || i1 == nn - 1 || i2 == 0 || i2 == nn - 1 || i3 == 0 ||
                        i3 == nn - 1)
                        continue;
                    const Eigen::Vector3d x(i1 * h, i2 * h, i3 * h);
                    const double e = got[flat] - rhs_fn(x);
                    err_sq += e * e;
                    ++count;
                }
        errs.push_back(std::sqrt(err_sq / static_cast<double>(count)));
    }
    bool ok = true;
    char buf[160];
    std::string ratios;
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
        const double r = errs[i] / errs[i + 1];
        ok = ok && r >= 3.5 && r <= 4.5;
        std::snprintf(buf, sizeof(buf), "%s%.2f", i ? ", " : "", r);
        ratios += buf;
    }
    detail = "error ratios per halving: " + ratios + " (required within [3.5, 4.5])";
    return ok;
}

bool criterion_affine_exactness(std::string& detail) {
    const DeskFixture& f = desk();
    RngStream rng(1001, "affine-acc");
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Vector3d p;
        for (int k = 0; k < 3; ++k)
            p[k] = f.cfg.cond.s_minus +
                   rng.uniform01() * (f.cfg.cond.s_plus - f.cfg.cond.s_minus);
        const Eigen::MatrixXd direct =
            Eigen::MatrixXd(assemble_system_operator(f.cfg.model, f.cfg.cond, p));
        const Eigen::MatrixXd recon = Eigen::MatrixXd(f.aff.combined(p));
        worst = std::max(worst, (direct - recon).cwiseAbs().maxCoeff() /
                                    direct.cwiseAbs().maxCoeff());
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max relative entry deviation %.2e (limit 1e-13)",
                  worst);
    detail = buf;
    return worst <= 1e-13;
}

bool criterion_cp_rank_laws(std::string& detail) {
    RngStream rng(1002, "rank-laws");
    CpOperator<double> a({4, 4});
    for (int k = 0; k < 3; ++k) {
        Eigen::MatrixXd m1(4, 4), m2(4, 4);
        for (Index i = 0; i < 16; ++i) {
            m1(i / 4, i % 4) = rng.normal();
            m2(i / 4, i % 4) = rng.normal();
        }
        a.add_term({m1.sparseView(), m2.sparseView()});
    }
    const CpVector<double> x = test::random_cp({4, 4}, 2, rng);
    const Index apply_rank = cp_apply(a, x).rank();

    const DeskFixture& f = desk();
    const Index op_rank = tensorize_operator(f.aff, f.grid, f.cfg.model.t_steps).rank();
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "cp_apply(3,2) rank %lld (want 6); operator CP rank %lld (want 4)",
                  static_cast<long long>(apply_rank), static_cast<long long>(op_rank));
    detail = buf;
    return apply_rank == 6 && op_rank == 4;
}

bool criterion_truncation_quasi_optimality(std::string& detail) {
    RngStream rng(1003, "quasi-opt");
    const DimensionTree tree = build_balanced_tree(3);
    double worst_ratio = 0.0;
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const DenseTensor<double> t = test::random_dense({6, 6, 6}, rng);
        const HtTensor<double> x = cp_to_ht(test::dense_to_cp(t), tree);
        const HtTensor<double> y = truncate_to_rank(x, 1);
        const double err = (to_dense(y).values - t.values).norm();
        const double best = test::best_rank1_error(t);
        worst_ratio = std::max(worst_ratio, err / best);
        if (err > std::sqrt(3.0) * best * (1 + 1e-10)) ++violations;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "worst error/best-error %.4f over 100 trials (limit %.4f)",
                  worst_ratio, std::sqrt(3.0));
    detail = buf;
    return violations == 0;
}

bool criterion_solver_correctness(std::string& detail) {
    const DeskFixture& f = desk();
    // 4 x 4 x 4 conductivity grid at the desk spatial scale and 5 time steps
    const ParameterGrid grid = build_parameter_grid(
        f.cfg.cond.s_minus, f.cfg.cond.s_plus,
        (f.cfg.cond.s_plus - f.cfg.cond.s_minus) / 3.0);
    const AffineOperator aff =
        affine_decomposition(f.cfg.model, f.cfg.cond, grid.midpoint());
    PcgConfig cfg = f.cfg.pcg; // epsilon 1e-4, k_max 15, trunc_tol 1e-6
    const SolutionTensor sol =
        precompute_solution(f.cfg.model, f.cfg.cond, aff, grid, cfg);

    double worst = 0.0;
    for (int dir = 1; dir <= 3; ++dir) {
        const RhsComponents rhs = assemble_rhs(f.cfg.model.with_direction(dir));
        const HtTensor<double>& x = sol.per_direction[static_cast<std::size_t>(dir - 1)];
        for (Index i1 = 0; i1 < 4; ++i1)
            for (Index i2 = 0; i2 < 4; ++i2)
                for (Index i3 = 0; i3 < 4; ++i3) {
                    const Eigen::Vector3d p = grid.value_at({i1, i2, i3});
                    Eigen::SimplicialLLT<SpMat> llt(aff.combined(p));
                    if (llt.info() != Eigen::Success) {
                        detail = "dense factorization failed";
                        return false;
                    }
                    for (Index t = 0; t < f.cfg.model.t_steps; ++t) {
                        const Eigen::VectorXd want = llt.solve(rhs.combine(p, t));
                        Eigen::VectorXd got(aff.n);
                        for (Index i = 0; i < aff.n; ++i)
                            got[i] = ht_entry(x, {i, t, i1, i2, i3});
                        worst = std::max(worst, test::rel_err(got, want));
                    }
                }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "worst slice error %.2e over 3x64 systems x 5 steps (limit 1e-3)", worst);
    detail = buf;
    return worst <= 1e-3;
}

bool criterion_rank_profile(std::string& detail) {
    const DeskFixture& f = desk();
    Index param_max = 0, space_min = 1 << 30, overall_max = 0;
    for (int dir = 0; dir < 3; ++dir) {
        const HtTensor<double>& x = f.sol.per_direction[static_cast<std::size_t>(dir)];
        Index dir_max = 0;
        for (int id = 0; id < x.tree.node_count(); ++id) dir_max = std::max(dir_max, x.rank(id));
        overall_max = std::max(overall_max, dir_max);
        for (const Index mode : {3, 4, 5})
            param_max = std::max(param_max, x.rank(x.tree.leaf_of_mode(mode)));
        const Index space_rank = x.rank(x.tree.leaf_of_mode(1));
        space_min = std::min(space_min, space_rank);
        if (space_rank != dir_max) {
            char buf[96];
            std::snprintf(buf, sizeof(buf),
                          "space rank %lld is not the largest node rank %lld",
                          static_cast<long long>(space_rank),
                          static_cast<long long>(dir_max));
            detail = buf;
            return false;
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "parameter ranks <= %lld (limit 10); space rank >= %lld is the largest",
                  static_cast<long long>(param_max), static_cast<long long>(space_min));
    detail = buf;
    return param_max <= 10;
}

bool criterion_compression(std::string& detail) {
    const DeskFixture& f = desk();
    double stored_bytes = 0.0;
    for (int dir = 0; dir < 3; ++dir)
        stored_bytes +=
            8.0 * static_cast<double>(
                      ht_storage(f.sol.per_direction[static_cast<std::size_t>(dir)]));
    const auto sizes = f.grid.sizes();
    const double dense_bytes = 3.0 * 8.0 * static_cast<double>(f.cfg.model.spatial_nodes()) *
                               static_cast<double>(f.cfg.model.t_steps) *
                               static_cast<double>(sizes[0]) *
                               static_cast<double>(sizes[1]) *
                               static_cast<double>(sizes[2]);
    const double ratio = stored_bytes / dense_bytes;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.1f KB stored vs %.3g GB dense, ratio %.2e (limit 1e-4)",
                  stored_bytes / 1024.0, dense_bytes / 1e9, ratio);
    detail = buf;
    return ratio <= 1e-4;
}

bool criterion_chain_agreement(std::string& detail) {
    const DeskFixture& f = desk();
    const DenseForwardMap sa_map(f.cfg.model, f.cfg.setup, f.aff, f.grid);
    const TensorForwardMap ta_map(f.sol, f.cfg.model, f.cfg.setup);
    const PosteriorProblem problem = desk_problem(sa_map, f.cfg.setup.xi, 10000);

    const Chain chain_sa = run_chain(problem, sa_map);
    const Chain chain_ta = run_chain(problem, ta_map);

    Index same = 0;
    for (Index j = 0; j < chain_sa.length(); ++j)
        if (chain_sa.accepted[static_cast<std::size_t>(j)] ==
            chain_ta.accepted[static_cast<std::size_t>(j)])
            ++same;
    const double agreement =
        static_cast<double>(same) / static_cast<double>(chain_sa.length());

    const ChainStats ss = chain_stats(chain_sa, problem.burn_in);
    const ChainStats st = chain_stats(chain_ta, problem.burn_in);
    const double acc_gap = std::abs(ss.acceptance_rate - st.acceptance_rate);
    double mad_gap = 0.0, var_gap = 0.0;
    for (int k = 0; k < 3; ++k) {
        mad_gap = std::max(mad_gap, std::abs(ss.mad[k] - st.mad[k]));
        var_gap = std::max(var_gap, std::abs(ss.var[k] - st.var[k]));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "decision agreement %.4f (>=0.99); |d acc| %.4f (<=0.005); "
                  "|d MAD| %.3g, |d Var| %.3g (<=0.05)",
                  agreement, acc_gap, mad_gap, var_gap);
    detail = buf;
    return agreement >= 0.99 && acc_gap <= 0.005 && mad_gap <= 0.05 && var_gap <= 0.05;
}

bool criterion_speedup(std::string& detail) {
    const DeskFixture& f = desk();
    const DenseForwardMap sa_map(f.cfg.model, f.cfg.setup, f.aff, f.grid);
    const TensorForwardMap ta_map(f.sol, f.cfg.model, f.cfg.setup);
    PosteriorProblem problem = desk_problem(sa_map, f.cfg.setup.xi, 10000);
    problem.burn_in = 0;

    double per_sample_ratio = 0.0;
    double worst_model_gap = 0.0;
    for (const Index j : {Index(125), Index(1000), Index(10000)}) {
        problem.j_samples = j;
        auto t0 = std::chrono::steady_clock::now();
        const Chain chain_sa = run_chain(problem, sa_map);
        const std::chrono::duration<double> dt_sa = std::chrono::steady_clock::now() - t0;
        t0 = std::chrono::steady_clock::now();
        const Chain chain_ta = run_chain(problem, ta_map);
        const std::chrono::duration<double> dt_ta = std::chrono::steady_clock::now() - t0;
        const double t_s = median_seconds(chain_sa.elapsed_seconds);
        const double t_e = median_seconds(chain_ta.elapsed_seconds);
        const double measured = dt_sa.count() / (f.t_precompute + dt_ta.count());
        const double model =
            speedup_model(static_cast<double>(j), t_s, f.t_precompute, t_e);
        worst_model_gap = std::max(worst_model_gap, std::abs(measured - model) / model);
        if (j == 10000) per_sample_ratio = t_s / t_e;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "per-sample T_s/T_e %.1f (>=10); measured vs model speedup gap %.1f%% "
                  "(<=20%%)",
                  per_sample_ratio, 100.0 * worst_model_gap);
    detail = buf;
    return per_sample_ratio >= 10.0 && worst_model_gap <= 0.2;
}

bool criterion_posterior_sanity(std::string& detail) {
    const DeskFixture& f = desk();
    const DenseForwardMap sa_map(f.cfg.model, f.cfg.setup, f.aff, f.grid);
    const TensorForwardMap ta_map(f.sol, f.cfg.model, f.cfg.setup);
    const PosteriorProblem problem = desk_problem(sa_map, 0.01, 10000);

    const Chain chain = run_chain(problem, ta_map);
    const ChainStats stats = chain_stats(chain, problem.burn_in);
    double worst = 0.0;
    for (int k = 0; k < 3; ++k)
        worst = std::max(worst, std::abs(stats.mean[k] - f.cfg.p_ref[k]));
    const auto modal = 1 + std::distance(stats.direction_freq.begin(),
                                         std::max_element(stats.direction_freq.begin(),
                                                          stats.direction_freq.end()));
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "max |posterior mean - p_ref| %.3f (<= 2 delta = %.1f); modal direction "
                  "%lld (want %d)",
                  worst, 2.0 * problem.delta, static_cast<long long>(modal),
                  f.cfg.ref_direction);
    detail = buf;
    return worst <= 2.0 * problem.delta && modal == f.cfg.ref_direction;
}

bool criterion_stats_formulas(std::string& detail) {
    Chain chain;
    for (const double v : {1.0, 1.0, 3.0}) {
        chain.samples.push_back(Eigen::Vector3d(v, v, v));
        chain.indices.push_back({0, 0, 0});
        chain.directions.push_back(2);
        chain.accepted.push_back(1);
        chain.phis.push_back(0.0);
        chain.elapsed_seconds.push_back(0.0);
    }
    const ChainStats stats = chain_stats(chain, 0);
    const double mad_err = std::abs(stats.mad[0] - 8.0 / 9.0);
    const double var_err = std::abs(stats.var[0] - 4.0 / 3.0);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "MAD error %.2e, Var error %.2e (limits 1e-15)",
                  mad_err, var_err);
    detail = buf;
    return mad_err <= 1e-15 && var_err <= 1e-15;
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "stencil second-order consistency", criterion_stencil_order},
        {2, "affine operator exactness", criterion_affine_exactness},
        {3, "CP representation rank laws", criterion_cp_rank_laws},
        {4, "HT truncation quasi-optimality", criterion_truncation_quasi_optimality},
        {5, "tensor solver matches dense blockwise solves", criterion_solver_correctness},
        {6, "solution rank profile", criterion_rank_profile},
        {7, "solution tensor compression", criterion_compression},
        {8, "SA/TA chain agreement", criterion_chain_agreement},
        {9, "tensorized sampling speedup", criterion_speedup},
        {10, "posterior sanity", criterion_posterior_sanity},
        {11, "chain statistics formulas", criterion_stats_formulas},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        std::printf("[%s] criterion %2d: %s — %s (%.1f s)\n", ok ? "pass" : "FAIL", c.id,
                    c.name, detail.c_str(), dt.count());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0)
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    else
        std::printf("%d of %zu acceptance criteria FAILED\n", failures, criteria.size());
    return failures;
}
