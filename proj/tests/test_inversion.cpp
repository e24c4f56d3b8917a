#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "h2/inversion.hpp"
#include "test_support.hpp"

using namespace h2;
using namespace h2::testing;

namespace {

std::shared_ptr<const BlockTree> tree1d(Index n, Index leaf) {
    auto ct = build_cluster_tree(grid1d(n, 0, 1), leaf);
    return build_block_tree(ct, ct, 1.0, Admissibility::weak);
}

// well-conditioned SPD matrix with hierarchical off-diagonal structure
Matrix kernel_matrix(Index n) {
    Matrix a(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            a(i, j) = std::exp(-std::abs(double(i - j)) / (0.2 * double(n)));
    a += 0.5 * Matrix::Identity(n, n);
    return a;
}

H2Matrix compress_dense(const Matrix& a, std::shared_ptr<const BlockTree> bt, double eps,
                        uint64_t seed = 42) {
    DenseOperator op(a, true);
    PeelConfig cfg;
    cfg.eps = eps;
    cfg.seed = seed;
    return peel_construct(op, bt, cfg).matrix;
}

} // namespace

TEST_CASE("threshold schedule") {
    ThresholdSchedule st;
    CHECK(threshold_schedule(0.5, 3, 1e-6, st) == 1e-6);
    ThresholdSchedule dyn;
    dyn.mode = ThresholdSchedule::Mode::dynamic;
    CHECK(threshold_schedule(1.0, 0, 1e-6, dyn) == 1e-2);
    CHECK(threshold_schedule(1e-3, 5, 1e-6, dyn) == 1e-6);
    CHECK(threshold_schedule(3e-2, 2, 1e-6, dyn) == doctest::Approx(9e-5));
}

TEST_CASE("dense Newton-Schulz: identity converges in zero iterations") {
    Matrix id = Matrix::Identity(8, 8);
    auto res = newton_schulz_dense(id, id, 1e-10);
    CHECK(res.trace.iterations() == 0);
    CHECK(res.trace.converged);
    CHECK(res.trace.final_residual == 0.0);
}

TEST_CASE("dense Newton-Schulz: diag(1,2,4) from X0 = I/4 needs exactly 6 iterations") {
    // scalar recurrence e_{k+1} = e_k^2 per eigenvalue; worst e_0 = 3/4
    // gives E <= 1e-6 first at k = 6
    Vector d(3);
    d << 1, 2, 4;
    Matrix a = d.asDiagonal();
    auto res = newton_schulz_dense(a, Matrix::Identity(3, 3) / 4.0, 1e-6);
    CHECK(res.trace.iterations() == 6);
    CHECK(dense_spectral_norm(a * res.X - Matrix::Identity(3, 3)) <= 1e-6);
}

TEST_CASE("dense Newton-Schulz iteration counts obey the 2 log(kappa) bound") {
    for (double kappa : {10.0, 100.0, 1000.0}) {
        const Index n = 24;
        Vector d(n);
        for (Index i = 0; i < n; ++i)
            d[i] = 1.0 / kappa + (1.0 - 1.0 / kappa) * double(i) / double(n - 1);
        Matrix a = d.asDiagonal();          // |A|_inf = 1
        auto res = newton_schulz_dense(a, Matrix::Identity(n, n), 1e-6);
        const double bound = std::ceil(2 * std::log(kappa) + std::log(std::log(1e6)));
        CHECK(res.trace.iterations() <= int(bound) + 3);
    }
}

TEST_CASE("dense Newton-Schulz reports divergence with the partial trace") {
    Matrix a = -Matrix::Identity(4, 4);
    try {
        newton_schulz_dense(a, Matrix::Identity(4, 4), 1e-8);
        FAIL("expected divergence");
    } catch (const divergence_error& e) {
        CHECK(e.trace.rows.size() >= 3);
    }
}

TEST_CASE("scaled identity start") {
    auto bt = tree1d(64, 8);
    H2Matrix a2 = H2Matrix::scaled_identity(bt, 2.0);
    H2Matrix x0 = scaled_identity_start(a2);
    std::mt19937_64 rng(70);
    Matrix v = random_matrix(64, 2, rng);
    CHECK(rel_err(x0.matvec(v), 0.5 * v) < 1e-10);

    H2Matrix zero = H2Matrix::zero(bt, true);
    CHECK_THROWS_AS(scaled_identity_start(zero), std::invalid_argument);

    // SPD case: |A X0|_2 <= 1 and rho(I - A X0) < 1
    Matrix a = kernel_matrix(64);
    H2Matrix ah = compress_dense(a, bt, 1e-10);
    H2Matrix x0s = scaled_identity_start(ah);
    Matrix x0d = x0s.to_dense();
    CHECK(dense_2norm(a * x0d) <= 1.0 + 1e-8);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Matrix::Identity(64, 64) - a * x0d);
    CHECK(eig.eigenvalues().cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("ns sampler against the dense inverse oracle") {
    std::mt19937_64 rng(71);
    // n = leaf size: the compressed form is exactly dense, no truncation error
    auto bt = tree1d(32, 32);
    Matrix a = kernel_matrix(32);
    Matrix ainv = a.inverse();
    H2Matrix ah = compress_dense(a, bt, 1e-12);
    H2Matrix xh = compress_dense(ainv, bt, 1e-12);

    auto sampler = ns_sampler(xh, ah);
    Matrix w = random_matrix(32, 4, rng);
    CHECK(rel_err(sampler->apply(w), ainv * w) < 1e-12);

    // X = 0 gives the zero sampler
    H2Matrix zero = H2Matrix::zero(bt, true);
    auto s0 = ns_sampler(zero, ah);
    CHECK(s0->apply(w).norm() == 0.0);

    // linearity
    Matrix u = random_matrix(32, 4, rng);
    CHECK(rel_err(sampler->apply(2.0 * w - u), 2.0 * sampler->apply(w) - sampler->apply(u)) < 1e-12);
}

TEST_CASE("hyperpower sampler: order 2 is Newton-Schulz, order 4 matches dense Horner") {
    std::mt19937_64 rng(72);
    auto bt = tree1d(32, 32);
    Matrix a = kernel_matrix(32);
    H2Matrix ah = compress_dense(a, bt, 1e-12);
    H2Matrix xh = compress_dense(Matrix(0.3 * a.inverse()), bt, 1e-12);
    Matrix w = random_matrix(32, 3, rng);

    auto s2 = hyperpower_sampler(xh, ah, 2);
    auto sns = ns_sampler(xh, ah);
    CHECK(rel_err(s2->apply(w), sns->apply(w)) < 1e-12);

    Matrix x = xh.to_dense();
    Matrix r = Matrix::Identity(32, 32) - a * x;
    Matrix dense4 = x * (Matrix::Identity(32, 32) + r + r * r + r * r * r);
    auto s4 = hyperpower_sampler(xh, ah, 4);
    CHECK(rel_err(s4->apply(w), dense4 * w) < 1e-12);

    // X = A^{-1} has R = 0: the sampler is A^{-1} itself
    H2Matrix inv = compress_dense(Matrix(a.inverse()), bt, 1e-12);
    auto sinv = hyperpower_sampler(inv, ah, 8);
    CHECK(rel_err(sinv->apply(w), a.inverse() * w) < 1e-11);

    CHECK_THROWS_AS(hyperpower_sampler(xh, ah, 1), std::invalid_argument);
}

TEST_CASE("unrolled sampler: k = 0 and k = 1 specializations") {
    std::mt19937_64 rng(73);
    auto bt = tree1d(32, 32);
    Matrix a = kernel_matrix(32);
    H2Matrix ah = compress_dense(a, bt, 1e-12);
    Matrix x0d = Matrix::Identity(32, 32) / a.cwiseAbs().rowwise().sum().maxCoeff();
    H2Matrix x0 = compress_dense(x0d, bt, 1e-12);
    Matrix w = random_matrix(32, 3, rng);

    auto u0 = unrolled_sampler(x0, ah, 0);
    CHECK(rel_err(u0->apply(w), x0d * w) < 1e-12);

    // one Newton-Schulz step: expanding (1-a)^2 = 1 - 2a + a^2 gives
    // X0 (2I - A X0) = X0 sum C(2, i+1) (-A X0)^i
    auto u1 = unrolled_sampler(x0, ah, 1);
    Matrix ns1 = (2.0 * Matrix::Identity(32, 32) - x0d * a) * x0d;
    CHECK(rel_err(u1->apply(w), ns1 * w) < 1e-12);

    CHECK_THROWS_AS(unrolled_sampler(x0, ah, 7), std::invalid_argument);
}

TEST_CASE("unrolled sampler reproduces the scalar squaring recurrence at k = 3") {
    // a = 1, x0 = 1/2: the k-fold unrolled value is 1 - (1/2)^(2^k)
    Matrix one = Matrix::Constant(1, 1, 1.0);
    auto ct = build_cluster_tree(PointSet(Matrix::Zero(1, 1)), 2);
    auto bt = build_block_tree(ct, ct, 1.0, Admissibility::weak);
    H2Matrix ah = H2Matrix::scaled_identity(bt, 1.0);
    H2Matrix x0 = H2Matrix::scaled_identity(bt, 0.5);
    auto u3 = unrolled_sampler(x0, ah, 3);
    CHECK(u3->apply(one)(0, 0) == doctest::Approx(1.0 - std::pow(0.5, 8)).epsilon(1e-14));
}

TEST_CASE("residual norm") {
    Matrix a = kernel_matrix(48);
    DenseOperator oa(a, true);
    DenseOperator oinv{Matrix(a.inverse()), true};
    CHECK(residual_norm(oa, oinv) < 1e-10);

    auto zero = make_operator(48, true, [](const Matrix& x) { return Matrix(0.0 * x); });
    CHECK(residual_norm(oa, *zero) == doctest::Approx(1.0).epsilon(1e-8));

    const double delta = 0.37;
    DenseOperator oscaled{Matrix((1 - delta) * a.inverse()), true};
    CHECK(residual_norm(oa, oscaled) == doctest::Approx(delta).epsilon(5e-3));
}

TEST_CASE("hierarchical Newton-Schulz converges and matches the dense inverse") {
    auto bt = tree1d(256, 32);
    Matrix a = kernel_matrix(256);
    H2Matrix ah = compress_dense(a, bt, 1e-10);
    H2Matrix x0 = scaled_identity_start(ah);
    PeelConfig cfg;
    ThresholdSchedule sched;   // static
    auto res = h_newton_schulz(ah, x0, sched, 1e-8, cfg);
    CHECK(res.trace.converged);
    CHECK(residual_norm(ah, res.X) <= 1e-8);

    // truncation-robustness: agree with the dense iteration's limit
    Matrix xd = a.inverse();
    CHECK(dense_2norm(res.X.to_dense() - xd) <= 1e-6 * dense_2norm(xd));

    // monotone convergence after E < 1, quadratic regime once E < 0.1
    const auto& rows = res.trace.rows;
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i - 1].residual < 1.0) CHECK(rows[i].residual < rows[i - 1].residual);
        if (rows[i - 1].residual < 0.1)
            CHECK(rows[i].residual <= 2.0 * rows[i - 1].residual * rows[i - 1].residual + 1e-12);
    }
}

TEST_CASE("one peeled Newton-Schulz step matches the dense step") {
    auto bt = tree1d(128, 16);
    Matrix a = kernel_matrix(128);
    H2Matrix ah = compress_dense(a, bt, 1e-12);
    H2Matrix x0 = scaled_identity_start(ah);
    PeelConfig cfg;
    cfg.eps = 1e-12;
    auto sampler = ns_sampler(x0, ah);
    H2Matrix x1 = peel_construct(*sampler, bt, cfg).matrix;
    Matrix x0d = x0.to_dense();
    Matrix dense_step = (2.0 * Matrix::Identity(128, 128) - x0d * a) * x0d;
    CHECK(dense_2norm(x1.to_dense() - dense_step) <= 1e-10 * dense_2norm(dense_step));
}

TEST_CASE("hyperpower order 2 reproduces the Newton-Schulz trace") {
    auto bt = tree1d(128, 16);
    Matrix a = kernel_matrix(128);
    H2Matrix ah = compress_dense(a, bt, 1e-10);
    H2Matrix x0 = scaled_identity_start(ah);
    PeelConfig cfg;
    ThresholdSchedule sched;
    auto ns = h_newton_schulz(ah, x0, sched, 1e-7, cfg);
    auto hp = h_hyperpower(ah, x0, 2, sched, 1e-7, cfg);
    CHECK(hp.trace.iterations() == ns.trace.iterations());
    for (int i = 0; i < ns.trace.iterations(); ++i)
        CHECK(hp.trace.rows[i].residual ==
              doctest::Approx(ns.trace.rows[i].residual).epsilon(1e-4));
}

TEST_CASE("higher hyperpower orders converge in fewer iterations") {
    auto bt = tree1d(128, 16);
    Matrix a = kernel_matrix(128);
    H2Matrix ah = compress_dense(a, bt, 1e-10);
    H2Matrix x0 = scaled_identity_start(ah);
    PeelConfig cfg;
    ThresholdSchedule sched;
    auto ns = h_newton_schulz(ah, x0, sched, 1e-7, cfg);
    auto h8 = h_hyperpower(ah, x0, 8, sched, 1e-7, cfg);
    CHECK(h8.trace.converged);
    CHECK(h8.trace.iterations() <= ns.trace.iterations());
    CHECK(residual_norm(ah, h8.X) <= 1e-7);
}

TEST_CASE("unrolled inverse from a warm start in one construction") {
    auto bt = tree1d(128, 16);
    Matrix a = kernel_matrix(128);
    H2Matrix ah = compress_dense(a, bt, 1e-10);
    // warm start: a mildly perturbed inverse
    H2Matrix warm = compress_dense(Matrix(0.9 * a.inverse()), bt, 1e-10);
    PeelConfig cfg;
    auto res = h_unrolled(ah, warm, 3, 1e-6, cfg);
    CHECK(res.trace.converged);
    CHECK(res.trace.final_residual <= 1e-6);
}

TEST_CASE("unrolled iterates at small k equal the iterated NS steps") {
    auto bt = tree1d(64, 8);
    Matrix a = kernel_matrix(64);
    H2Matrix ah = compress_dense(a, bt, 1e-12);
    H2Matrix x0 = scaled_identity_start(ah);
    Matrix x0d = x0.to_dense();
    Matrix id = Matrix::Identity(64, 64);
    std::mt19937_64 rng(74);
    Matrix w = random_matrix(64, 3, rng);
    Matrix xk = x0d;
    for (int k = 1; k <= 3; ++k) {
        xk = (2.0 * id - xk * a) * xk;
        auto uk = unrolled_sampler(x0, ah, k);
        CHECK(rel_err(uk->apply(w), xk * w) < 1e-10);
    }
}

TEST_CASE("hierarchical inversion declares divergence on a hopeless start") {
    auto bt = tree1d(64, 8);
    H2Matrix ah = H2Matrix::scaled_identity(bt, 1.0);
    H2Matrix x0 = H2Matrix::scaled_identity(bt, 3.0);   // overshoots, NS diverges
    PeelConfig cfg;
    ThresholdSchedule sched;
    CHECK_THROWS_AS(h_newton_schulz(ah, x0, sched, 1e-8, cfg, 20), divergence_error);
}

TEST_CASE("dynamic schedule spends fewer samples than the static one") {
    auto bt = tree1d(256, 32);
    Matrix a = kernel_matrix(256);
    H2Matrix ah = compress_dense(a, bt, 1e-8);
    H2Matrix x0 = scaled_identity_start(ah);
    PeelConfig cfg;
    ThresholdSchedule st;
    auto rs = h_newton_schulz(ah, x0, st, 1e-6, cfg);
    ThresholdSchedule dyn;
    dyn.mode = ThresholdSchedule::Mode::dynamic;
    auto rd = h_newton_schulz(ah, x0, dyn, 1e-6, cfg);
    CHECK(rd.trace.converged);
    CHECK(rd.trace.total_samples() < rs.trace.total_samples());
    // some early iteration is strictly cheaper under the loose threshold
    bool cheaper_early = false;
    const size_t half = std::max<size_t>(rd.trace.rows.size() / 2, 1);
    for (size_t i = 0; i < half && i < rs.trace.rows.size(); ++i)
        cheaper_early |= rd.trace.rows[i].samples < rs.trace.rows[i].samples;
    CHECK(cheaper_early);
}
