#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "h2/algebra.hpp"
#include "test_support.hpp"

using namespace h2;
using namespace h2::testing;

namespace {

std::shared_ptr<const BlockTree> tree1d(Index n, Index leaf, Admissibility mode) {
    auto ct = build_cluster_tree(grid1d(n, -1, 1), leaf);
    return build_block_tree(ct, ct, 1.0, mode);
}

std::shared_ptr<const BlockTree> tree2d(Index g, Index leaf) {
    auto ct = build_cluster_tree(grid2d(g, g), leaf);
    return build_block_tree(ct, ct, 1.0, Admissibility::strong);
}

} // namespace

TEST_CASE("zero and diagonal factories expand exactly") {
    auto bt = tree1d(64, 8, Admissibility::weak);
    H2Matrix z = H2Matrix::zero(bt, true);
    CHECK(z.to_dense().norm() == 0.0);

    std::mt19937_64 rng(1);
    Vector d = random_matrix(64, 1, rng);
    H2Matrix dm = H2Matrix::diagonal(bt, d);
    Matrix dd = dm.to_dense();
    CHECK((dd - Matrix(d.asDiagonal())).norm() == 0.0);

    H2Matrix id = H2Matrix::scaled_identity(bt, 0.5);
    Matrix x = random_matrix(64, 3, rng);
    CHECK(rel_err(id.matvec(x), 0.5 * x) < 1e-15);
}

TEST_CASE("matvec agrees with the dense expansion") {
    std::mt19937_64 rng(2);
    for (bool symmetric : {true, false}) {
        for (auto bt : {tree1d(96, 8, Admissibility::weak), tree1d(70, 6, Admissibility::strong),
                        tree2d(12, 16)}) {
            H2Matrix h = random_h2(bt, symmetric, 4, rng);
            Matrix a = h.to_dense();
            Matrix x = random_matrix(h.n(), 5, rng);
            CHECK(rel_err(h.matvec(x), a * x) < 1e-12);
            CHECK(rel_err(h.matvec_transpose(x), a.transpose() * x) < 1e-12);
            if (symmetric) CHECK((a - a.transpose()).norm() < 1e-13 * a.norm());
        }
    }
}

TEST_CASE("matvec is linear") {
    std::mt19937_64 rng(3);
    auto bt = tree1d(128, 16, Admissibility::weak);
    H2Matrix h = random_h2(bt, true, 5, rng);
    Matrix x = random_matrix(128, 2, rng), z = random_matrix(128, 2, rng);
    double alpha = 0.37, beta = -1.25;
    Matrix lhs = h.matvec(alpha * x + beta * z);
    Matrix rhs = alpha * h.matvec(x) + beta * h.matvec(z);
    CHECK(rel_err(lhs, rhs) < 1e-12);
}

TEST_CASE("symmetric matvec satisfies x'(Hy) = y'(Hx)") {
    std::mt19937_64 rng(4);
    auto bt = tree2d(10, 8);
    H2Matrix h = random_h2(bt, true, 4, rng);
    Matrix x = random_matrix(h.n(), 1, rng), y = random_matrix(h.n(), 1, rng);
    double a = (x.transpose() * h.matvec(y))(0, 0), b = (y.transpose() * h.matvec(x))(0, 0);
    CHECK(std::abs(a - b) < 1e-12 * std::abs(a));
}

TEST_CASE("vector block ordering tags") {
    std::mt19937_64 rng(5);
    auto bt = tree1d(32, 4, Admissibility::weak);
    H2Matrix h = random_h2(bt, true, 3, rng);
    Matrix x = random_matrix(32, 2, rng);
    VectorBlock u{x, Ordering::user};
    VectorBlock i{h.tree->to_internal(x), Ordering::internal};
    CHECK(rel_err(h.matvec(u).data, h.tree->to_user(h.matvec(i).data)) < 1e-15);
}

TEST_CASE("to_dense rejects matrices above the cap") {
    auto bt = tree1d(128, 16, Admissibility::weak);
    H2Matrix h = H2Matrix::zero(bt, true);
    CHECK_THROWS_AS(h.to_dense(64), std::invalid_argument);
}

TEST_CASE("validate: fresh instance is clean, corrupted coupling is flagged") {
    std::mt19937_64 rng(6);
    auto bt = tree1d(64, 8, Admissibility::weak);
    H2Matrix h = random_h2(bt, true, 4, rng);
    ValidationReport rep = h.validate();
    CHECK(rep.ok());
    CHECK(rep.storage.total() > 0);

    // break one coupling matrix
    for (size_t i = 0; i < h.coupling.size(); ++i)
        if (h.coupling[i].size() > 0) {
            h.coupling[i] = Matrix::Zero(h.coupling[i].rows() + 1, h.coupling[i].cols());
            break;
        }
    ValidationReport bad = h.validate();
    CHECK_FALSE(bad.ok());
    bool found = false;
    for (const auto& v : bad.violations) found |= v.find("coupling dimension") != std::string::npos;
    CHECK(found);
}

TEST_CASE("validate reports per-level rank profile") {
    std::mt19937_64 rng(7);
    auto bt = tree1d(128, 16, Admissibility::weak);
    H2Matrix h = random_h2(bt, true, 6, rng);
    auto prof = h.rank_profile();
    CHECK(prof.size() == size_t(h.tree->depth() + 1));
    Index maxk = 0;
    for (int v = 0; v < h.tree->num_nodes(); ++v) maxk = std::max(maxk, h.row_basis.rank(v));
    CHECK(*std::max_element(prof.begin(), prof.end()) == maxk);
}

TEST_CASE("desymmetrized matrix represents the same operator") {
    std::mt19937_64 rng(8);
    auto bt = tree2d(8, 8);
    H2Matrix h = random_h2(bt, true, 3, rng);
    H2Matrix g = h.desymmetrized();
    CHECK_FALSE(g.symmetric);
    CHECK(rel_err(g.to_dense(), h.to_dense()) < 1e-14);
    Matrix x = random_matrix(h.n(), 3, rng);
    CHECK(rel_err(g.matvec(x), h.matvec(x)) < 1e-13);
}
