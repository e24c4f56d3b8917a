#pragma once
//
// shared helpers for the test suites
//

#include <random>

#include "h2/h2_matrix.hpp"

namespace h2::testing {

inline PointSet grid1d(Index n, double a = 0.0, double b = 1.0) {
    Matrix c(n, 1);
    for (Index i = 0; i < n; ++i) c(i, 0) = a + (b - a) * double(i) / double(std::max<Index>(n - 1, 1));
    return PointSet(std::move(c));
}

inline PointSet grid2d(Index nx, Index ny, double a = 0.0, double b = 1.0) {
    Matrix c(nx * ny, 2);
    for (Index j = 0; j < ny; ++j)
        for (Index i = 0; i < nx; ++i) {
            c(j * nx + i, 0) = a + (b - a) * double(i) / double(std::max<Index>(nx - 1, 1));
            c(j * nx + i, 1) = a + (b - a) * double(j) / double(std::max<Index>(ny - 1, 1));
        }
    return PointSet(std::move(c));
}

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = g(rng);
    return m;
}

// structurally valid H^2 matrix with random content; its to_dense() expansion
// serves as the reference for algebra tests
inline H2Matrix random_h2(std::shared_ptr<const BlockTree> bt, bool symmetric, Index kmax,
                          std::mt19937_64& rng) {
    H2Matrix h = H2Matrix::zero(bt, symmetric);
    const ClusterTree& ct = *h.tree;
    std::uniform_int_distribution<Index> kd(1, kmax);
    auto fill_basis = [&](BasisTree& b) {
        for (int v = 0; v < ct.num_nodes(); ++v) b.set_rank(v, std::min(ct.node(v).size(), kd(rng)));
        for (int v = 0; v < ct.num_nodes(); ++v) {
            const auto& nd = ct.node(v);
            if (nd.is_leaf()) b.leaf_basis(v) = random_matrix(nd.size(), b.rank(v), rng);
            else
                for (int c : nd.child) b.transfer(c) = random_matrix(b.rank(c), b.rank(v), rng);
        }
    };
    fill_basis(h.row_basis);
    if (!symmetric) fill_basis(h.col_basis);
    const BasisTree& vb = h.vbasis();
    for (int b : h.blocks->admissible_leaves()) {
        if (!h.stores(b)) continue;
        const auto& bn = h.blocks->node(b);
        h.coupling[h.blocks->adm_ordinal(b)] =
            random_matrix(h.row_basis.rank(bn.row), vb.rank(bn.col), rng);
    }
    for (int b : h.blocks->dense_leaves()) {
        if (!h.stores(b)) continue;
        const auto& bn = h.blocks->node(b);
        Matrix d = random_matrix(ct.node(bn.row).size(), ct.node(bn.col).size(), rng);
        if (symmetric && bn.row == bn.col) d = ((d + d.transpose()) / 2).eval();
        h.dense[h.blocks->dense_ordinal(b)] = std::move(d);
    }
    h.orthonormal = false;
    return h;
}

inline double rel_err(const Matrix& approx, const Matrix& ref) {
    double denom = ref.norm();
    return denom == 0 ? approx.norm() : (approx - ref).norm() / denom;
}

// spectral norm of a small dense matrix
inline double dense_2norm(const Matrix& a) {
    return a.size() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
}

} // namespace h2::testing
