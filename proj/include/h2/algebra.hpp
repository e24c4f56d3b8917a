#pragma once
//
// h2 : algebra on the compressed representation
//
// Everything here operates directly on the H^2 data: basis
// orthogonalization, recompression to a target tolerance, exact Frobenius
// norm, and global/local low-rank updates. Mutating operations take a value
// and return a new one.
//

#include <cstring>

#include "h2/h2_matrix.hpp"

namespace h2 {

// n x k' factors X, Y meaning the rank-k' matrix X * Y^T (user ordering)
struct LowRankFactor {
    Matrix X, Y;
    Index rank() const { return X.cols(); }
};

namespace detail {

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.size() == 0 ||
            std::memcmp(a.data(), b.data(), sizeof(double) * size_t(a.size())) == 0);
}

inline std::pair<Matrix, Matrix> thin_qr(const Matrix& a) {
    const Index m = a.rows(), k = a.cols(), kp = std::min(m, k);
    if (kp == 0) return {Matrix::Zero(m, 0), Matrix::Zero(0, k)};
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(m, kp);
    Matrix r = qr.matrixQR().topRows(kp).triangularView<Eigen::Upper>();
    return {q, r};
}

// a small matrix with the same row Gram as g (g g^T = w w^T), at most
// min(rows, cols) columns wide
inline Matrix lq_reduce(const Matrix& g) {
    if (g.cols() <= g.rows()) return g;
    auto [q, r] = thin_qr(g.transpose());
    return r.transpose();
}

// per-node lists of stored admissible leaves by row / column cluster
struct LeafLists {
    std::vector<std::vector<int>> by_row, by_col;
};

inline LeafLists stored_leaf_lists(const H2Matrix& h) {
    LeafLists ll;
    ll.by_row.resize(h.tree->num_nodes());
    ll.by_col.resize(h.tree->num_nodes());
    for (int b : h.blocks->admissible_leaves()) {
        if (!h.stores(b)) continue;
        ll.by_row[h.blocks->node(b).row].push_back(b);
        ll.by_col[h.blocks->node(b).col].push_back(b);
    }
    return ll;
}

} // namespace detail

// ---- orthogonalization ----------------------------------------------------

// Replace the bases by orthonormal equivalents (leaf QR, then QR of the
// stacked R-weighted transfers up the tree) and fold the change of basis into
// the coupling matrices. The represented matrix is unchanged.
inline H2Matrix orthogonalize(const H2Matrix& h) {
    H2Matrix g = h;
    const ClusterTree& ct = *g.tree;

    auto process = [&ct](BasisTree& b) {
        std::vector<Matrix> r(ct.num_nodes());
        for (int l = ct.depth(); l >= 0; --l)
            for (int v : ct.level_nodes(l)) {
                const auto& nd = ct.node(v);
                if (nd.is_leaf()) {
                    auto [q, rr] = detail::thin_qr(b.leaf_basis(v));
                    b.leaf_basis(v) = std::move(q);
                    r[v] = std::move(rr);
                } else {
                    const int c0 = nd.child[0], c1 = nd.child[1];
                    Matrix z(r[c0].rows() + r[c1].rows(), b.rank(v));
                    z.topRows(r[c0].rows())    = r[c0] * b.transfer(c0);
                    z.bottomRows(r[c1].rows()) = r[c1] * b.transfer(c1);
                    auto [q, rr] = detail::thin_qr(z);
                    b.transfer(c0) = q.topRows(r[c0].rows());
                    b.transfer(c1) = q.bottomRows(r[c1].rows());
                    r[v] = std::move(rr);
                }
                b.set_rank(v, r[v].rows());
            }
        return r;
    };

    std::vector<Matrix> r_row = process(g.row_basis);
    std::vector<Matrix> r_col_store;
    if (!g.symmetric) r_col_store = process(g.col_basis);
    const std::vector<Matrix>& r_col = g.symmetric ? r_row : r_col_store;

    for (int b : g.blocks->admissible_leaves()) {
        if (!g.stores(b)) continue;
        const auto& bn = g.blocks->node(b);
        Matrix& s = g.coupling[g.blocks->adm_ordinal(b)];
        s = r_row[bn.row] * s * r_col[bn.col].transpose();
    }
    g.orthonormal = true;
    return g;
}

// ---- Frobenius norm --------------------------------------------------------

// sqrt(sum over dense blocks of |D|_F^2 + sum over couplings of |S|_F^2);
// exact when the bases are orthonormal, which is required.
inline double frobenius_norm(const H2Matrix& h) {
    if (!h.orthonormal)
        throw std::invalid_argument("frobenius_norm: bases are not orthonormal; call orthogonalize");
    double sum = 0;
    for (int b : h.blocks->admissible_leaves()) {
        if (!h.stores(b)) continue;
        const double s2 = h.coupling_of(b).squaredNorm();
        sum += s2;
        if (h.symmetric && h.blocks->node(b).row != h.blocks->node(b).col) sum += s2;
    }
    for (int b : h.blocks->dense_leaves()) {
        if (!h.stores(b)) continue;
        const double d2 = h.dense_of(b).squaredNorm();
        sum += d2;
        if (h.symmetric && h.blocks->node(b).row != h.blocks->node(b).col) sum += d2;
    }
    return std::sqrt(sum);
}

// ---- recompression ---------------------------------------------------------

// Find new bases of smaller rank such that |H - result|_2 <= eps |H|_2 and
// project. The downsweep propagates block-row weights through the transfer
// matrices; each node truncates the singular values of its total weight at
// eps * sigma_max / sqrt(levels). Ranks never increase.
inline H2Matrix recompress(const H2Matrix& h, double eps) {
    if (eps < 0) throw std::invalid_argument("recompress: eps must be >= 0");
    H2Matrix g = h.orthonormal ? h : orthogonalize(h);
    const ClusterTree& ct = *g.tree;
    const double level_corr = std::sqrt(double(std::max(ct.depth(), 1)));
    detail::LeafLists ll = detail::stored_leaf_lists(g);

    // one pass computes truncation bases w[] for one side
    auto truncation_bases = [&](bool row_side) {
        std::vector<Matrix> w(ct.num_nodes()), p(ct.num_nodes());
        const BasisTree& basis = row_side ? g.row_basis : g.col_basis;
        for (int l = 0; l <= ct.depth(); ++l)
            for (int v : ct.level_nodes(l)) {
                const Index k = basis.rank(v);
                std::vector<Matrix> parts;
                auto add_part = [&parts](Matrix m) {
                    if (m.cols() > 0) parts.push_back(std::move(m));
                };
                if (row_side) {
                    for (int b : ll.by_row[v]) add_part(g.coupling_of(b));
                    if (g.symmetric)
                        for (int b : ll.by_col[v])
                            if (g.blocks->node(b).row != v) add_part(g.coupling_of(b).transpose());
                } else {
                    for (int b : ll.by_col[v]) add_part(g.coupling_of(b).transpose());
                }
                const auto& nd = ct.node(v);
                if (nd.parent >= 0 && p[nd.parent].cols() > 0)
                    add_part(basis.transfer(v) * p[nd.parent]);
                Index cols = 0;
                for (const auto& m : parts) cols += m.cols();
                if (cols == 0 || k == 0) {
                    w[v] = Matrix::Zero(k, 0);
                    p[v] = Matrix::Zero(k, 0);
                    continue;
                }
                Matrix gv(k, cols);
                Index at = 0;
                for (const auto& m : parts) {
                    gv.middleCols(at, m.cols()) = m;
                    at += m.cols();
                }
                Eigen::BDCSVD<Matrix> svd(gv, Eigen::ComputeThinU);
                const auto& sv = svd.singularValues();
                const double tau = eps * sv(0) / level_corr;
                Index r = 0;
                while (r < sv.size() && sv(r) > tau) ++r;
                w[v] = svd.matrixU().leftCols(r);
                p[v] = detail::lq_reduce(gv);
            }
        return w;
    };

    std::vector<Matrix> w_row = truncation_bases(true);
    std::vector<Matrix> w_col_store;
    if (!g.symmetric) w_col_store = truncation_bases(false);
    const std::vector<Matrix>& w_col = g.symmetric ? w_row : w_col_store;

    // project couplings, bases and transfers onto the new bases
    for (int b : g.blocks->admissible_leaves()) {
        if (!g.stores(b)) continue;
        const auto& bn = g.blocks->node(b);
        Matrix& s = g.coupling[g.blocks->adm_ordinal(b)];
        s = w_row[bn.row].transpose() * s * w_col[bn.col];
    }
    auto project = [&ct](BasisTree& b, const std::vector<Matrix>& w) {
        for (int l = ct.depth(); l >= 0; --l)
            for (int v : ct.level_nodes(l)) {
                const auto& nd = ct.node(v);
                if (!nd.is_leaf())
                    for (int c : nd.child) b.transfer(c) = w[c].transpose() * b.transfer(c) * w[v];
                else
                    b.leaf_basis(v) = b.leaf_basis(v) * w[v];
            }
        for (int v = 0; v < ct.num_nodes(); ++v) b.set_rank(v, w[v].cols());
    };
    project(g.row_basis, w_row);
    if (!g.symmetric) project(g.col_basis, w_col);

    // the projected transfers are only near-orthonormal; restore exactly
    g.orthonormal = false;
    return orthogonalize(g);
}

// ---- low-rank updates ------------------------------------------------------

namespace detail {

// Add X * Y^T restricted to the cluster pair (t, s) in place, without
// recompression. X is |t| x k', Y is |s| x k', both in internal ordering.
// Every block-tree leaf must lie fully inside or outside the (t, s) region,
// which holds whenever (t, s) is a block-tree node.
inline void apply_local_update(H2Matrix& h, int t, int s, const Matrix& x, const Matrix& y) {
    const ClusterTree& ct = *h.tree;
    const Index kp = x.cols();
    if (kp == 0) return;
    if (x.rows() != ct.node(t).size() || y.rows() != ct.node(s).size() || y.cols() != kp)
        throw std::invalid_argument("local update: factor dimensions do not match clusters");
    if (h.symmetric && t == s && !bitwise_equal(x, y))
        throw std::invalid_argument("local update: diagonal update on a symmetric matrix needs X == Y");

    std::vector<char> in_t(ct.num_nodes(), 0), in_s(ct.num_nodes(), 0);
    for (int v = 0; v < ct.num_nodes(); ++v) {
        in_t[v] = ct.is_descendant(v, t);
        in_s[v] = ct.is_descendant(v, s);
    }

    auto restrict_rows = [&ct](const Matrix& m, int region, int v) {
        const auto& rn = ct.node(region);
        const auto& vn = ct.node(v);
        return m.middleRows(vn.begin - rn.begin, vn.size());
    };

    // grow ranks inside one region's subtree; pad the transfer at the region
    // root with zero rows (its parent's basis is unchanged)
    auto augment = [&](BasisTree& b, const std::vector<char>& in_region, int region,
                       const Matrix& f) {
        for (int v = 0; v < ct.num_nodes(); ++v) {
            if (!in_region[v]) continue;
            const auto& nd = ct.node(v);
            const Index k_old = b.rank(v);
            if (nd.is_leaf()) {
                Matrix u(nd.size(), k_old + kp);
                u.leftCols(k_old) = b.leaf_basis(v);
                u.rightCols(kp)   = restrict_rows(f, region, v);
                b.leaf_basis(v)   = std::move(u);
            }
            if (nd.parent >= 0) {
                const bool parent_in = in_region[nd.parent];
                Matrix& e = b.transfer(v);
                Matrix en = Matrix::Zero(k_old + kp, parent_in ? e.cols() + kp : e.cols());
                en.topLeftCorner(e.rows(), e.cols()) = e;
                if (parent_in) en.bottomRightCorner(kp, kp) = Matrix::Identity(kp, kp);
                e = std::move(en);
            }
            b.set_rank(v, k_old + kp);
        }
    };

    if (h.symmetric) {
        augment(h.row_basis, in_t, t, x);
        if (s != t) augment(h.row_basis, in_s, s, y);
    } else {
        augment(h.row_basis, in_t, t, x);
        augment(h.col_basis, in_s, s, y);
    }

    const BasisTree& vb = h.vbasis();
    for (int b : h.blocks->admissible_leaves()) {
        if (!h.stores(b)) continue;
        const auto& bn = h.blocks->node(b);
        const bool ra = h.symmetric ? (in_t[bn.row] || in_s[bn.row]) : bool(in_t[bn.row]);
        const bool ca = h.symmetric ? (in_t[bn.col] || in_s[bn.col]) : bool(in_s[bn.col]);
        if (!ra && !ca) continue;
        Matrix& sm = h.coupling[h.blocks->adm_ordinal(b)];
        Matrix sn = Matrix::Zero(h.row_basis.rank(bn.row), vb.rank(bn.col));
        sn.topLeftCorner(sm.rows(), sm.cols()) = sm;
        if (in_t[bn.row] && in_s[bn.col]) sn.bottomRightCorner(kp, kp) = Matrix::Identity(kp, kp);
        else if (h.symmetric && in_s[bn.row] && in_t[bn.col])
            sn.bottomRightCorner(kp, kp) = Matrix::Identity(kp, kp);
        sm = std::move(sn);
    }
    for (int b : h.blocks->dense_leaves()) {
        if (!h.stores(b)) continue;
        const auto& bn = h.blocks->node(b);
        Matrix& d = h.dense[h.blocks->dense_ordinal(b)];
        if (in_t[bn.row] && in_s[bn.col])
            d.noalias() += restrict_rows(x, t, bn.row) * restrict_rows(y, s, bn.col).transpose();
        else if (h.symmetric && in_s[bn.row] && in_t[bn.col])
            d.noalias() += restrict_rows(y, s, bn.row) * restrict_rows(x, t, bn.col).transpose();
    }
    h.orthonormal = false;
}

} // namespace detail

// Add U_blk * V_blk^T restricted to the cluster pair (t, s) (internal-ordering
// factors restricted to the clusters), then recompress to eps. The update is
// scattered to all block-tree leaves covered by the (t, s) region.
inline H2Matrix local_low_rank_update(const H2Matrix& h, int t, int s, const Matrix& u_blk,
                                      const Matrix& v_blk, double eps) {
    if (u_blk.cols() == 0) return h;
    H2Matrix g = (h.symmetric && t == s && !detail::bitwise_equal(u_blk, v_blk))
                     ? h.desymmetrized()
                     : h;
    detail::apply_local_update(g, t, s, u_blk, v_blk);
    return recompress(g, eps);
}

// Global update: A + X Y^T with user-ordering factors, then recompress.
inline H2Matrix low_rank_update(const H2Matrix& h, const LowRankFactor& f, double eps) {
    if (f.X.rows() != h.n() || f.Y.rows() != h.n() || f.X.cols() != f.Y.cols())
        throw std::invalid_argument("low_rank_update: factor dimensions do not match");
    if (f.rank() == 0) return h;
    const bool sym_update = detail::bitwise_equal(f.X, f.Y);
    H2Matrix g = (h.symmetric && !sym_update) ? h.desymmetrized() : h;
    const Matrix xi = h.tree->to_internal(f.X);
    Matrix yi_store;
    if (!sym_update) yi_store = h.tree->to_internal(f.Y);
    const Matrix& yi = sym_update ? xi : yi_store;
    detail::apply_local_update(g, g.tree->root(), g.tree->root(), xi, yi);
    return recompress(g, eps);
}

} // namespace h2
