#pragma once
//
// h2 : the compressed H^2 matrix
//
// A = D + U S V^T in the internal (cluster tree) ordering. Dense blocks D
// live at inadmissible leaf pairs, coupling matrices S at admissible leaves,
// and the nested bases U, V are shared across block rows/columns. Symmetric
// matrices store a single basis tree and only canonically oriented blocks
// (row id <= col id); the mirrored content is implied by transposition.
//
// An H2Matrix is immutable by convention after it is produced; operations
// that change it (updates, recompression, orthogonalization) return a new
// value.
//

#include <map>
#include <string>
#include <vector>

#include "h2/basis_tree.hpp"
#include "h2/block_tree.hpp"

namespace h2 {

struct StorageReport {
    Index dense_reals = 0;
    Index leaf_basis_reals = 0;
    Index transfer_reals = 0;
    Index coupling_reals = 0;
    Index total() const { return dense_reals + leaf_basis_reals + transfer_reals + coupling_reals; }
};

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<Index> level_max_rank;   // per cluster-tree level
    StorageReport storage;
    bool ok() const { return violations.empty(); }
};

class H2Matrix {
public:
    std::shared_ptr<const ClusterTree> tree;
    std::shared_ptr<const BlockTree> blocks;
    BasisTree row_basis;           // U
    BasisTree col_basis;           // V; unused when symmetric (aliases U)
    std::vector<Matrix> coupling;  // by admissible-leaf ordinal; canonical only if symmetric
    std::vector<Matrix> dense;     // by dense-leaf ordinal; canonical only if symmetric
    bool symmetric = false;
    bool orthonormal = false;

    H2Matrix() = default;

    static H2Matrix zero(std::shared_ptr<const BlockTree> bt, bool symmetric_flag) {
        H2Matrix h;
        h.tree      = bt->row_tree_ptr();
        h.blocks    = std::move(bt);
        h.symmetric = symmetric_flag;
        h.row_basis = BasisTree(*h.tree);
        if (!symmetric_flag) h.col_basis = BasisTree(*h.tree);
        h.coupling.resize(h.blocks->admissible_leaves().size());
        h.dense.resize(h.blocks->dense_leaves().size());
        for (size_t i = 0; i < h.coupling.size(); ++i) {
            int b = h.blocks->admissible_leaves()[i];
            if (h.symmetric && !h.blocks->canonical(b)) continue;
            h.coupling[i].setZero(0, 0);
        }
        for (size_t i = 0; i < h.dense.size(); ++i) {
            int b = h.blocks->dense_leaves()[i];
            if (h.symmetric && !h.blocks->canonical(b)) continue;
            const auto& bn = h.blocks->node(b);
            h.dense[i].setZero(h.tree->node(bn.row).size(), h.tree->node(bn.col).size());
        }
        h.orthonormal = true;
        return h;
    }

    // diagonal matrix with user-ordering diagonal entries d
    static H2Matrix diagonal(std::shared_ptr<const BlockTree> bt, const Vector& d) {
        H2Matrix h = zero(std::move(bt), true);
        for (int b : h.blocks->dense_leaves()) {
            const auto& bn = h.blocks->node(b);
            if (bn.row != bn.col) continue;
            const auto& t = h.tree->node(bn.row);
            Matrix& blk   = h.dense[h.blocks->dense_ordinal(b)];
            for (Index i = 0; i < t.size(); ++i) blk(i, i) = d[h.tree->perm()[t.begin + i]];
        }
        return h;
    }

    static H2Matrix scaled_identity(std::shared_ptr<const BlockTree> bt, double value) {
        const Index m = bt->n();
        return diagonal(std::move(bt), Vector::Constant(m, value));
    }

    Index n() const { return tree ? tree->n() : 0; }

    const BasisTree& vbasis() const { return symmetric ? row_basis : col_basis; }
    BasisTree&       vbasis() { return symmetric ? row_basis : col_basis; }

    const Matrix& coupling_of(int block_node) const { return coupling[blocks->adm_ordinal(block_node)]; }
    const Matrix& dense_of(int block_node) const { return dense[blocks->dense_ordinal(block_node)]; }

    bool stores(int block_node) const { return !symmetric || blocks->canonical(block_node); }

    // ---- matrix-vector products ------------------------------------------

    // y = A x for a block of vectors in internal ordering
    Matrix matvec_internal(const Matrix& x) const { return apply_internal(x, false); }
    Matrix matvec_transpose_internal(const Matrix& x) const { return apply_internal(x, true); }

    // public entry point, user ordering
    Matrix matvec(const Matrix& x_user) const {
        check_dims(x_user);
        return tree->to_user(matvec_internal(tree->to_internal(x_user)));
    }
    Matrix matvec_transpose(const Matrix& x_user) const {
        check_dims(x_user);
        return tree->to_user(matvec_transpose_internal(tree->to_internal(x_user)));
    }

    VectorBlock matvec(const VectorBlock& x) const {
        if (x.ordering == Ordering::user) return {matvec(x.data), Ordering::user};
        return {matvec_internal(x.data), Ordering::internal};
    }

    // ---- dense expansion (user ordering) ---------------------------------

    Matrix to_dense(Index cap = 8192) const {
        if (n() > cap) throw std::invalid_argument("to_dense: matrix size exceeds cap");
        Matrix a = Matrix::Zero(n(), n());
        std::vector<Matrix> ubig(tree->num_nodes()), vbig;
        for (int v = 0; v < tree->num_nodes(); ++v) ubig[v] = row_basis.reconstruct(*tree, v);
        if (!symmetric) {
            vbig.resize(tree->num_nodes());
            for (int v = 0; v < tree->num_nodes(); ++v) vbig[v] = col_basis.reconstruct(*tree, v);
        }
        const auto& vb = symmetric ? ubig : vbig;
        for (int b : blocks->admissible_leaves()) {
            if (!stores(b)) continue;
            const auto& bn = blocks->node(b);
            const auto& t  = tree->node(bn.row);
            const auto& s  = tree->node(bn.col);
            Matrix blk     = ubig[bn.row] * coupling_of(b) * vb[bn.col].transpose();
            a.block(t.begin, s.begin, t.size(), s.size()) += blk;
            if (symmetric && bn.row != bn.col)
                a.block(s.begin, t.begin, s.size(), t.size()) += blk.transpose();
        }
        for (int b : blocks->dense_leaves()) {
            if (!stores(b)) continue;
            const auto& bn = blocks->node(b);
            const auto& t  = tree->node(bn.row);
            const auto& s  = tree->node(bn.col);
            a.block(t.begin, s.begin, t.size(), s.size()) += dense_of(b);
            if (symmetric && bn.row != bn.col)
                a.block(s.begin, t.begin, s.size(), t.size()) += dense_of(b).transpose();
        }
        // internal -> user ordering on both sides
        Matrix out(n(), n());
        const auto& p = tree->perm();
        for (Index i = 0; i < n(); ++i)
            for (Index j = 0; j < n(); ++j) out(p[i], p[j]) = a(i, j);
        return out;
    }

    // ---- diagnostics ------------------------------------------------------

    StorageReport storage() const {
        StorageReport r;
        for (const auto& m : dense) r.dense_reals += m.size();
        for (const auto& m : coupling) r.coupling_reals += m.size();
        for (int v = 0; v < tree->num_nodes(); ++v) {
            if (tree->node(v).is_leaf()) r.leaf_basis_reals += row_basis.leaf_basis(v).size();
            else {
                r.transfer_reals += row_basis.transfer(tree->node(v).child[0]).size();
                r.transfer_reals += row_basis.transfer(tree->node(v).child[1]).size();
            }
        }
        if (!symmetric) {
            for (int v = 0; v < tree->num_nodes(); ++v) {
                if (tree->node(v).is_leaf()) r.leaf_basis_reals += col_basis.leaf_basis(v).size();
                else {
                    r.transfer_reals += col_basis.transfer(tree->node(v).child[0]).size();
                    r.transfer_reals += col_basis.transfer(tree->node(v).child[1]).size();
                }
            }
        }
        return r;
    }

    std::vector<Index> rank_profile() const {
        std::vector<Index> prof(tree->depth() + 1, 0);
        for (int v = 0; v < tree->num_nodes(); ++v)
            prof[tree->node(v).level] = std::max(prof[tree->node(v).level], row_basis.rank(v));
        return prof;
    }

    ValidationReport validate(Index ortho_cap = 4096) const;

    // symmetric -> explicit two-basis storage (all leaves populated)
    H2Matrix desymmetrized() const {
        if (!symmetric) return *this;
        H2Matrix g = *this;
        g.symmetric = false;
        g.col_basis = row_basis;
        for (int b : blocks->admissible_leaves()) {
            if (blocks->canonical(b)) continue;
            int mirror = find_mirror(b);
            g.coupling[blocks->adm_ordinal(b)] = coupling[blocks->adm_ordinal(mirror)].transpose();
        }
        for (int b : blocks->dense_leaves()) {
            if (blocks->canonical(b)) continue;
            int mirror = find_mirror(b);
            g.dense[blocks->dense_ordinal(b)] = dense[blocks->dense_ordinal(mirror)].transpose();
        }
        return g;
    }

    // block node with row/col swapped (exists because the tree is over identical
    // row and column cluster trees and the admissibility predicate is symmetric)
    int find_mirror(int b) const {
        const auto& bn = blocks->node(b);
        if (bn.row == bn.col) return b;
        if (mirror_.empty()) build_mirror_table();
        return mirror_[b];
    }

private:
    mutable std::vector<int> mirror_;

    void build_mirror_table() const {
        std::map<std::pair<int, int>, int> where;
        for (int b = 0; b < blocks->num_nodes(); ++b)
            where[{blocks->node(b).row, blocks->node(b).col}] = b;
        mirror_.resize(blocks->num_nodes());
        for (int b = 0; b < blocks->num_nodes(); ++b) {
            auto it = where.find({blocks->node(b).col, blocks->node(b).row});
            mirror_[b] = (it == where.end()) ? -1 : it->second;
        }
    }

    void check_dims(const Matrix& x) const {
        if (x.rows() != n()) throw std::invalid_argument("matvec: dimension mismatch");
        if (x.cols() < 1) throw std::invalid_argument("matvec: need at least one column");
    }

    Matrix apply_internal(const Matrix& x, bool transpose) const {
        const ClusterTree& ct = *tree;
        const Index b = x.cols();
        // stage 1: upsweep through the column-side basis
        const BasisTree& up   = transpose && !symmetric ? row_basis : vbasis();
        const BasisTree& down = transpose && !symmetric ? col_basis : row_basis;
        std::vector<Matrix> xhat(ct.num_nodes()), yhat(ct.num_nodes());
        for (int l = ct.depth(); l >= 0; --l)
            for (int v : ct.level_nodes(l)) {
                const auto& nd = ct.node(v);
                if (nd.is_leaf())
                    xhat[v] = up.leaf_basis(v).transpose() * x.middleRows(nd.begin, nd.size());
                else
                    xhat[v] = up.transfer(nd.child[0]).transpose() * xhat[nd.child[0]] +
                              up.transfer(nd.child[1]).transpose() * xhat[nd.child[1]];
            }
        for (int v = 0; v < ct.num_nodes(); ++v) yhat[v].setZero(down.rank(v), b);
        // stage 2: couplings
        for (int blk : blocks->admissible_leaves()) {
            if (!stores(blk)) continue;
            const auto& bn  = blocks->node(blk);
            const Matrix& s = coupling_of(blk);
            if (!transpose || symmetric) {
                yhat[bn.row].noalias() += s * xhat[bn.col];
                if (symmetric && bn.row != bn.col) yhat[bn.col].noalias() += s.transpose() * xhat[bn.row];
            } else {
                yhat[bn.col].noalias() += s.transpose() * xhat[bn.row];
            }
        }
        // stage 3: downsweep through the row-side basis
        Matrix y = Matrix::Zero(x.rows(), b);
        for (int l = 0; l <= ct.depth(); ++l)
            for (int v : ct.level_nodes(l)) {
                const auto& nd = ct.node(v);
                if (nd.is_leaf())
                    y.middleRows(nd.begin, nd.size()).noalias() += down.leaf_basis(v) * yhat[v];
                else {
                    yhat[nd.child[0]].noalias() += down.transfer(nd.child[0]) * yhat[v];
                    yhat[nd.child[1]].noalias() += down.transfer(nd.child[1]) * yhat[v];
                }
            }
        // stage 4: dense blocks
        for (int blk : blocks->dense_leaves()) {
            if (!stores(blk)) continue;
            const auto& bn = blocks->node(blk);
            const auto& t  = tree->node(bn.row);
            const auto& s  = tree->node(bn.col);
            const Matrix& d = dense_of(blk);
            if (!transpose || symmetric) {
                y.middleRows(t.begin, t.size()).noalias() += d * x.middleRows(s.begin, s.size());
                if (symmetric && bn.row != bn.col)
                    y.middleRows(s.begin, s.size()).noalias() +=
                        d.transpose() * x.middleRows(t.begin, t.size());
            } else {
                y.middleRows(s.begin, s.size()).noalias() +=
                    d.transpose() * x.middleRows(t.begin, t.size());
            }
        }
        return y;
    }
};

inline ValidationReport H2Matrix::validate(Index ortho_cap) const {
    ValidationReport rep;
    auto bad = [&rep](const std::string& msg) { rep.violations.push_back(msg); };

    if (!tree || !blocks) {
        bad("missing cluster or block tree");
        return rep;
    }
    const ClusterTree& ct = *tree;

    // permutation is a bijection
    {
        std::vector<char> seen(ct.n(), 0);
        for (Index i = 0; i < ct.n(); ++i) {
            Index p = ct.perm()[i];
            if (p < 0 || p >= ct.n() || seen[p]) { bad("permutation is not a bijection"); break; }
            seen[p] = 1;
        }
    }

    // block leaves tile the index square exactly (area accounting)
    {
        Index area = 0;
        for (int b : blocks->admissible_leaves())
            area += ct.node(blocks->node(b).row).size() * ct.node(blocks->node(b).col).size();
        for (int b : blocks->dense_leaves())
            area += ct.node(blocks->node(b).row).size() * ct.node(blocks->node(b).col).size();
        if (area != ct.n() * ct.n()) bad("block leaves do not tile the index square");
    }

    // basis shapes
    auto check_basis = [&](const BasisTree& bt, const char* name) {
        if (bt.num_nodes() != ct.num_nodes()) { bad(std::string(name) + ": wrong node count"); return; }
        for (int v = 0; v < ct.num_nodes(); ++v) {
            const auto& nd = ct.node(v);
            if (bt.rank(v) > nd.size()) bad(std::string(name) + ": rank exceeds cluster size");
            if (nd.is_leaf()) {
                if (bt.leaf_basis(v).rows() != nd.size() || bt.leaf_basis(v).cols() != bt.rank(v))
                    bad(std::string(name) + ": leaf basis dimension mismatch");
            } else {
                for (int c : nd.child)
                    if (bt.transfer(c).rows() != bt.rank(c) || bt.transfer(c).cols() != bt.rank(v))
                        bad(std::string(name) + ": transfer dimension mismatch");
            }
        }
    };
    check_basis(row_basis, "row basis");
    if (!symmetric) check_basis(col_basis, "col basis");

    // couplings and dense blocks
    const BasisTree& vb = vbasis();
    for (int b : blocks->admissible_leaves()) {
        const auto& bn = blocks->node(b);
        const Matrix& s = coupling[blocks->adm_ordinal(b)];
        if (symmetric && !blocks->canonical(b)) {
            if (s.size() != 0) bad("coupling stored at non-canonical block of a symmetric matrix");
            continue;
        }
        if (s.rows() != row_basis.rank(bn.row) || s.cols() != vb.rank(bn.col))
            bad("coupling dimension mismatch at block (" + std::to_string(bn.row) + "," +
                std::to_string(bn.col) + ")");
    }
    for (int b : blocks->dense_leaves()) {
        const auto& bn = blocks->node(b);
        if (!ct.node(bn.row).is_leaf() || !ct.node(bn.col).is_leaf())
            bad("dense block at non-leaf cluster pair");
        const Matrix& d = dense[blocks->dense_ordinal(b)];
        if (symmetric && !blocks->canonical(b)) {
            if (d.size() != 0) bad("dense block stored at non-canonical block of a symmetric matrix");
            continue;
        }
        if (d.rows() != ct.node(bn.row).size() || d.cols() != ct.node(bn.col).size())
            bad("dense block dimension mismatch");
    }

    // orthonormality claim, verified by explicit reconstruction at desk scale
    if (orthonormal && n() <= ortho_cap) {
        for (int v = 0; v < ct.num_nodes() && rep.violations.size() < 8; ++v) {
            Matrix u = row_basis.reconstruct(ct, v);
            if (u.cols() == 0) continue;
            double err = (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).norm();
            if (err > 1e-10 * std::sqrt(double(u.cols())))
                bad("row basis not orthonormal at node " + std::to_string(v));
            if (!symmetric) {
                Matrix w = col_basis.reconstruct(ct, v);
                if (w.cols() == 0) continue;
                double e2 = (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).norm();
                if (e2 > 1e-10 * std::sqrt(double(w.cols())))
                    bad("col basis not orthonormal at node " + std::to_string(v));
            }
        }
    }

    rep.level_max_rank = rank_profile();
    rep.storage = storage();
    return rep;
}

} // namespace h2
