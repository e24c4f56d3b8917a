#pragma once
//
// h2 : nested cluster bases
//
// Leaf clusters store an explicit basis U_t (|t| x k_t). An interior basis is
// never stored: it is implicitly U_t = [U_t0 E_t0; U_t1 E_t1] where E_c
// (k_c x k_t) is the transfer matrix kept on child c.
//

#include <vector>

#include "h2/cluster_tree.hpp"

namespace h2 {

class BasisTree {
public:
    BasisTree() = default;

    explicit BasisTree(const ClusterTree& ct)
        : ranks_(ct.num_nodes(), 0), leaf_basis_(ct.num_nodes()), transfer_(ct.num_nodes()) {
        for (int v = 0; v < ct.num_nodes(); ++v) {
            if (ct.node(v).is_leaf()) leaf_basis_[v].resize(ct.node(v).size(), 0);
            if (v != ct.root()) transfer_[v].resize(0, 0);
        }
    }

    Index rank(int v) const { return ranks_[v]; }
    void  set_rank(int v, Index k) { ranks_[v] = k; }

    const Matrix& leaf_basis(int v) const { return leaf_basis_[v]; }
    Matrix&       leaf_basis(int v) { return leaf_basis_[v]; }

    // transfer of node v into its parent's basis, k_v x k_parent
    const Matrix& transfer(int v) const { return transfer_[v]; }
    Matrix&       transfer(int v) { return transfer_[v]; }

    int num_nodes() const { return static_cast<int>(ranks_.size()); }
    bool empty() const { return ranks_.empty(); }

    // explicit reconstruction of the (implicit) basis of node v; desk scale only
    Matrix reconstruct(const ClusterTree& ct, int v) const {
        const ClusterNode& nd = ct.node(v);
        if (nd.is_leaf()) return leaf_basis_[v];
        Matrix out(nd.size(), ranks_[v]);
        Index  row = 0;
        for (int c : nd.child) {
            Matrix uc = reconstruct(ct, c);
            out.middleRows(row, uc.rows()) = uc * transfer_[c];
            row += uc.rows();
        }
        return out;
    }

    Index stored_reals() const {
        Index s = 0;
        for (const auto& m : leaf_basis_) s += m.size();
        for (const auto& m : transfer_) s += m.size();
        return s;
    }

private:
    std::vector<Index>  ranks_;
    std::vector<Matrix> leaf_basis_;   // leaves only
    std::vector<Matrix> transfer_;     // all but root
};

} // namespace h2
