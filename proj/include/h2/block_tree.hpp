#pragma once
//
// h2 : admissibility and the block tree
//
// The block tree is a quadtree over cluster pairs (t,s). A pair is an
// ADMISSIBLE leaf if the admissibility predicate holds, a DENSE leaf if both
// clusters are cluster-tree leaves, and is subdivided otherwise. Leaves tile
// the n x n index square exactly once.
//

#include <memory>
#include <vector>

#include "h2/cluster_tree.hpp"

namespace h2 {

enum class Admissibility { strong, weak };

// strong: max(diam t, diam s) <= eta * dist(t, s)
// weak:   t != s
inline bool is_admissible(const ClusterNode& t, const ClusterNode& s, double eta,
                          Admissibility mode = Admissibility::strong) {
    if (mode == Admissibility::weak) return t.begin != s.begin || t.end != s.end;
    double d = t.box.distance(s.box);
    return std::max(t.box.diameter(), s.box.diameter()) <= eta * d;
}

struct BlockNode {
    enum class Tag { interior, admissible, dense };

    int row = -1, col = -1;     // cluster node ids
    int level = 0;
    int parent = -1;
    int child[4] = {-1, -1, -1, -1};
    Tag tag = Tag::interior;

    bool is_leaf() const { return tag != Tag::interior; }
};

class BlockTree {
public:
    BlockTree(std::shared_ptr<const ClusterTree> rows, std::shared_ptr<const ClusterTree> cols,
              double eta, Admissibility mode)
        : rows_(std::move(rows)), cols_(std::move(cols)), eta_(eta), mode_(mode) {
        if (rows_->n() != cols_->n())
            throw std::invalid_argument("block tree: row/column trees have different sizes");
        adm_ordinal_.assign(1, -1);   // grown alongside nodes_
        dense_ordinal_.assign(1, -1);
        build(rows_->root(), cols_->root(), 0, -1);
    }

    const ClusterTree& row_tree() const { return *rows_; }
    const ClusterTree& col_tree() const { return *cols_; }
    std::shared_ptr<const ClusterTree> row_tree_ptr() const { return rows_; }
    std::shared_ptr<const ClusterTree> col_tree_ptr() const { return cols_; }

    double eta() const { return eta_; }
    Admissibility mode() const { return mode_; }
    Index n() const { return rows_->n(); }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    const BlockNode& node(int b) const { return nodes_[b]; }

    const std::vector<int>& admissible_leaves() const { return adm_leaves_; }
    const std::vector<int>& dense_leaves() const { return dense_leaves_; }

    // ordinal of an admissible/dense leaf within its list, -1 otherwise
    int adm_ordinal(int b) const { return adm_ordinal_[b]; }
    int dense_ordinal(int b) const { return dense_ordinal_[b]; }

    // canonical orientation for symmetric storage: row id <= col id
    bool canonical(int b) const { return nodes_[b].row <= nodes_[b].col; }

    int max_level() const { return max_level_; }

private:
    int build(int t, int s, int level, int parent) {
        int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        adm_ordinal_.push_back(-1);
        dense_ordinal_.push_back(-1);
        nodes_[id].row    = t;
        nodes_[id].col    = s;
        nodes_[id].level  = level;
        nodes_[id].parent = parent;
        max_level_        = std::max(max_level_, level);

        const ClusterNode& tn = rows_->node(t);
        const ClusterNode& sn = cols_->node(s);
        if (is_admissible(tn, sn, eta_, mode_)) {
            nodes_[id].tag   = BlockNode::Tag::admissible;
            adm_ordinal_[id] = static_cast<int>(adm_leaves_.size());
            adm_leaves_.push_back(id);
        } else if (tn.is_leaf() && sn.is_leaf()) {
            nodes_[id].tag     = BlockNode::Tag::dense;
            dense_ordinal_[id] = static_cast<int>(dense_leaves_.size());
            dense_leaves_.push_back(id);
        } else {
            // subdivide whichever side still has children
            std::vector<int> ts = tn.is_leaf() ? std::vector<int>{t}
                                               : std::vector<int>{tn.child[0], tn.child[1]};
            std::vector<int> ss = sn.is_leaf() ? std::vector<int>{s}
                                               : std::vector<int>{sn.child[0], sn.child[1]};
            int k = 0;
            for (int tc : ts)
                for (int sc : ss) nodes_[id].child[k++] = build(tc, sc, level + 1, id);
        }
        return id;
    }

    std::shared_ptr<const ClusterTree> rows_, cols_;
    std::vector<BlockNode> nodes_;
    std::vector<int> adm_leaves_, dense_leaves_;
    std::vector<int> adm_ordinal_, dense_ordinal_;
    double eta_;
    Admissibility mode_;
    int max_level_ = 0;
};

inline std::shared_ptr<const BlockTree> build_block_tree(std::shared_ptr<const ClusterTree> rows,
                                                         std::shared_ptr<const ClusterTree> cols,
                                                         double eta, Admissibility mode) {
    return std::make_shared<const BlockTree>(std::move(rows), std::move(cols), eta, mode);
}

} // namespace h2
