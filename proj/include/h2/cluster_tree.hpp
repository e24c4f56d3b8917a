#pragma once
//
// h2 : binary KD cluster tree over a point set
//
// Nodes hold contiguous index ranges of the internal ordering; the tree owns
// the permutation between user indices and internal indices. Built by
// recursive median splits along the longest bounding-box axis.
//

#include <memory>
#include <numeric>
#include <vector>

#include "h2/point_set.hpp"

namespace h2 {

struct ClusterNode {
    Index begin = 0, end = 0;   // internal index range [begin, end)
    int   level  = 0;           // root = 0
    int   parent = -1;
    int   child[2] = {-1, -1};
    BBox  box;

    Index size() const { return end - begin; }
    bool  is_leaf() const { return child[0] < 0; }
};

class ClusterTree {
public:
    ClusterTree(const PointSet& points, Index leaf_size) {
        if (points.size() < 1) throw std::invalid_argument("cluster tree: empty point set");
        if (leaf_size < 2) throw std::invalid_argument("cluster tree: leaf_size must be >= 2");
        n_         = points.size();
        dim_       = points.dim();
        leaf_size_ = leaf_size;
        perm_.resize(n_);
        std::iota(perm_.begin(), perm_.end(), Index(0));
        build(points, 0, n_, 0, -1);
        inv_perm_.resize(n_);
        for (Index i = 0; i < n_; ++i) inv_perm_[perm_[i]] = i;
        levels_.resize(depth_ + 1);
        for (int v = 0; v < static_cast<int>(nodes_.size()); ++v) {
            levels_[nodes_[v].level].push_back(v);
            if (nodes_[v].is_leaf()) leaves_.push_back(v);
        }
    }

    Index n() const { return n_; }
    int   dim() const { return dim_; }
    Index leaf_size() const { return leaf_size_; }
    int   depth() const { return depth_; }
    int   num_nodes() const { return static_cast<int>(nodes_.size()); }
    int   root() const { return 0; }

    const ClusterNode& node(int v) const { return nodes_[v]; }
    const std::vector<int>& leaves() const { return leaves_; }
    const std::vector<int>& level_nodes(int l) const { return levels_[l]; }
    Index max_leaf_size() const {
        Index m = 0;
        for (int v : leaves_) m = std::max(m, nodes_[v].size());
        return m;
    }

    // internal index i corresponds to user index perm()[i]
    const std::vector<Index>& perm() const { return perm_; }
    const std::vector<Index>& inv_perm() const { return inv_perm_; }

    // true if node u lies in the subtree rooted at node v
    bool is_descendant(int u, int v) const {
        return nodes_[u].begin >= nodes_[v].begin && nodes_[u].end <= nodes_[v].end &&
               nodes_[u].level >= nodes_[v].level;
    }

    Matrix gather_rows(const Matrix& user_rows_matrix, int v) const {
        const ClusterNode& t = nodes_[v];
        Matrix out(t.size(), user_rows_matrix.cols());
        for (Index i = 0; i < t.size(); ++i) out.row(i) = user_rows_matrix.row(perm_[t.begin + i]);
        return out;
    }

    Matrix to_internal(const Matrix& x_user) const {
        Matrix out(x_user.rows(), x_user.cols());
        for (Index i = 0; i < n_; ++i) out.row(i) = x_user.row(perm_[i]);
        return out;
    }

    Matrix to_user(const Matrix& x_internal) const {
        Matrix out(x_internal.rows(), x_internal.cols());
        for (Index i = 0; i < n_; ++i) out.row(perm_[i]) = x_internal.row(i);
        return out;
    }

    // rebuild from previously stored raw data (deserialization)
    static std::shared_ptr<const ClusterTree> restore(std::vector<ClusterNode> nodes,
                                                      std::vector<Index> perm, int dim,
                                                      Index leaf_size) {
        auto ct        = std::shared_ptr<ClusterTree>(new ClusterTree());
        ct->nodes_     = std::move(nodes);
        ct->perm_      = std::move(perm);
        ct->n_         = static_cast<Index>(ct->perm_.size());
        ct->dim_       = dim;
        ct->leaf_size_ = leaf_size;
        ct->inv_perm_.resize(ct->n_);
        for (Index i = 0; i < ct->n_; ++i) {
            if (ct->perm_[i] < 0 || ct->perm_[i] >= ct->n_)
                throw std::invalid_argument("cluster tree restore: bad permutation");
            ct->inv_perm_[ct->perm_[i]] = i;
        }
        for (const auto& nd : ct->nodes_) ct->depth_ = std::max(ct->depth_, nd.level);
        ct->levels_.resize(ct->depth_ + 1);
        for (int v = 0; v < static_cast<int>(ct->nodes_.size()); ++v) {
            ct->levels_[ct->nodes_[v].level].push_back(v);
            if (ct->nodes_[v].is_leaf()) ct->leaves_.push_back(v);
        }
        return ct;
    }

private:
    ClusterTree() = default;

    int build(const PointSet& pts, Index begin, Index end, int level, int parent) {
        int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        {
            ClusterNode& nd = nodes_.back();
            nd.begin  = begin;
            nd.end    = end;
            nd.level  = level;
            nd.parent = parent;
            nd.box    = bbox(pts, begin, end);
        }
        depth_ = std::max(depth_, level);
        if (end - begin > leaf_size_) {
            int axis      = nodes_[id].box.longest_axis();
            Index mid     = begin + (end - begin) / 2;
            auto first    = perm_.begin() + begin;
            auto nth      = perm_.begin() + mid;
            auto last     = perm_.begin() + end;
            std::nth_element(first, nth, last, [&](Index a, Index b) {
                double xa = pts.coord(a, axis), xb = pts.coord(b, axis);
                return xa < xb || (xa == xb && a < b);   // ties -> lower index first
            });
            // nth_element leaves both sides unordered; sort for a deterministic
            // permutation independent of libstdc++ internals
            std::sort(first, nth, [&](Index a, Index b) {
                double xa = pts.coord(a, axis), xb = pts.coord(b, axis);
                return xa < xb || (xa == xb && a < b);
            });
            std::sort(nth, last, [&](Index a, Index b) {
                double xa = pts.coord(a, axis), xb = pts.coord(b, axis);
                return xa < xb || (xa == xb && a < b);
            });
            int c0 = build(pts, begin, mid, level + 1, id);
            int c1 = build(pts, mid, end, level + 1, id);
            nodes_[id].child[0] = c0;
            nodes_[id].child[1] = c1;
        }
        return id;
    }

    BBox bbox(const PointSet& pts, Index begin, Index end) const {
        BBox b;
        b.dim = pts.dim();
        for (int a = 0; a < b.dim; ++a) {
            b.lo[a] = std::numeric_limits<double>::infinity();
            b.hi[a] = -std::numeric_limits<double>::infinity();
        }
        for (Index i = begin; i < end; ++i)
            for (int a = 0; a < b.dim; ++a) {
                double x = pts.coord(perm_[i], a);
                b.lo[a]  = std::min(b.lo[a], x);
                b.hi[a]  = std::max(b.hi[a], x);
            }
        return b;
    }

    std::vector<ClusterNode> nodes_;
    std::vector<Index> perm_, inv_perm_;
    std::vector<int> leaves_;
    std::vector<std::vector<int>> levels_;
    Index n_ = 0, leaf_size_ = 0;
    int dim_ = 0, depth_ = 0;
};

inline std::shared_ptr<const ClusterTree> build_cluster_tree(const PointSet& points, Index leaf_size) {
    return std::make_shared<const ClusterTree>(points, leaf_size);
}

} // namespace h2
