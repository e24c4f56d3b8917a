#pragma once
//
// h2 : randomized construction from operator-vector products
//
// Level-by-level peeling: at each level all sibling cluster pairs are sampled
// simultaneously with one patterned Gaussian block (their column clusters are
// disjoint and the residual operator is block diagonal at the parent level,
// so the blocks do not interfere). Factored blocks enter the partial matrix
// as local low-rank updates, the level is recompressed, and the next level
// samples the peeled residual. Diagonal leaf blocks are extracted with
// indicator columns at the end.
//
// The sampling structure is the weak-admissibility pairing regardless of the
// destination tree; updates are scattered into whatever leaves the
// destination block tree has.
//

#include "h2/algebra.hpp"
#include "h2/linear_operator.hpp"

namespace h2 {

struct PeelConfig {
    double   eps = 1e-4;            // target relative 2-norm accuracy
    Index    sample_block_size = 16;
    Index    oversampling = 10;     // trailing probe directions required to stop
    Index    max_rank = 0;          // per-block cap; 0 = min(|t|, |s|)
    uint64_t seed = 42;
    double   norm_scale = 0;        // |op|_2; 0 = estimate with the power method
    Index    crossover_rank_cap = 128;   // hybrid: switch to peeling at this rank
};

struct LevelStats {
    int   level = 0;     // 0 = global pre-pass, 1..L = peel levels, L+1 = dense extraction
    Index blocks = 0;
    Index max_rank = 0;
    long  samples = 0;
};

struct SampleStats {
    long total = 0;
    std::vector<LevelStats> levels;
    std::vector<long> per_iteration;   // used by the iterative inversion drivers

    void add_level(LevelStats ls) {
        total += ls.samples;
        levels.push_back(ls);
    }
    bool consistent() const {
        long s = 0;
        for (const auto& l : levels) s += l.samples;
        if (!per_iteration.empty()) {
            long t = 0;
            for (long x : per_iteration) t += x;
            return t == total;
        }
        return s == total;
    }
};

class max_rank_error : public std::runtime_error {
public:
    max_rank_error(std::string msg, Matrix partial_u)
        : std::runtime_error(std::move(msg)), partial_basis(std::move(partial_u)) {}
    Matrix partial_basis;
};

// KL divergence from posterior to prior of a linear-Gaussian problem whose
// prior-preconditioned misfit Hessian has the given eigenvalues
inline double information_content(const std::vector<double>& eigenvalues) {
    double s = 0;
    for (double lam : eigenvalues) {
        if (lam < 0) throw std::invalid_argument("information_content: negative eigenvalue");
        s += std::log1p(lam);
    }
    return s;
}

namespace detail {

inline void fill_gaussian(Eigen::Ref<Matrix> m, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0, 1);
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i) m(i, j) = g(rng);
}

// adaptive range state for one sampled block
struct BlockRange {
    int t = -1, s = -1;     // row / column cluster ids
    Matrix q;               // |t| x k orthonormal
    bool converged = false;
    bool wants_full = true;  // next panel: full b columns or just the probe count
    double err_est = 0;      // largest discarded singular value at convergence

    Index rank() const { return q.cols(); }
};

// Absorb one projected panel; keep_tol is an absolute threshold on the
// panel's singular values (callers account for the sqrt(panel width) factor
// that Gaussian sampling puts on top of the operator's singular values). A
// panel that keeps every direction is saturated and asks for another full
// panel; one whose trailing (discarded) directions number at least
// `probes_needed` proves convergence; anything in between asks for a small
// probe panel next.
inline void absorb_panel(BlockRange& blk, Matrix panel, double keep_tol, Index probes_needed,
                         Index max_rank) {
    if (blk.q.cols() > 0) {
        panel -= blk.q * (blk.q.transpose() * panel);
        panel -= blk.q * (blk.q.transpose() * panel);   // second pass for orthogonality
    }
    const Index b = panel.cols();
    Eigen::BDCSVD<Matrix> svd(panel, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    Index kept = 0;
    while (kept < sv.size() && sv(kept) > keep_tol) ++kept;
    if (max_rank > 0 && blk.q.cols() + kept > max_rank)
        throw max_rank_error("adaptive factorization: block rank exceeds max_rank", blk.q);
    if (kept > 0) {
        Matrix qn(blk.q.rows(), blk.q.cols() + kept);
        qn.leftCols(blk.q.cols()) = blk.q;
        qn.rightCols(kept) = svd.matrixU().leftCols(kept);
        blk.q = std::move(qn);
    }
    blk.wants_full = kept == b;
    if (kept < b && (b - kept) >= probes_needed) {
        blk.converged = true;
        blk.err_est = kept < sv.size() ? sv(kept) : 0.0;
    }
}

} // namespace detail

// ---- patterned block sampling ----------------------------------------------

// Omega has i.i.d. standard normal entries on the rows of cluster s and zeros
// elsewhere; returns (Omega restricted to s, op(Omega) restricted to t).
inline std::pair<Matrix, Matrix> sample_block_column(const LinearOperator& op,
                                                     const ClusterTree& ct, int t, int s,
                                                     Index count, std::mt19937_64& rng) {
    if (count < 1) throw std::invalid_argument("sample_block_column: count must be >= 1");
    Matrix omega_s(ct.node(s).size(), count);
    detail::fill_gaussian(omega_s, rng);
    Matrix omega_user = Matrix::Zero(ct.n(), count);
    const auto& sn = ct.node(s);
    for (Index i = 0; i < sn.size(); ++i) omega_user.row(ct.perm()[sn.begin + i]) = omega_s.row(i);
    Matrix y = op.apply(omega_user);
    return {std::move(omega_s), ct.gather_rows(y, t)};
}

// ---- adaptive factorization of one block ------------------------------------

struct BlockFactor {
    Matrix u, v;        // block ~= u * v^T, u orthonormal
    Index  rank = 0;
    double err_est = 0;
};

// Draw samples in increments of cfg.sample_block_size until the projected
// residual panel falls below eps_block relative to the running estimate of the
// block norm, then compute the row factor с op^T applied to the padded basis.
inline BlockFactor adaptive_block_factorization(const LinearOperator& op, const ClusterTree& ct,
                                                int t, int s, double eps_block,
                                                const PeelConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    detail::BlockRange blk;
    blk.t = t;
    blk.s = s;
    blk.q.resize(ct.node(t).size(), 0);
    const Index b = std::max<Index>(cfg.sample_block_size, 1);
    const Index probes = std::min<Index>(std::max<Index>(cfg.oversampling, 1), b);
    const Index dim_cap = std::min(ct.node(t).size(), ct.node(s).size());
    double scale = 0;
    while (!blk.converged) {
        const Index panel = blk.wants_full ? b : probes;
        auto [omega, y] = sample_block_column(op, ct, t, s, panel, rng);
        scale = std::max(scale, Eigen::JacobiSVD<Matrix>(y).singularValues()(0));
        detail::absorb_panel(blk, std::move(y), 0.5 * eps_block * scale, probes,
                             cfg.max_rank > 0 ? cfg.max_rank : dim_cap + b);
        if (!blk.converged && blk.rank() >= dim_cap) {
            blk.converged = true;   // full block captured
            blk.err_est = 0;
        }
    }
    BlockFactor f;
    f.rank = blk.rank();
    f.err_est = blk.err_est;
    if (f.rank > 0) {
        Matrix z = Matrix::Zero(ct.n(), f.rank);
        const auto& tn = ct.node(t);
        for (Index i = 0; i < tn.size(); ++i) z.row(ct.perm()[tn.begin + i]) = blk.q.row(i);
        f.v = ct.gather_rows(op.apply_transpose(z), s);
    } else {
        f.v.resize(ct.node(s).size(), 0);
    }
    f.u = std::move(blk.q);
    return f;
}

// ---- full peeling constructor ------------------------------------------------

namespace detail {

struct ResidualOperator final : LinearOperator {
    ResidualOperator(const LinearOperator& base, const H2Matrix* partial)
        : LinearOperator(base.dim(), base.symmetric()), base_(&base), partial_(partial) {}

    Matrix apply_impl(const Matrix& x) const override {
        Matrix y = base_->apply(x);
        if (partial_) y -= partial_->matvec(x);
        return y;
    }
    Matrix apply_transpose_impl(const Matrix& x) const override {
        Matrix y = base_->apply_transpose(x);
        if (partial_) y -= partial_->matvec_transpose(x);
        return y;
    }
    bool has_transpose() const override { return true; }

private:
    const LinearOperator* base_;
    const H2Matrix* partial_;
};

// factor all sibling pairs of one level against the residual operator,
// sharing every sample panel across the group
inline std::vector<BlockRange> sample_level_group(const LinearOperator& residual,
                                                  const ClusterTree& ct,
                                                  const std::vector<std::pair<int, int>>& pairs,
                                                  double tol_abs, const PeelConfig& cfg,
                                                  std::mt19937_64& rng,
                                                  std::vector<Matrix>& v_factors) {
    std::vector<BlockRange> ranges(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        ranges[i].t = pairs[i].first;
        ranges[i].s = pairs[i].second;
        ranges[i].q.resize(ct.node(pairs[i].first).size(), 0);
    }
    const Index b = std::max<Index>(cfg.sample_block_size, 1);
    const Index probes = std::min<Index>(std::max<Index>(cfg.oversampling, 1), b);

    bool all_done = false;
    while (!all_done) {
        // one shared panel: Gaussian on every unconverged pair's column
        // cluster; the panel width is what the hungriest pair asks for
        Index panel = 0;
        for (const auto& blk : ranges)
            if (!blk.converged) panel = std::max(panel, blk.wants_full ? b : probes);
        Matrix omega = Matrix::Zero(ct.n(), panel);
        for (auto& blk : ranges) {
            if (blk.converged) continue;
            const auto& sn = ct.node(blk.s);
            Matrix g(sn.size(), panel);
            fill_gaussian(g, rng);
            for (Index i = 0; i < sn.size(); ++i) omega.row(ct.perm()[sn.begin + i]) = g.row(i);
        }
        Matrix y = residual.apply(omega);
        const double keep_tol = 0.5 * tol_abs * std::sqrt(double(panel));
        all_done = true;
        for (auto& blk : ranges) {
            if (blk.converged) continue;
            const Index dim_cap = std::min(ct.node(blk.t).size(), ct.node(blk.s).size());
            absorb_panel(blk, ct.gather_rows(y, blk.t), keep_tol, probes,
                         cfg.max_rank > 0 ? cfg.max_rank : dim_cap + b);
            if (!blk.converged && blk.rank() >= dim_cap) {
                blk.converged = true;
                blk.err_est = 0;
            }
            all_done &= blk.converged;
        }
    }

    // row factors for the whole group with one padded transpose application
    Index kmax = 0;
    for (const auto& blk : ranges) kmax = std::max(kmax, blk.rank());
    v_factors.assign(ranges.size(), Matrix());
    if (kmax > 0) {
        Matrix z = Matrix::Zero(ct.n(), kmax);
        for (const auto& blk : ranges) {
            const auto& tn = ct.node(blk.t);
            for (Index i = 0; i < tn.size(); ++i)
                z.row(ct.perm()[tn.begin + i]).head(blk.rank()) = blk.q.row(i);
        }
        Matrix w = residual.apply_transpose(z);
        for (size_t i = 0; i < ranges.size(); ++i)
            v_factors[i] = ct.gather_rows(w, ranges[i].s).leftCols(ranges[i].rank());
    } else {
        for (size_t i = 0; i < ranges.size(); ++i)
            v_factors[i] = Matrix::Zero(ct.node(ranges[i].s).size(), 0);
    }
    return ranges;
}

} // namespace detail

struct PeelResult {
    H2Matrix matrix;
    SampleStats stats;
};

inline PeelResult peel_construct(const LinearOperator& op, std::shared_ptr<const BlockTree> bt,
                                 const PeelConfig& cfg) {
    if (bt->n() != op.dim()) throw std::invalid_argument("peel_construct: dimension mismatch");
    const ClusterTree& ct = bt->row_tree();
    std::mt19937_64 rng(cfg.seed);
    SampleStats stats;
    const bool symmetric = op.symmetric();

    // scale for the absolute block tolerances
    long before = op.columns_applied();
    double norm_scale = cfg.norm_scale;
    if (norm_scale <= 0) norm_scale = std::max(pnorm_estimate(op, 2).value, 1e-300);
    stats.add_level({0, 0, 0, op.columns_applied() - before});

    const double tol_abs = 0.5 * cfg.eps * norm_scale;
    H2Matrix partial = H2Matrix::zero(bt, symmetric);

    for (int level = 1; level <= ct.depth(); ++level) {
        // unordered sibling pairs at this level
        std::vector<std::pair<int, int>> pairs;
        for (int v : ct.level_nodes(level - 1)) {
            const auto& nd = ct.node(v);
            if (!nd.is_leaf()) pairs.emplace_back(nd.child[0], nd.child[1]);
        }
        if (pairs.empty()) continue;
        before = op.columns_applied();

        detail::ResidualOperator residual(op, &partial);
        std::vector<Matrix> v_factors;
        auto ranges = detail::sample_level_group(residual, ct, pairs, tol_abs, cfg, rng, v_factors);
        Index max_rank_seen = 0;
        for (size_t i = 0; i < ranges.size(); ++i) {
            max_rank_seen = std::max(max_rank_seen, ranges[i].rank());
            if (ranges[i].rank() > 0)
                detail::apply_local_update(partial, ranges[i].t, ranges[i].s, ranges[i].q,
                                           v_factors[i]);
        }
        if (!symmetric) {
            // mirrored blocks sampled in a second group with the roles swapped
            std::vector<std::pair<int, int>> mirrored;
            for (auto [t, s] : pairs) mirrored.emplace_back(s, t);
            detail::ResidualOperator residual2(op, &partial);
            std::vector<Matrix> v2;
            auto ranges2 = detail::sample_level_group(residual2, ct, mirrored, tol_abs, cfg, rng, v2);
            for (size_t i = 0; i < ranges2.size(); ++i) {
                max_rank_seen = std::max(max_rank_seen, ranges2[i].rank());
                if (ranges2[i].rank() > 0)
                    detail::apply_local_update(partial, ranges2[i].t, ranges2[i].s, ranges2[i].q,
                                               v2[i]);
            }
        }
        partial = recompress(partial, 0.5 * cfg.eps);
        stats.add_level({level, Index(pairs.size()) * (symmetric ? 1 : 2), max_rank_seen,
                         op.columns_applied() - before});
    }

    // exact extraction of the diagonal dense leaves with indicator columns
    before = op.columns_applied();
    const Index m = ct.max_leaf_size();
    {
        detail::ResidualOperator residual(op, &partial);
        Matrix omega = Matrix::Zero(ct.n(), m);
        for (int v : ct.leaves()) {
            const auto& nd = ct.node(v);
            for (Index j = 0; j < nd.size(); ++j) omega(ct.perm()[nd.begin + j], j) = 1.0;
        }
        Matrix y = residual.apply(omega);
        for (int b : bt->dense_leaves()) {
            if (!partial.stores(b)) continue;
            const auto& bn = bt->node(b);
            if (bn.row != bn.col) continue;
            Matrix blk = ct.gather_rows(y, bn.row).leftCols(ct.node(bn.row).size());
            if (symmetric) blk = ((blk + blk.transpose()) / 2).eval();
            partial.dense[bt->dense_ordinal(b)] += blk;
        }
    }
    stats.add_level({ct.depth() + 1, Index(ct.leaves().size()), 0, op.columns_applied() - before});

    PeelResult res;
    res.matrix = recompress(partial, cfg.eps);
    res.stats = std::move(stats);
    return res;
}

// ---- global randomized low-rank baseline -------------------------------------

struct LowRankResult {
    LowRankFactor factor;
    SampleStats stats;
    double residual_estimate = 0;   // relative to the operator norm
    bool max_rank_reached = false;
};

namespace detail {

// core blocked range finder; stagnation_window > 0 adds the hybrid crossover
// stopping rule
inline LowRankResult randomized_lowrank_impl(const LinearOperator& op, double eps, Index max_rank,
                                             const PeelConfig& cfg, int stagnation_window) {
    std::mt19937_64 rng(cfg.seed);
    SampleStats stats;
    long before = op.columns_applied();
    double norm_scale = cfg.norm_scale;
    if (norm_scale <= 0) norm_scale = std::max(pnorm_estimate(op, 2).value, 1e-300);

    const Index n = op.dim();
    const Index b = std::max<Index>(cfg.sample_block_size, 1);
    const Index probes = std::min<Index>(std::max<Index>(cfg.oversampling, 1), b);
    const double tol_abs = eps * norm_scale;

    BlockRange blk;
    blk.q.resize(n, 0);
    std::vector<double> panel_norms;
    bool capped = false;
    while (!blk.converged) {
        const Index panel = blk.wants_full ? b : probes;
        Matrix omega(n, panel);
        fill_gaussian(omega, rng);
        Matrix y = op.apply(omega);
        if (blk.q.cols() > 0) {
            y -= blk.q * (blk.q.transpose() * y);
            y -= blk.q * (blk.q.transpose() * y);
        }
        // per-column ratios give a scale-correct residual estimate
        double ratio = 0;
        for (Index j = 0; j < panel; ++j)
            ratio = std::max(ratio, y.col(j).norm() / omega.col(j).norm());
        panel_norms.push_back(ratio);
        blk.err_est = ratio;
        Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU);
        const auto& sv = svd.singularValues();
        const double keep_tol = 0.5 * tol_abs * std::sqrt(double(panel));
        Index kept_raw = 0;
        while (kept_raw < sv.size() && sv(kept_raw) > keep_tol) ++kept_raw;
        Index kept = kept_raw;
        if (max_rank > 0) kept = std::min(kept, std::max<Index>(max_rank - blk.q.cols(), 0));
        if (kept > 0) {
            Matrix qn(n, blk.q.cols() + kept);
            qn.leftCols(blk.q.cols()) = blk.q;
            qn.rightCols(kept) = svd.matrixU().leftCols(kept);
            blk.q = std::move(qn);
        }
        blk.wants_full = kept_raw == panel;
        if (kept_raw < panel && (panel - kept_raw) >= probes) {
            blk.converged = true;
            blk.err_est =
                kept_raw < sv.size() ? sv(kept_raw) / std::sqrt(double(panel)) : 0.0;
        }
        if (blk.q.cols() >= n) blk.converged = true;
        if (max_rank > 0 && blk.q.cols() >= max_rank && !blk.converged) {
            capped = true;
            break;
        }
        const size_t w = size_t(stagnation_window);
        if (stagnation_window > 0 && panel_norms.size() > w &&
            panel_norms.back() > 0.9 * panel_norms[panel_norms.size() - 1 - w]) {
            capped = true;   // stagnating spectrum; hand over to the peeler
            break;
        }
    }

    LowRankResult res;
    const Index k = blk.q.cols();
    if (k > 0) {
        Matrix y = op.apply_transpose(blk.q);
        if (op.symmetric()) {
            // symmetric projection Q (Q^T A Q) Q^T = B B^T keeps updates symmetric
            Matrix t = blk.q.transpose() * y;
            t = ((t + t.transpose()) / 2).eval();
            Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
            Vector lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            Matrix bfac = blk.q * eig.eigenvectors() * lam.asDiagonal();
            res.factor = {bfac, bfac};
        } else {
            res.factor = {blk.q, std::move(y)};
        }
    } else {
        res.factor = {Matrix::Zero(n, 0), Matrix::Zero(n, 0)};
    }
    res.max_rank_reached = capped;
    res.residual_estimate = norm_scale > 0 ? blk.err_est / norm_scale : 0.0;
    stats.add_level({0, 1, k, op.columns_applied() - before});
    res.stats = std::move(stats);
    return res;
}

} // namespace detail

// Adaptive randomized range finder on the whole operator. Stops when the
// estimated relative residual reaches eps or the rank hits max_rank (reported
// in the result, not fatal). Symmetric operators get a symmetric B B^T form.
inline LowRankResult randomized_lowrank(const LinearOperator& op, double eps, Index max_rank,
                                        const PeelConfig& cfg) {
    return detail::randomized_lowrank_impl(op, eps, max_rank, cfg, 0);
}

// ---- hybrid constructor --------------------------------------------------------

struct HybridResult {
    H2Matrix matrix;
    SampleStats stats;
    Index global_rank = 0;
};

// Global low-rank capture first (up to the crossover), then peel the residual
// and add the low-rank part back as a global update.
inline HybridResult hybrid_construct(const LinearOperator& op, std::shared_ptr<const BlockTree> bt,
                                     const PeelConfig& cfg) {
    PeelConfig c = cfg;
    if (c.norm_scale <= 0) c.norm_scale = std::max(pnorm_estimate(op, 2).value, 1e-300);
    LowRankResult lr = detail::randomized_lowrank_impl(op, c.eps, c.crossover_rank_cap, c, 3);

    const LowRankFactor& f = lr.factor;
    auto residual = make_operator(
        op.dim(), op.symmetric(),
        [&op, &f](const Matrix& x) -> Matrix {
            Matrix y = op.apply(x);
            if (f.rank() > 0) y -= f.X * (f.Y.transpose() * x);
            return y;
        },
        [&op, &f](const Matrix& x) -> Matrix {
            Matrix y = op.apply_transpose(x);
            if (f.rank() > 0) y -= f.Y * (f.X.transpose() * x);
            return y;
        });

    PeelResult pr = peel_construct(*residual, bt, c);

    HybridResult res;
    res.global_rank = f.rank();
    res.matrix = f.rank() > 0 ? low_rank_update(pr.matrix, f, c.eps) : std::move(pr.matrix);
    res.stats = lr.stats;
    for (const auto& l : pr.stats.levels) res.stats.add_level(l);
    return res;
}

// relative 2-norm error estimate of an approximation against its operator
inline double estimate_relative_error(const LinearOperator& op, const H2Matrix& h,
                                      double op_norm = 0) {
    auto diff = make_operator(
        op.dim(), false,
        [&](const Matrix& x) -> Matrix { return op.apply(x) - h.matvec(x); },
        [&](const Matrix& x) -> Matrix { return op.apply_transpose(x) - h.matvec_transpose(x); });
    double err = pnorm_estimate(*diff, 2).value;
    double base = op_norm > 0 ? op_norm : pnorm_estimate(op, 2).value;
    return base > 0 ? err / base : err;
}

} // namespace h2
