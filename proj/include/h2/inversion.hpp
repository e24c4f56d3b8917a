#pragma once
//
// h2 : iterative approximate inversion
//
// Newton-Schulz X <- (2I - XA)X and its order-l hyperpower and unrolled
// generalizations. Hierarchical variants never form matrix products: each
// iterate is re-constructed from scratch by the randomized peeler driven by a
// sampler that evaluates the iteration formula with a handful of compressed
// matrix-vector products. Construction thresholds may follow a dynamic
// schedule that is loose early and tightens as the residual falls.
//

#include <chrono>

#include "h2/construction.hpp"

namespace h2 {

struct TraceRow {
    int    iter = 0;
    double residual = 0;      // |A X - I|_2 estimate before this rebuild
    double eps_k = 0;         // construction threshold used for the rebuild
    long   samples = 0;       // sampler applications consumed by the rebuild
    double wall_seconds = 0;
};

struct ConvergenceTrace {
    std::vector<TraceRow> rows;
    double final_residual = 0;
    bool   converged = false;
    std::vector<std::string> notes;

    int  iterations() const { return static_cast<int>(rows.size()); }
    long total_samples() const {
        long s = 0;
        for (const auto& r : rows) s += r.samples;
        return s;
    }
};

class divergence_error : public std::runtime_error {
public:
    divergence_error(const std::string& msg, ConvergenceTrace t)
        : std::runtime_error(msg), trace(std::move(t)) {}
    ConvergenceTrace trace;
};

// ---- construction threshold schedule ----------------------------------------

struct ThresholdSchedule {
    enum class Mode { fixed, dynamic };
    Mode   mode = Mode::fixed;
    double eps_initial = 1e-2;
};

// static mode: always eps_final. dynamic mode: loose early, tightening
// quadratically with the residual, clamped to [eps_final, eps_initial].
inline double threshold_schedule(double residual, int /*iter*/, double eps_final,
                                 const ThresholdSchedule& sched) {
    if (sched.mode == ThresholdSchedule::Mode::fixed) return eps_final;
    const double v = std::min(sched.eps_initial, residual * residual / 10.0);
    return std::clamp(v, eps_final, sched.eps_initial);
}

// ---- dense reference implementation ------------------------------------------

struct DenseInverseResult {
    Matrix X;
    ConvergenceTrace trace;
};

struct DenseNSOptions {
    bool stabilize = false;   // pseudoinverse-mode correction step
    int  max_iter = 200;
};

inline double dense_spectral_norm(const Matrix& a) {
    return a.size() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
}

// Stabilized Newton-Schulz on explicit matrices; the dense oracle for the
// hierarchical drivers.
inline DenseInverseResult newton_schulz_dense(const Matrix& a, const Matrix& x0, double eps,
                                              const DenseNSOptions& opts = {}) {
    const Index n = a.rows();
    if (a.cols() != n || x0.rows() != n || x0.cols() != n)
        throw std::invalid_argument("newton_schulz_dense: square conforming matrices required");
    Matrix x = x0;
    ConvergenceTrace trace;
    const Matrix id = Matrix::Identity(n, n);
    int increase_streak = 0;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0;; ++k) {
        const double e = dense_spectral_norm(a * x - id);
        if (e <= eps) {
            trace.final_residual = e;
            trace.converged = true;
            break;
        }
        increase_streak = e > prev ? increase_streak + 1 : 0;
        prev = e;
        if (increase_streak >= 3)
            throw divergence_error("newton_schulz_dense: residual increased 3 times", trace);
        if (k >= opts.max_iter)
            throw divergence_error("newton_schulz_dense: iteration limit", trace);
        const auto t0 = std::chrono::steady_clock::now();
        x = (2.0 * id - x * a) * x;
        if (opts.stabilize) {
            // correction guards the unwanted singular values of XA;
            // trigger when the smallest retained one drifts above 1 + 1e-2
            Eigen::JacobiSVD<Matrix> svd(x * a);
            const auto& sv = svd.singularValues();
            double smallest_retained = std::numeric_limits<double>::infinity();
            for (Index i = 0; i < sv.size(); ++i)
                if (sv(i) > 0.5) smallest_retained = std::min(smallest_retained, sv(i));
            if (std::isfinite(smallest_retained) && smallest_retained > 1.0 + 1e-2) x = x * a * x;
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trace.rows.push_back({k, e, eps, 0, dt});
    }
    return {std::move(x), std::move(trace)};
}

// ---- starting iterates ---------------------------------------------------------

// X0 = I / |A|_inf, exactly representable with diagonal dense leaves
inline H2Matrix scaled_identity_start(const H2Matrix& a) {
    H2Operator op(a);
    const double norm_inf = pnorm_estimate(op, std::numeric_limits<double>::infinity()).value;
    if (norm_inf <= 0) throw std::invalid_argument("scaled_identity_start: zero operator");
    return H2Matrix::scaled_identity(a.blocks, 1.0 / norm_inf);
}

// ---- iterate samplers ------------------------------------------------------------

// evaluates Y = (2I - X_k A) X_k Omega with three compressed matvecs
inline std::shared_ptr<LinearOperator> ns_sampler(const H2Matrix& xk, const H2Matrix& a) {
    if (xk.n() != a.n()) throw std::invalid_argument("ns_sampler: dimension mismatch");
    const bool sym = xk.symmetric && a.symmetric;
    return make_operator(
        a.n(), sym,
        [&xk, &a](const Matrix& w) -> Matrix {
            Matrix t = xk.matvec(w);
            return 2.0 * t - xk.matvec(a.matvec(t));
        },
        [&xk, &a](const Matrix& w) -> Matrix {
            Matrix t = xk.matvec_transpose(w);
            return xk.matvec_transpose(2.0 * w - a.matvec_transpose(t));
        });
}

// evaluates Y = X_k (I + R + ... + R^{l-1}) Omega, R = I - A X_k, by a
// Horner-style loop; 2(l-1)+1 compressed matvecs per application
inline std::shared_ptr<LinearOperator> hyperpower_sampler(const H2Matrix& xk, const H2Matrix& a,
                                                          int order) {
    if (order < 2 || order > 64) throw std::invalid_argument("hyperpower order must be in [2, 64]");
    const bool sym = xk.symmetric && a.symmetric;
    return make_operator(
        a.n(), sym,
        [&xk, &a, order](const Matrix& w) -> Matrix {
            Matrix y = w, r = w;
            for (int i = 1; i < order; ++i) {
                r -= a.matvec(xk.matvec(r));
                y += r;
            }
            return xk.matvec(y);
        },
        [&xk, &a, order](const Matrix& w) -> Matrix {
            Matrix u = xk.matvec_transpose(w);
            Matrix y = u, r = u;
            for (int i = 1; i < order; ++i) {
                r -= xk.matvec_transpose(a.matvec_transpose(r));
                y += r;
            }
            return y;
        });
}

namespace detail {

// binomial row C(n, 0..n) via Pascal's triangle, exact in 64-bit integers
inline std::vector<unsigned long long> binomial_row(int n) {
    std::vector<unsigned long long> row{1};
    for (int i = 1; i <= n; ++i) {
        std::vector<unsigned long long> next(i + 1, 1);
        for (int j = 1; j < i; ++j) next[j] = row[j - 1] + row[j];
        row = std::move(next);
    }
    return row;
}

} // namespace detail

// The k-fold unrolled Newton-Schulz iterate as a single polynomial in A X_0:
// X_k = X_0 sum_{i=0}^{2^k - 1} C(2^k, i+1) (-A X_0)^i, evaluated by Horner.
// The sum has 2^k terms, so only small k are practical.
inline std::shared_ptr<LinearOperator> unrolled_sampler(const H2Matrix& x0, const H2Matrix& a,
                                                        int k) {
    if (k < 0 || k > 6) throw std::invalid_argument("unrolled_sampler: k must be in [0, 6]");
    const int n_pow = 1 << k;
    auto coeff = detail::binomial_row(n_pow);   // C(2^k, j)
    const bool sym = x0.symmetric && a.symmetric;
    return make_operator(a.n(), sym, [&x0, &a, coeff, n_pow](const Matrix& w) -> Matrix {
        Matrix p = double(coeff[n_pow]) * w;    // c_{N-1} = C(N, N)
        for (int i = n_pow - 2; i >= 0; --i) p = double(coeff[i + 1]) * w - a.matvec(x0.matvec(p));
        return x0.matvec(p);
    });
}

// ---- residual ------------------------------------------------------------------

// |A X - I|_2 via the iterative 2-norm estimate of the composed operator
inline double residual_norm(const LinearOperator& a, const LinearOperator& x) {
    if (a.dim() != x.dim()) throw std::invalid_argument("residual_norm: dimension mismatch");
    auto composed = make_operator(
        a.dim(), false,
        [&](const Matrix& v) -> Matrix { return a.apply(x.apply(v)) - v; },
        [&](const Matrix& v) -> Matrix { return x.apply_transpose(a.apply_transpose(v)) - v; });
    return pnorm_estimate(*composed, 2).value;
}

inline double residual_norm(const H2Matrix& a, const H2Matrix& x) {
    H2Operator oa(a), ox(x);
    return residual_norm(oa, ox);
}

// ---- hierarchical inversion drivers ----------------------------------------------

struct HInverseResult {
    H2Matrix X;
    ConvergenceTrace trace;
};

namespace detail {

template <typename SamplerFactory>
HInverseResult h_iterative_inverse(const H2Matrix& a, const H2Matrix& x0,
                                   const ThresholdSchedule& sched, double eps,
                                   const PeelConfig& cfg, SamplerFactory&& make_sampler,
                                   int max_iter) {
    if (a.n() != x0.n()) throw std::invalid_argument("inverse: dimension mismatch");
    H2Matrix x = x0;
    ConvergenceTrace trace;
    double prev_e = std::numeric_limits<double>::infinity();
    double prev_eps_k = std::numeric_limits<double>::infinity();
    int increase_streak = 0;
    for (int k = 0;; ++k) {
        const double e = residual_norm(a, x);
        if (k == 0 && e >= 1.0)
            trace.notes.push_back("warm start residual >= 1; global convergence not guaranteed");
        if (e <= eps) {
            trace.final_residual = e;
            trace.converged = true;
            break;
        }
        increase_streak = e > prev_e ? increase_streak + 1 : 0;
        prev_e = e;
        if (increase_streak >= 3)
            throw divergence_error("hierarchical inversion: residual increased 3 times", trace);
        if (k >= max_iter) throw divergence_error("hierarchical inversion: iteration limit", trace);

        double eps_k = std::min(threshold_schedule(e, k, eps, sched), prev_eps_k);
        prev_eps_k = eps_k;
        PeelConfig step_cfg = cfg;
        step_cfg.eps = eps_k;
        step_cfg.seed = cfg.seed + 1000003ull * (unsigned long long)(k + 1);

        const auto t0 = std::chrono::steady_clock::now();
        auto sampler = make_sampler(x);
        PeelResult pr = peel_construct(*sampler, a.blocks, step_cfg);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        x = std::move(pr.matrix);
        trace.rows.push_back({k, e, eps_k, pr.stats.total, dt});
    }
    return {std::move(x), std::move(trace)};
}

} // namespace detail

inline HInverseResult h_newton_schulz(const H2Matrix& a, const H2Matrix& x0,
                                      const ThresholdSchedule& sched, double eps,
                                      const PeelConfig& cfg, int max_iter = 64) {
    return detail::h_iterative_inverse(
        a, x0, sched, eps, cfg, [&a](const H2Matrix& x) { return ns_sampler(x, a); }, max_iter);
}

inline HInverseResult h_hyperpower(const H2Matrix& a, const H2Matrix& x0, int order,
                                   const ThresholdSchedule& sched, double eps,
                                   const PeelConfig& cfg, int max_iter = 64) {
    return detail::h_iterative_inverse(
        a, x0, sched, eps, cfg,
        [&a, order](const H2Matrix& x) { return hyperpower_sampler(x, a, order); }, max_iter);
}

// single-construction inverse from k unrolled iterations off a starting iterate
inline HInverseResult h_unrolled(const H2Matrix& a, const H2Matrix& x0, int k, double eps,
                                 const PeelConfig& cfg) {
    auto sampler = unrolled_sampler(x0, a, k);
    PeelConfig step_cfg = cfg;
    step_cfg.eps = eps;
    const auto t0 = std::chrono::steady_clock::now();
    PeelResult pr = peel_construct(*sampler, a.blocks, step_cfg);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    HInverseResult res;
    res.trace.rows.push_back({0, std::numeric_limits<double>::quiet_NaN(), eps, pr.stats.total, dt});
    res.X = std::move(pr.matrix);
    res.trace.final_residual = residual_norm(a, res.X);
    res.trace.converged = res.trace.final_residual <= eps;
    return res;
}

} // namespace h2
