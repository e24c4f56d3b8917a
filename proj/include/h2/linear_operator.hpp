#pragma once
//
// h2 : black-box linear operators
//
// The only access the randomized constructor has to an operator is
// "apply to a block of vectors". Every application is counted in columns;
// that counter is the primary cost metric of the whole library.
//

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>

#include "h2/h2_matrix.hpp"

namespace h2 {

class LinearOperator {
public:
    LinearOperator(Index n, bool symmetric) : n_(n), symmetric_(symmetric) {}
    virtual ~LinearOperator() = default;

    Index dim() const { return n_; }
    bool  symmetric() const { return symmetric_; }

    Matrix apply(const Matrix& x) const {
        if (x.rows() != n_) throw std::invalid_argument("operator apply: dimension mismatch");
        cols_applied_ += x.cols();
        return apply_impl(x);
    }

    Matrix apply_transpose(const Matrix& x) const {
        if (x.rows() != n_) throw std::invalid_argument("operator apply: dimension mismatch");
        cols_applied_ += x.cols();
        if (symmetric_ && !has_transpose()) return apply_impl(x);
        return apply_transpose_impl(x);
    }

    long columns_applied() const { return cols_applied_; }
    void reset_counter() const { cols_applied_ = 0; }

protected:
    virtual Matrix apply_impl(const Matrix& x) const = 0;
    virtual Matrix apply_transpose_impl(const Matrix&) const {
        throw std::logic_error("operator: transpose application not available");
    }
    virtual bool has_transpose() const { return false; }

private:
    Index n_;
    bool  symmetric_;
    mutable long cols_applied_ = 0;
};

namespace detail {

class FunctionOperator final : public LinearOperator {
public:
    using Fn = std::function<Matrix(const Matrix&)>;

    FunctionOperator(Index n, bool symmetric, Fn fwd, Fn trans = nullptr)
        : LinearOperator(n, symmetric), fwd_(std::move(fwd)), trans_(std::move(trans)) {}

protected:
    Matrix apply_impl(const Matrix& x) const override { return fwd_(x); }
    Matrix apply_transpose_impl(const Matrix& x) const override {
        if (!trans_) return LinearOperator::apply_transpose_impl(x);
        return trans_(x);
    }
    bool has_transpose() const override { return bool(trans_); }

private:
    Fn fwd_, trans_;
};

} // namespace detail

inline std::shared_ptr<LinearOperator> make_operator(Index n, bool symmetric,
                                                     std::function<Matrix(const Matrix&)> fwd,
                                                     std::function<Matrix(const Matrix&)> trans = nullptr) {
    return std::make_shared<detail::FunctionOperator>(n, symmetric, std::move(fwd), std::move(trans));
}

class DenseOperator final : public LinearOperator {
public:
    explicit DenseOperator(Matrix a, bool symmetric = false)
        : LinearOperator(a.rows(), symmetric), a_(std::move(a)) {
        if (a_.rows() != a_.cols()) throw std::invalid_argument("dense operator: square only");
    }
    const Matrix& matrix() const { return a_; }

protected:
    Matrix apply_impl(const Matrix& x) const override { return a_ * x; }
    Matrix apply_transpose_impl(const Matrix& x) const override { return a_.transpose() * x; }
    bool has_transpose() const override { return true; }

private:
    Matrix a_;
};

// view of an H2Matrix as a black-box operator (user ordering)
class H2Operator final : public LinearOperator {
public:
    explicit H2Operator(const H2Matrix& h) : LinearOperator(h.n(), h.symmetric), h_(&h) {}

protected:
    Matrix apply_impl(const Matrix& x) const override { return h_->matvec(x); }
    Matrix apply_transpose_impl(const Matrix& x) const override { return h_->matvec_transpose(x); }
    bool has_transpose() const override { return true; }

private:
    const H2Matrix* h_;
};

// ---- iterative p-norm estimation -------------------------------------------

struct NormEstimate {
    double value = 0;
    int    iterations = 0;
};

// p = 2: power iteration on op^T op, stopped when two successive estimates
// agree to 2 significant digits. p = 1 or inf: the classic few-iteration dual
// estimator. All variants return lower-bound-style estimates.
inline NormEstimate pnorm_estimate(const LinearOperator& op, double p, int max_iter = 100,
                                   double tol = 5e-3) {
    const Index n = op.dim();
    if (p == 2.0) {
        // block power iteration on op^T op; the small block rides out
        // clustered top singular values that stall the single-vector method
        const Index b = std::min<Index>(3, n);
        std::mt19937_64 rng(0x9E3779B97F4A7C15ull);
        std::normal_distribution<double> g(0, 1);
        Matrix v(n, b);
        for (Index j = 0; j < b; ++j)
            for (Index i = 0; i < n; ++i) v(i, j) = g(rng);
        v = Eigen::HouseholderQR<Matrix>(v).householderQ() * Matrix::Identity(n, b);
        double est = 0, prev = -1;
        int it = 0;
        while (it < max_iter) {
            ++it;
            Matrix y = op.apply(v);
            est = Eigen::JacobiSVD<Matrix>(y).singularValues()(0);
            if (est == 0) return {0.0, it};
            if (prev > 0 && std::abs(est - prev) < tol * est) break;
            prev = est;
            Matrix z = op.apply_transpose(y);
            v = Eigen::HouseholderQR<Matrix>(z).householderQ() * Matrix::Identity(n, b);
        }
        return {est, it};
    }
    if (p != 1.0 && !std::isinf(p))
        throw std::invalid_argument("pnorm_estimate: p must be 1, 2 or inf");
    const bool want_inf = std::isinf(p);
    // Hager's estimator for the 1-norm; the inf-norm is the 1-norm of the
    // transpose
    auto fwd = [&](const Matrix& x) { return want_inf ? op.apply_transpose(x) : op.apply(x); };
    auto bwd = [&](const Matrix& x) { return want_inf ? op.apply(x) : op.apply_transpose(x); };
    Vector x = Vector::Constant(n, 1.0 / double(n));
    double est = 0;
    int it = 0;
    while (it < std::min(max_iter, 8)) {
        ++it;
        Vector y = fwd(x);
        est = y.lpNorm<1>();
        Vector xi(n);
        for (Index i = 0; i < n; ++i) xi[i] = y[i] >= 0 ? 1.0 : -1.0;
        Vector z = bwd(xi);
        Index j;
        double zmax = z.cwiseAbs().maxCoeff(&j);
        if (zmax <= z.dot(x)) break;
        x.setZero();
        x[j] = 1.0;
    }
    return {est, it};
}

inline NormEstimate pnorm_estimate_inf(const LinearOperator& op) {
    return pnorm_estimate(op, std::numeric_limits<double>::infinity());
}

} // namespace h2
