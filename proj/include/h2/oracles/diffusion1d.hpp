#pragma once
//
// h2 : density inversion in 1D time-dependent diffusion
//
// rho(x) u_t - u_xx = delta(x - x_s) W(t - t_0) on [-1, 1], extended outside
// with rho = 1 so the far Dirichlet ends are harmless. Linear elements with a
// lumped rho-weighted mass matrix, trapezoidal (Crank-Nicolson) time
// stepping. Gradient and Hessian-vector products are exact derivatives of the
// fully discrete objective via discrete adjoints, so central-difference
// checks hold to the order of the differencing itself and the misfit Hessian
// at the data-generating density is symmetric positive semidefinite.
//
// One Hessian application costs two marches (incremental state + incremental
// adjoint) per source.
//

#include "h2/linear_operator.hpp"
#include "h2/oracles/grid.hpp"
#include "h2/oracles/ricker.hpp"

namespace h2::oracles {

// exact second variation of the smoothed total-variation functional
// alpha * sum_el h * sqrt(((m_{i+1}-m_i)/h)^2 + beta) applied to nu
inline Vector tv_hessvec(const Vector& m, double alpha, double beta, const Vector& nu,
                         double spacing) {
    if (beta <= 0) throw std::invalid_argument("tv_hessvec: beta must be positive");
    const Index n = m.size();
    Vector out = Vector::Zero(n);
    for (Index i = 0; i + 1 < n; ++i) {
        const double g = (m[i + 1] - m[i]) / spacing;
        const double w = alpha * beta / (spacing * std::pow(g * g + beta, 1.5));
        const double d = nu[i + 1] - nu[i];
        out[i] -= w * d;
        out[i + 1] += w * d;
    }
    return out;
}

inline Vector tv_gradient(const Vector& m, double alpha, double beta, double spacing) {
    if (beta <= 0) throw std::invalid_argument("tv_gradient: beta must be positive");
    const Index n = m.size();
    Vector out = Vector::Zero(n);
    for (Index i = 0; i + 1 < n; ++i) {
        const double g = (m[i + 1] - m[i]) / spacing;
        const double w = alpha * g / std::sqrt(g * g + beta);
        out[i] -= w;
        out[i + 1] += w;
    }
    return out;
}

inline double tv_value(const Vector& m, double alpha, double beta, double spacing) {
    double s = 0;
    for (Index i = 0; i + 1 < m.size(); ++i) {
        const double g = (m[i + 1] - m[i]) / spacing;
        s += spacing * std::sqrt(g * g + beta);
    }
    return alpha * s;
}

struct Diffusion1DConfig {
    Index  n = 512;              // parameter nodes on [-1, 1]
    double pad = 0.5;            // extension length per side, rho = 1 outside
    double final_time = 30.0;
    Index  steps = 512;
    double t_p = 1.0;            // Ricker width; the wavelet peaks at 1.4 t_p
    double t_0 = 0.0;
    double source_amplitude = 1000.0;
    double alpha = 3e-5, beta = 1e-3;
    std::vector<double> source_positions{-0.5, 0.0, 0.5};
    Index  num_receivers = 8;
};

class Diffusion1D {
public:
    explicit Diffusion1D(Diffusion1DConfig cfg = {}) : cfg_(std::move(cfg)) {
        if (cfg_.n < 8) throw std::invalid_argument("diffusion1d: n too small");
        h_    = 2.0 / double(cfg_.n - 1);
        npad_ = std::max<Index>(Index(std::lround(cfg_.pad / h_)), 2);
        // extended nodes 0 .. next-1; the two extreme nodes carry the far
        // Dirichlet condition and are eliminated
        const Index next = cfg_.n + 2 * npad_;
        nstate_ = next - 2;
        dt_ = cfg_.final_time / double(cfg_.steps);

        auto state_index = [&](Index physical_node) { return npad_ + physical_node - 1; };
        for (double xs : cfg_.source_positions) src_state_.push_back(state_index(nearest_node(xs)));
        for (Index r = 0; r < cfg_.num_receivers; ++r) {
            const double xr = -0.875 + 1.75 * double(r) / double(cfg_.num_receivers - 1);
            rcv_state_.push_back(state_index(nearest_node(xr)));
        }

        rho_target_ = Vector(cfg_.n);
        for (Index i = 0; i < cfg_.n; ++i) {
            const double x = -1.0 + h_ * double(i);
            rho_target_[i] = x < -1.0 / 3.0 ? 1.0 : (x <= 1.0 / 3.0 ? 2.5 : 1.2);
        }

        // synthesize noise-free data from the target density, then cache the
        // state/adjoint fields of the evaluation point (the same density)
        setup_evaluation(rho_target_);
        data_.resize(num_sources());
        for (Index s = 0; s < num_sources(); ++s) {
            data_[s] = Matrix::Zero(cfg_.steps + 1, num_receivers());
            for (Index j = 0; j <= cfg_.steps; ++j)
                for (Index r = 0; r < num_receivers(); ++r)
                    data_[s](j, r) = state_[s](rcv_state_[r], j);
        }
        // with exact data the adjoint fields vanish identically
        adjoint_.assign(num_sources(), Matrix::Zero(nstate_, cfg_.steps + 1));
    }

    Index  n() const { return cfg_.n; }
    double spacing() const { return h_; }
    double dt() const { return dt_; }
    Index  num_sources() const { return Index(src_state_.size()); }
    Index  num_receivers() const { return Index(rcv_state_.size()); }
    const Vector& rho_target() const { return rho_target_; }
    const Diffusion1DConfig& config() const { return cfg_; }
    long   pde_solves() const { return marches_; }

    PointSet points() const { return Grid1D(-1, 1, cfg_.n).points(); }

    // ---- objective, gradient, Hessian at an arbitrary density ----------------

    // state field of one source: nstate x (steps + 1) space-time values
    Matrix state_field(const Vector& rho, Index source) const {
        return march_states(rho)[source];
    }

    double misfit(const Vector& rho) const {
        auto fields = march_states(rho);
        double j = 0;
        for (Index s = 0; s < num_sources(); ++s)
            for (Index step = 0; step <= cfg_.steps; ++step)
                for (Index r = 0; r < num_receivers(); ++r) {
                    const double e = fields[s](rcv_state_[r], step) - data_[s](step, r);
                    j += 0.5 * quad_weight(step) * e * e;
                }
        return j;
    }

    double objective(const Vector& rho) const {
        return misfit(rho) + tv_value(rho, cfg_.alpha, cfg_.beta, h_);
    }

    Vector gradient(const Vector& rho) const {
        auto states = march_states(rho);
        auto adjoints = march_adjoints(rho, states);
        Vector g = tv_gradient(rho, cfg_.alpha, cfg_.beta, h_);
        const double c = h_ / dt_;
        for (Index s = 0; s < num_sources(); ++s)
            for (Index k = 0; k < cfg_.n; ++k) {
                const Index sk = npad_ + k - 1;
                double acc = 0;
                for (Index j = 0; j < cfg_.steps; ++j)
                    acc += adjoints[s](sk, j + 1) * (states[s](sk, j + 1) - states[s](sk, j));
                g[k] += c * acc;
            }
        return g;
    }

    // full Hessian (misfit + TV) applied to a block of perturbations
    Matrix hessvec(const Vector& rho, const Matrix& nu) const {
        auto states = march_states(rho);
        auto adjoints = march_adjoints(rho, states);
        return hessvec_with_fields(rho, nu, states, adjoints, true);
    }

    // evaluation-point operators (density = target, adjoints = 0, data exact)

    Matrix hessvec_at_target(const Matrix& nu, bool include_tv) const {
        return hessvec_with_fields(rho_target_, nu, state_, adjoint_, include_tv);
    }

    std::shared_ptr<LinearOperator> hessian_operator(bool include_tv = true) const {
        return make_operator(cfg_.n, true, [this, include_tv](const Matrix& x) {
            return hessvec_at_target(x, include_tv);
        });
    }

private:
    Index nearest_node(double x) const {
        return std::clamp<Index>(Index(std::lround((x + 1.0) / h_)), 0, cfg_.n - 1);
    }

    double quad_weight(Index step) const {
        return (step == 0 || step == cfg_.steps) ? dt_ / 2 : dt_;
    }

    Vector extended_rho(const Vector& rho) const {
        Vector re = Vector::Ones(nstate_);
        for (Index k = 0; k < cfg_.n; ++k) re[npad_ + k - 1] = rho[k];
        return re;
    }

    struct Stepper {
        TridiagSolver plus;               // A+ = M/dt + K/2
        Vector minus_diag;                // A- = M/dt - K/2, tridiagonal
        double minus_off = 0;

        Matrix apply_minus(const Matrix& x) const {
            Matrix y = minus_diag.asDiagonal() * x;
            const Index n = x.rows();
            y.topRows(n - 1) += minus_off * x.bottomRows(n - 1);
            y.bottomRows(n - 1) += minus_off * x.topRows(n - 1);
            return y;
        }
    };

    Stepper make_stepper(const Vector& rho) const {
        Vector re = extended_rho(rho);
        if (re.minCoeff() <= 0)
            throw std::invalid_argument("diffusion1d: density must be positive");
        Vector diag_p(nstate_), lower(nstate_), upper(nstate_);
        const double koff = -1.0 / h_, kdiag = 2.0 / h_;
        for (Index i = 0; i < nstate_; ++i) {
            const double m = h_ * re[i] / dt_;
            diag_p[i] = m + kdiag / 2;
        }
        lower.setConstant(koff / 2);
        upper.setConstant(koff / 2);
        Stepper st;
        st.plus = TridiagSolver(lower, diag_p, upper);
        st.minus_diag = Vector(nstate_);
        for (Index i = 0; i < nstate_; ++i) st.minus_diag[i] = h_ * re[i] / dt_ - kdiag / 2;
        st.minus_off = -koff / 2;
        return st;
    }

    double source_value(double t) const {
        return cfg_.source_amplitude * ricker(t - cfg_.t_0, cfg_.t_p);
    }

    // forward march for every source; returns nstate x (steps+1) fields
    std::vector<Matrix> march_states(const Vector& rho) const {
        Stepper st = make_stepper(rho);
        std::vector<Matrix> fields;
        for (Index s = 0; s < num_sources(); ++s) {
            Matrix u = Matrix::Zero(nstate_, cfg_.steps + 1);
            Matrix cur = Matrix::Zero(nstate_, 1);
            for (Index j = 0; j < cfg_.steps; ++j) {
                Matrix rhs = st.apply_minus(cur);
                rhs(src_state_[s], 0) +=
                    0.5 * (source_value(dt_ * double(j)) + source_value(dt_ * double(j + 1)));
                st.plus.solve_in_place(rhs);
                cur = rhs;
                u.col(j + 1) = cur.col(0);
            }
            fields.push_back(std::move(u));
            ++marches_;
        }
        return fields;
    }

    std::vector<Matrix> march_adjoints(const Vector& rho, const std::vector<Matrix>& states) const {
        Stepper st = make_stepper(rho);
        std::vector<Matrix> fields;
        for (Index s = 0; s < num_sources(); ++s) {
            Matrix p = Matrix::Zero(nstate_, cfg_.steps + 1);
            Matrix cur = Matrix::Zero(nstate_, 1);
            for (Index j = cfg_.steps; j >= 1; --j) {
                Matrix rhs = j == cfg_.steps ? Matrix(Matrix::Zero(nstate_, 1))
                                             : st.apply_minus(cur);
                for (Index r = 0; r < num_receivers(); ++r)
                    rhs(rcv_state_[r], 0) -= quad_weight(j) *
                        (states[s](rcv_state_[r], j) - data_[s](j, r));
                st.plus.solve_in_place(rhs);
                cur = rhs;
                p.col(j) = cur.col(0);
            }
            fields.push_back(std::move(p));
            ++marches_;
        }
        return fields;
    }

    Matrix hessvec_with_fields(const Vector& rho, const Matrix& nu,
                               const std::vector<Matrix>& states,
                               const std::vector<Matrix>& adjoints, bool include_tv) const {
        if (nu.rows() != cfg_.n) throw std::invalid_argument("hessvec: dimension mismatch");
        const Index b = nu.cols();
        Stepper st = make_stepper(rho);
        const double c = h_ / dt_;
        // perturbation scattered to state nodes
        Matrix nu_state = Matrix::Zero(nstate_, b);
        for (Index k = 0; k < cfg_.n; ++k) nu_state.row(npad_ + k - 1) = nu.row(k);

        Matrix out = Matrix::Zero(cfg_.n, b);
        for (Index s = 0; s < num_sources(); ++s) {
            const Matrix& u = states[s];
            const Matrix& p = adjoints[s];

            // incremental state, forward; accumulate the p * dv term on the
            // fly and keep receiver traces for the incremental adjoint
            Matrix v = Matrix::Zero(nstate_, b);
            Matrix v_rcv = Matrix::Zero((cfg_.steps + 1) * num_receivers(), b);
            Matrix acc_p = Matrix::Zero(cfg_.n, b);
            for (Index j = 0; j < cfg_.steps; ++j) {
                Matrix rhs = st.apply_minus(v);
                rhs -= c * (nu_state.array().colwise() *
                            (u.col(j + 1) - u.col(j)).array()).matrix();
                st.plus.solve_in_place(rhs);
                // dv = rhs - v
                for (Index k = 0; k < cfg_.n; ++k) {
                    const Index sk = npad_ + k - 1;
                    acc_p.row(k) += p(sk, j + 1) * (rhs.row(sk) - v.row(sk));
                }
                v = std::move(rhs);
                for (Index r = 0; r < num_receivers(); ++r)
                    v_rcv.row((j + 1) * num_receivers() + r) = v.row(rcv_state_[r]);
            }
            ++marches_;

            // incremental adjoint, backward; accumulate the q * du term
            Matrix q = Matrix::Zero(nstate_, b);
            Matrix acc_q = Matrix::Zero(cfg_.n, b);
            for (Index j = cfg_.steps; j >= 1; --j) {
                Matrix rhs = j == cfg_.steps ? Matrix(Matrix::Zero(nstate_, b))
                                             : st.apply_minus(q);
                rhs += c * (nu_state.array().colwise() *
                            (p.col(std::min(j + 1, cfg_.steps)) * double(j < cfg_.steps) -
                             p.col(j)).array()).matrix();
                for (Index r = 0; r < num_receivers(); ++r)
                    rhs.row(rcv_state_[r]) -= quad_weight(j) * v_rcv.row(j * num_receivers() + r);
                st.plus.solve_in_place(rhs);
                q = std::move(rhs);
                for (Index k = 0; k < cfg_.n; ++k) {
                    const Index sk = npad_ + k - 1;
                    acc_q.row(k) += q.row(sk) * (u(sk, j) - u(sk, j - 1));
                }
            }
            ++marches_;

            out += c * (acc_p + acc_q);
        }
        if (include_tv)
            for (Index col = 0; col < b; ++col)
                out.col(col) += tv_hessvec(rho, cfg_.alpha, cfg_.beta, nu.col(col), h_);
        return out;
    }

    Diffusion1DConfig cfg_;
    Index npad_ = 0, nstate_ = 0;
    double h_ = 0, dt_ = 0;
    std::vector<Index> src_state_, rcv_state_;
    Vector rho_target_;
    std::vector<Matrix> data_;
    std::vector<Matrix> state_, adjoint_;   // cached fields at the target density
    mutable long marches_ = 0;

    void setup_evaluation(const Vector& rho) { state_ = march_states(rho); }
};

} // namespace h2::oracles
