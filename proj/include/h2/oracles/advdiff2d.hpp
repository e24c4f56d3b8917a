#pragma once
//
// h2 : source inversion in stationary advection-diffusion
//
// -div(kappa grad u) + v . grad u + c u = m on the unit square with
// v = (x1, x2), Dirichlet on the inflow (left/bottom) and Neumann on the
// outflow (right/top) boundaries; first-order upwind finite differences.
// The misfit Hessian of the linear source inversion is parameter independent:
// H = (1/sigma^2) C^T A^{-T} B^T B A^{-1} C with mass-lumped C = h^2 I and B
// sampling at the observation nodes. One application costs one forward and
// one adjoint solve against the cached sparse factorization.
//

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "h2/linear_operator.hpp"
#include "h2/oracles/grid.hpp"

namespace h2::oracles {

struct AdvDiff2DConfig {
    Index    grid = 32;             // unknowns per side
    double   kappa = 1e-3;
    double   reaction = 0.5;        // c
    Index    num_observations = 100;
    double   noise_rel = 0.01;      // sigma = noise_rel * peak observed reference value
    uint64_t obs_seed = 7;
};

class AdvDiff2D {
public:
    using Sparse = Eigen::SparseMatrix<double>;

    explicit AdvDiff2D(AdvDiff2DConfig cfg = {}) : cfg_(cfg), grid_(cfg.grid) {
        if (cfg_.kappa <= 0) throw std::invalid_argument("advdiff: kappa must be positive");
        assemble();
        pick_observations();
        calibrate_noise();
    }

    Index n() const { return grid_.n(); }
    const AdvDiff2DConfig& config() const { return cfg_; }
    PointSet points() const { return grid_.points(); }
    double sigma() const { return sigma_; }
    const std::vector<Index>& observation_nodes() const { return obs_; }
    long solves() const { return solves_; }

    // forward solve u = A^{-1} (h^2 m)
    Matrix solve_state(const Matrix& m) const {
        ++solves_;
        return lu_.solve((h2_ * m).eval());
    }

    Matrix misfit_hessvec(const Matrix& nu) const {
        if (nu.rows() != n()) throw std::invalid_argument("advdiff hessvec: dimension mismatch");
        Matrix y = lu_.solve((h2_ * nu).eval());
        ++solves_;
        Matrix by = Matrix::Zero(n(), nu.cols());
        for (Index r = 0; r < Index(obs_.size()); ++r) by.row(obs_[r]) = y.row(obs_[r]);
        Matrix z = lu_t_.solve((by / (sigma_ * sigma_)).eval());
        ++solves_;
        return h2_ * z;
    }

    std::shared_ptr<LinearOperator> hessian_operator() const {
        return make_operator(n(), true, [this](const Matrix& x) { return misfit_hessvec(x); });
    }

private:
    void assemble() {
        const Index g = grid_.interior;
        const double h = grid_.h();
        h2_ = h * h;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(size_t(5 * n()));
        auto at = [&](Index i, Index j) { return grid_.index(i, j); };
        for (Index j = 1; j <= g; ++j)
            for (Index i = 1; i <= g; ++i) {
                const Index row = at(i, j);
                const double v1 = h * double(i);   // advection field (x1, x2)
                const double v2 = h * double(j);
                double diag = 4.0 * cfg_.kappa / (h * h) + (v1 + v2) / h + cfg_.reaction;
                // diffusion neighbours; Dirichlet at i-1 = 0 / j-1 = 0 drops,
                // Neumann ghost at i+1 = g+1 / j+1 = g+1 folds into the diagonal
                if (i > 1) trip.emplace_back(int(row), int(at(i - 1, j)),
                                             -cfg_.kappa / (h * h) - v1 / h);
                else { /* Dirichlet: no entry */ }
                if (i < g) trip.emplace_back(int(row), int(at(i + 1, j)), -cfg_.kappa / (h * h));
                else diag -= cfg_.kappa / (h * h);
                if (j > 1) trip.emplace_back(int(row), int(at(i, j - 1)),
                                             -cfg_.kappa / (h * h) - v2 / h);
                if (j < g) trip.emplace_back(int(row), int(at(i, j + 1)), -cfg_.kappa / (h * h));
                else diag -= cfg_.kappa / (h * h);
                trip.emplace_back(int(row), int(row), diag);
            }
        a_.resize(n(), n());
        a_.setFromTriplets(trip.begin(), trip.end());
        a_.makeCompressed();
        lu_.compute(a_);
        if (lu_.info() != Eigen::Success)
            throw std::runtime_error("advdiff: forward operator factorization failed");
        at_ = Sparse(a_.transpose());
        lu_t_.compute(at_);
        if (lu_t_.info() != Eigen::Success)
            throw std::runtime_error("advdiff: adjoint operator factorization failed");
    }

    void pick_observations() {
        const Index g = grid_.interior;
        std::vector<Index> interior;
        for (Index j = 2; j < g; ++j)
            for (Index i = 2; i < g; ++i) interior.push_back(grid_.index(i, j));
        if (cfg_.num_observations > Index(interior.size()))
            throw std::invalid_argument("advdiff: more observations than interior nodes");
        std::mt19937_64 rng(cfg_.obs_seed);
        std::shuffle(interior.begin(), interior.end(), rng);
        obs_.assign(interior.begin(), interior.begin() + cfg_.num_observations);
        std::sort(obs_.begin(), obs_.end());
    }

    void calibrate_noise() {
        // reference Gaussian source; sigma = 1% of its peak observed response
        const Index g = grid_.interior;
        const double h = grid_.h();
        Matrix m_true(n(), 1);
        for (Index j = 1; j <= g; ++j)
            for (Index i = 1; i <= g; ++i) {
                const double dx = h * double(i) - 0.35, dy = h * double(j) - 0.7;
                m_true(grid_.index(i, j), 0) = std::exp(-(dx * dx + dy * dy) / (2 * 0.08 * 0.08));
            }
        Matrix u = lu_.solve((h2_ * m_true).eval());
        double peak = 0;
        for (Index node : obs_) peak = std::max(peak, std::abs(u(node, 0)));
        sigma_ = std::max(cfg_.noise_rel * peak, 1e-12);
    }

    AdvDiff2DConfig cfg_;
    Grid2D grid_;
    Sparse a_, at_;
    Eigen::SparseLU<Sparse> lu_, lu_t_;
    std::vector<Index> obs_;
    double sigma_ = 1.0, h2_ = 0;
    mutable long solves_ = 0;
};

} // namespace h2::oracles
