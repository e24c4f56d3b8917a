#pragma once
//
// h2 : minimal surface area functional on the unit square
//
// J(m) = sum over cells of h^2 sqrt(1 + gx^2 + gy^2) with forward-difference
// cell gradients; the boundary height is fixed to a sinusoidal rim. The
// Hessian is the exact second derivative (the linearized nonlinear Poisson
// operator), assembled sparse; at a flat surface it reduces to the standard
// five-point Laplacian.
//

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "h2/linear_operator.hpp"
#include "h2/oracles/grid.hpp"

namespace h2::oracles {

class MinimalSurface {
public:
    using Sparse = Eigen::SparseMatrix<double>;

    explicit MinimalSurface(Index interior, double rim_amplitude = 0.5)
        : grid_(interior), rim_(rim_amplitude) {
        const Index nn = grid_.interior + 2;
        boundary_ = Matrix::Zero(nn, nn);
        // rim value 0.5 sin(2 pi s), s = arc length along the perimeter / 4
        auto rim_at = [&](double s) { return rim_ * std::sin(2 * M_PI * s); };
        const double hh = grid_.h();
        for (Index i = 0; i < nn; ++i) {
            const double x = hh * double(i);
            boundary_(i, 0) = rim_at(x / 4.0);
            boundary_(i, nn - 1) = rim_at((2.0 + (1.0 - x)) / 4.0);
        }
        for (Index j = 0; j < nn; ++j) {
            const double y = hh * double(j);
            boundary_(nn - 1, j) = rim_at((1.0 + y) / 4.0);
            boundary_(0, j) = rim_at((3.0 + (1.0 - y)) / 4.0);
        }
    }

    Index n() const { return grid_.n(); }
    const Grid2D& grid() const { return grid_; }
    PointSet points() const { return grid_.points(); }

    // replace the rim by arbitrary boundary data
    void set_boundary(const std::function<double(double, double)>& f) {
        const Index nn = grid_.interior + 2;
        const double h = grid_.h();
        for (Index i = 0; i < nn; ++i) {
            boundary_(i, 0) = f(h * double(i), 0.0);
            boundary_(i, nn - 1) = f(h * double(i), 1.0);
            boundary_(0, i) = f(0.0, h * double(i));
            boundary_(nn - 1, i) = f(1.0, h * double(i));
        }
    }

    // full nodal field with the rim applied and the interior unknowns filled in
    Matrix full_field(const Vector& m_int) const {
        const Index nn = grid_.interior + 2;
        Matrix f = boundary_;
        for (Index j = 1; j <= grid_.interior; ++j)
            for (Index i = 1; i <= grid_.interior; ++i) f(i, j) = m_int[grid_.index(i, j)];
        return f;
    }

    double value(const Vector& m_int) const {
        const Matrix f = full_field(m_int);
        const double h = grid_.h();
        double j = 0;
        for (Index cy = 0; cy + 1 < f.cols(); ++cy)
            for (Index cx = 0; cx + 1 < f.rows(); ++cx) {
                const double gx = (f(cx + 1, cy) - f(cx, cy)) / h;
                const double gy = (f(cx, cy + 1) - f(cx, cy)) / h;
                j += h * h * std::sqrt(1.0 + gx * gx + gy * gy);
            }
        return j;
    }

    Vector gradient(const Vector& m_int) const {
        const Matrix f = full_field(m_int);
        const double h = grid_.h();
        const Index nn = f.rows();
        Matrix g = Matrix::Zero(nn, nn);
        for (Index cy = 0; cy + 1 < nn; ++cy)
            for (Index cx = 0; cx + 1 < nn; ++cx) {
                const double gx = (f(cx + 1, cy) - f(cx, cy)) / h;
                const double gy = (f(cx, cy + 1) - f(cx, cy)) / h;
                const double r = h / std::sqrt(1.0 + gx * gx + gy * gy);   // h^2 * (1/f) / h
                g(cx + 1, cy) += r * gx;
                g(cx, cy) -= r * (gx + gy);
                g(cx, cy + 1) += r * gy;
            }
        Vector out(n());
        for (Index j = 1; j <= grid_.interior; ++j)
            for (Index i = 1; i <= grid_.interior; ++i) out[grid_.index(i, j)] = g(i, j);
        return out;
    }

    // exact sparse Hessian with respect to the interior unknowns
    Sparse hessian(const Vector& m_int) const {
        const Matrix f = full_field(m_int);
        const double h = grid_.h();
        const Index nn = f.rows();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(size_t(9 * n()));
        auto interior_index = [&](Index i, Index j) -> Index {
            if (i < 1 || i > grid_.interior || j < 1 || j > grid_.interior) return -1;
            return grid_.index(i, j);
        };
        for (Index cy = 0; cy + 1 < nn; ++cy)
            for (Index cx = 0; cx + 1 < nn; ++cx) {
                const double gx = (f(cx + 1, cy) - f(cx, cy)) / h;
                const double gy = (f(cx, cy + 1) - f(cx, cy)) / h;
                const double f2 = 1.0 + gx * gx + gy * gy;
                const double fr = std::sqrt(f2);
                // d2/dg2 of sqrt(1+|g|^2): (f^2 I - g g^T) / f^3
                const double wxx = (f2 - gx * gx) / (f2 * fr);
                const double wyy = (f2 - gy * gy) / (f2 * fr);
                const double wxy = -gx * gy / (f2 * fr);
                // stencil nodes: 0 = (cx,cy), 1 = (cx+1,cy), 2 = (cx,cy+1)
                const Index id[3] = {interior_index(cx, cy), interior_index(cx + 1, cy),
                                     interior_index(cx, cy + 1)};
                // gx = (m1 - m0)/h, gy = (m2 - m0)/h
                const double gxd[3] = {-1.0 / h, 1.0 / h, 0.0};
                const double gyd[3] = {-1.0 / h, 0.0, 1.0 / h};
                for (int a = 0; a < 3; ++a) {
                    if (id[a] < 0) continue;
                    for (int b = 0; b < 3; ++b) {
                        if (id[b] < 0) continue;
                        const double v = h * h *
                            (wxx * gxd[a] * gxd[b] + wyy * gyd[a] * gyd[b] +
                             wxy * (gxd[a] * gyd[b] + gyd[a] * gxd[b]));
                        if (v != 0.0) trip.emplace_back(int(id[a]), int(id[b]), v);
                    }
                }
            }
        Sparse hess(n(), n());
        hess.setFromTriplets(trip.begin(), trip.end());
        return hess;
    }

    // interior field after a number of damped Newton steps from a flat start;
    // step 0 is the initial surface of the first optimization iteration
    Vector newton_state(int steps) const {
        Vector m = Vector::Zero(n());
        for (int it = 0; it < steps; ++it) {
            Vector g = gradient(m);
            Sparse hess = hessian(m);
            Eigen::SimplicialLLT<Sparse> llt(hess);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("minimal surface: Hessian factorization failed");
            Vector dir = llt.solve(g);
            double alpha = 1.0;
            const double j0 = value(m);
            while (alpha > 1e-6 && value(m - alpha * dir) >= j0) alpha /= 2;
            m -= alpha * dir;
        }
        return m;
    }

    std::shared_ptr<LinearOperator> hessian_operator(const Vector& m_int) const {
        auto hess = std::make_shared<Sparse>(hessian(m_int));
        return make_operator(n(), true,
                             [hess](const Matrix& x) -> Matrix { return (*hess) * x; });
    }

private:
    Grid2D grid_;
    double rim_;
    Matrix boundary_;
};

} // namespace h2::oracles
