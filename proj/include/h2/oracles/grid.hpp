#pragma once
//
// h2 : uniform grids with point-set export
//

#include "h2/point_set.hpp"

namespace h2::oracles {

struct Grid1D {
    double a = -1.0, b = 1.0;
    Index  nodes = 0;

    Grid1D(double a_, double b_, Index n) : a(a_), b(b_), nodes(n) {
        if (n < 4) throw std::invalid_argument("grid: need at least 4 nodes");
    }
    double h() const { return (b - a) / double(nodes - 1); }
    double x(Index i) const { return a + h() * double(i); }

    PointSet points() const {
        Matrix c(nodes, 1);
        for (Index i = 0; i < nodes; ++i) c(i, 0) = x(i);
        return PointSet(std::move(c));
    }
};

// n x n interior nodes of the unit square, spacing h = 1/(n+1)
struct Grid2D {
    Index interior = 0;

    explicit Grid2D(Index n) : interior(n) {
        if (n < 4) throw std::invalid_argument("grid: need at least 4 nodes per side");
    }
    Index  n() const { return interior * interior; }
    double h() const { return 1.0 / double(interior + 1); }
    Index  index(Index i, Index j) const { return (j - 1) * interior + (i - 1); }   // i, j in 1..interior

    PointSet points() const {
        Matrix c(n(), 2);
        for (Index j = 1; j <= interior; ++j)
            for (Index i = 1; i <= interior; ++i) {
                c(index(i, j), 0) = h() * double(i);
                c(index(i, j), 1) = h() * double(j);
            }
        return PointSet(std::move(c));
    }
};

// tridiagonal LU without pivoting, reused across many solves
class TridiagSolver {
public:
    TridiagSolver() = default;
    TridiagSolver(Vector lower, Vector diag, Vector upper)
        : lower_(std::move(lower)), diag_(std::move(diag)), upper_(std::move(upper)) {
        const Index n = diag_.size();
        mult_.resize(n);
        dfac_ = diag_;
        mult_[0] = 0;
        for (Index i = 1; i < n; ++i) {
            mult_[i] = lower_[i] / dfac_[i - 1];
            dfac_[i] = diag_[i] - mult_[i] * upper_[i - 1];
            if (dfac_[i] == 0) throw std::runtime_error("tridiagonal solve: singular matrix");
        }
    }

    // in-place solve for a block of right-hand sides
    void solve_in_place(Matrix& y) const {
        const Index n = dfac_.size();
        for (Index i = 1; i < n; ++i) y.row(i) -= mult_[i] * y.row(i - 1);
        y.row(n - 1) /= dfac_[n - 1];
        for (Index i = n - 2; i >= 0; --i)
            y.row(i) = (y.row(i) - upper_[i] * y.row(i + 1)) / dfac_[i];
    }

    Matrix solve(Matrix y) const {
        solve_in_place(y);
        return y;
    }

private:
    Vector lower_, diag_, upper_, mult_, dfac_;
};

} // namespace h2::oracles
