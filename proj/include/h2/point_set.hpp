#pragma once
//
// h2 : point sets and axis-aligned bounding boxes
//

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "h2/types.hpp"

namespace h2 {

// d-dimensional point cloud, d in {1,2,3}; row i = coordinates of point i.
class PointSet {
public:
    PointSet() = default;
    PointSet(Matrix coords) : coords_(std::move(coords)) {
        if (coords_.rows() < 1)
            throw std::invalid_argument("PointSet: need at least one point");
        if (coords_.cols() < 1 || coords_.cols() > 3)
            throw std::invalid_argument("PointSet: dimension must be 1, 2 or 3");
    }

    Index  size() const { return coords_.rows(); }
    int    dim() const { return static_cast<int>(coords_.cols()); }
    double coord(Index i, int axis) const { return coords_(i, axis); }
    const Matrix& coords() const { return coords_; }

    // text format: first line "n d", then n lines of d reals
    static PointSet read(std::istream& in) {
        Index n = 0;
        int   d = 0;
        if (!(in >> n >> d)) throw io_error(io_error::kind::malformed, "point set: bad header");
        if (n < 1 || d < 1 || d > 3) throw io_error(io_error::kind::malformed, "point set: bad sizes");
        Matrix c(n, d);
        for (Index i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                if (!(in >> c(i, j))) throw io_error(io_error::kind::truncated, "point set: truncated");
        return PointSet(std::move(c));
    }

    static PointSet read_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw io_error(io_error::kind::malformed, "point set: cannot open " + path);
        return read(in);
    }

    void write(std::ostream& out) const {
        out << size() << " " << dim() << "\n";
        out.precision(17);
        for (Index i = 0; i < size(); ++i) {
            for (int j = 0; j < dim(); ++j) out << (j ? " " : "") << coords_(i, j);
            out << "\n";
        }
    }

private:
    Matrix coords_;
};

struct BBox {
    std::array<double, 3> lo{{0, 0, 0}};
    std::array<double, 3> hi{{0, 0, 0}};
    int dim = 0;

    double extent(int axis) const { return hi[axis] - lo[axis]; }

    double diameter() const {
        double s = 0;
        for (int a = 0; a < dim; ++a) s += extent(a) * extent(a);
        return std::sqrt(s);
    }

    // Euclidean distance between boxes (0 if they touch or overlap)
    double distance(const BBox& other) const {
        double s = 0;
        for (int a = 0; a < dim; ++a) {
            double gap = std::max({0.0, other.lo[a] - hi[a], lo[a] - other.hi[a]});
            s += gap * gap;
        }
        return std::sqrt(s);
    }

    bool contains(const PointSet& pts, Index i, double tol = 0.0) const {
        for (int a = 0; a < dim; ++a) {
            double x = pts.coord(i, a);
            if (x < lo[a] - tol || x > hi[a] + tol) return false;
        }
        return true;
    }

    int longest_axis() const {
        int    best = 0;
        double len  = extent(0);
        for (int a = 1; a < dim; ++a)
            if (extent(a) > len) { len = extent(a); best = a; }
        return best;
    }
};

} // namespace h2
