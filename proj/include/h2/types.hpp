#pragma once
//
// h2 : common scalar and matrix types
//

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace h2 {

using Index  = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Which index space a block of vectors lives in. Public APIs speak user
// ordering; construction internals work in the cluster-tree ordering.
enum class Ordering { user, internal };

struct VectorBlock {
    Matrix   data;                      // n x b, b >= 1
    Ordering ordering = Ordering::user;

    Index rows() const { return data.rows(); }
    Index cols() const { return data.cols(); }
};

class io_error : public std::runtime_error {
public:
    enum class kind { bad_magic, truncated, version_mismatch, malformed };

    io_error(kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
    kind error_kind() const { return kind_; }

private:
    kind kind_;
};

} // namespace h2
