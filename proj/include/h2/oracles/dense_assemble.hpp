#pragma once
//
// h2 : dense assembly of a black-box operator (oracle support)
//

#include "h2/linear_operator.hpp"

namespace h2::oracles {

// exact columns of the operator from identity blocks; desk scale only
inline Matrix dense_assemble(const LinearOperator& op, Index cap = 4096, Index block = 64) {
    const Index n = op.dim();
    if (n > cap) throw std::invalid_argument("dense_assemble: operator size exceeds cap");
    Matrix a(n, n);
    for (Index at = 0; at < n; at += block) {
        const Index w = std::min(block, n - at);
        Matrix e = Matrix::Zero(n, w);
        for (Index j = 0; j < w; ++j) e(at + j, j) = 1.0;
        a.middleCols(at, w) = op.apply(e);
    }
    return a;
}

} // namespace h2::oracles
