#pragma once
//
// h2 : Ricker wavelet source time history
//

#include <cmath>
#include <stdexcept>

namespace h2::oracles {

// W(t) = (a - 1/2) exp(-a), a = (pi (t - t_s) / t_p)^2
inline double ricker(double t, double t_p, double t_s) {
    if (t_p <= 0) throw std::invalid_argument("ricker: t_p must be positive");
    const double u = M_PI * (t - t_s) / t_p;
    const double a = u * u;
    return (a - 0.5) * std::exp(-a);
}

inline double ricker(double t, double t_p) { return ricker(t, t_p, 1.4 * t_p); }

} // namespace h2::oracles
