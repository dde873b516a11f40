#pragma once

// Shared helpers for the unit suites: independent oracles and small
// generators. Everything here stays implementation-independent of the
// library paths it checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "podmtl/matrix.hpp"
#include "podmtl/rng.hpp"

namespace testutil {

/// Brute-force triple-loop matrix product.
inline podmtl::Matrix matmul_oracle(const podmtl::Matrix& a, const podmtl::Matrix& b) {
    podmtl::Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    }
    return c;
}

inline podmtl::Matrix random_matrix(podmtl::Rng& rng, std::size_t r, std::size_t c,
                                    double scale = 1.0) {
    podmtl::Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = scale * rng.normal();
    return m;
}

/// Central finite differences of a scalar function with respect to one
/// coordinate of a parameter buffer.
inline double central_difference(const std::function<double()>& f, double& coord,
                                 double h = 1e-5) {
    const double saved = coord;
    coord = saved + h;
    const double up = f();
    coord = saved - h;
    const double down = f();
    coord = saved;
    return (up - down) / (2.0 * h);
}

/// Relative error with a floor to keep near-zero gradients meaningful under
/// finite-difference noise.
inline double rel_err(double got, double want, double floor_at = 1e-6) {
    return std::fabs(got - want) / std::max(std::fabs(want), floor_at);
}

}  // namespace testutil
