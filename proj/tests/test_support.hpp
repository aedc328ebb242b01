#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tlora/matrix.hpp"
#include "tlora/rng.hpp"

namespace tlora::testing {

// Classical two-sided Jacobi eigendecomposition of a symmetric matrix.
// Test-only oracle: singular values of W can be cross-checked as the square
// roots of the eigenvalues of W^T W, independently of the library's
// one-sided SVD path.
inline std::vector<double> symmetric_eigenvalues(const Matrix& sym, int max_sweeps = 100) {
    Matrix a = sym;
    const std::size_t n = a.rows();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (std::sqrt(off) < 1e-14 * (1.0 + std::abs(a(0, 0)))) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    return eig;
}

inline Matrix random_matrix(std::size_t n, std::size_t m, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    Matrix out(n, m);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = sd * rng.gaussian();
    return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

}  // namespace tlora::testing
