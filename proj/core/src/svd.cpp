#include "tlora/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tlora/errors.hpp"

namespace tlora {

namespace {

// Rotations are skipped once a column pair is orthogonal to this relative
// level; the factors then satisfy the 1e-10 orthonormality contract with
// plenty of margin.
constexpr double kPairTol = 1e-15;

double col_dot(const Matrix& a, std::size_t p, std::size_t q) {
    const std::size_t n = a.rows(), m = a.cols();
    const double* d = a.data();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += d[i * m + p] * d[i * m + q];
    return s;
}

void rotate_cols(Matrix& a, std::size_t p, std::size_t q, double c, double s) {
    const std::size_t n = a.rows(), m = a.cols();
    double* d = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double ap = d[i * m + p];
        const double aq = d[i * m + q];
        d[i * m + p] = c * ap - s * aq;
        d[i * m + q] = s * ap + c * aq;
    }
}

// Fills any zero columns of u (rank-deficient input) with canonical basis
// vectors orthogonalized against the existing columns, so U keeps
// orthonormal columns even for e.g. the zero matrix.
void complete_orthonormal_basis(Matrix& u, const std::vector<bool>& needs_fill) {
    const std::size_t n = u.rows(), k = u.cols();
    for (std::size_t j = 0; j < k; ++j) {
        if (!needs_fill[j]) continue;
        bool filled = false;
        for (std::size_t cand = 0; cand < n && !filled; ++cand) {
            std::vector<double> v(n, 0.0);
            v[cand] = 1.0;
            for (std::size_t c = 0; c < k; ++c) {
                if (c == j || (needs_fill[c] && c > j)) continue;
                double proj = 0.0;
                for (std::size_t i = 0; i < n; ++i) proj += v[i] * u(i, c);
                for (std::size_t i = 0; i < n; ++i) v[i] -= proj * u(i, c);
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (std::size_t i = 0; i < n; ++i) u(i, j) = v[i] / norm;
                filled = true;
            }
        }
        if (!filled) {
            throw NumericalError("svd: failed to complete orthonormal basis");
        }
    }
}

}  // namespace

Matrix SVDFactors::reconstruct() const {
    Matrix us = U;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= S[j];
    return matmul(us, Vt);
}

SVDFactors svd(const Matrix& w) {
    if (w.empty()) throw std::invalid_argument("svd: empty matrix");
    if (!w.all_finite()) throw std::invalid_argument("svd: non-finite entries");

    // Work on a tall matrix; a wide input is handled through its transpose.
    if (w.rows() < w.cols()) {
        SVDFactors f = svd(transpose(w));
        return {transpose(f.Vt), std::move(f.S), transpose(f.U)};
    }

    const std::size_t n = w.rows(), m = w.cols();
    Matrix a = w;
    Matrix v = Matrix::identity(m);
    const double wnorm = frobenius_norm(w);

    if (wnorm > 0.0) {
        // One-sided Jacobi: orthogonalize column pairs of A, accumulating
        // the right rotations in V. Convergence is measured by the
        // off-diagonal Frobenius mass of the implicit Gram matrix A^T A,
        // which is quadratic in the data, hence the ||W||_F^2 scaling.
        const double off_tol = 1e-12 * wnorm * wnorm;
        const std::size_t max_sweeps = 100 * m;
        bool converged = false;
        for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
            double off2 = 0.0;
            bool rotated = false;
            for (std::size_t p = 0; p + 1 < m; ++p) {
                for (std::size_t q = p + 1; q < m; ++q) {
                    const double alpha = col_dot(a, p, p);
                    const double beta = col_dot(a, q, q);
                    const double gamma = col_dot(a, p, q);
                    off2 += gamma * gamma;
                    if (std::abs(gamma) <= kPairTol * std::sqrt(alpha * beta)) continue;
                    const double zeta = (beta - alpha) / (2.0 * gamma);
                    const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                     (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                    const double c = 1.0 / std::sqrt(1.0 + t * t);
                    rotate_cols(a, p, q, c, c * t);
                    rotate_cols(v, p, q, c, c * t);
                    rotated = true;
                }
            }
            converged = !rotated || std::sqrt(off2) <= off_tol;
        }
        if (!converged) {
            throw SvdConvergenceError("svd: no convergence after " +
                                      std::to_string(max_sweeps) + " sweeps");
        }
    }

    // Singular values are the column norms; columns normalize into U.
    std::vector<double> sigma(m);
    for (std::size_t j = 0; j < m; ++j) {
        double s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) s2 += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(s2);
    }

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SVDFactors f;
    f.U = Matrix(n, m);
    f.S.resize(m);
    f.Vt = Matrix(m, m);
    std::vector<bool> needs_fill(m, false);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t src = order[j];
        f.S[j] = sigma[src];
        if (sigma[src] > 0.0) {
            for (std::size_t i = 0; i < n; ++i) f.U(i, j) = a(i, src) / sigma[src];
        } else {
            needs_fill[j] = true;
        }
        for (std::size_t i = 0; i < m; ++i) f.Vt(j, i) = v(i, src);
    }
    if (std::find(needs_fill.begin(), needs_fill.end(), true) != needs_fill.end()) {
        complete_orthonormal_basis(f.U, needs_fill);
    }
    return f;
}

int effective_rank(std::span<const double> singular_values, double fraction) {
    if (singular_values.empty()) throw std::invalid_argument("effective_rank: empty spectrum");
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("effective_rank: fraction must be in (0, 1]");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < singular_values.size(); ++i) {
        const double s = singular_values[i];
        if (s < 0.0 || !std::isfinite(s)) {
            throw std::invalid_argument("effective_rank: values must be finite and >= 0");
        }
        if (i > 0 && s > singular_values[i - 1]) {
            throw std::invalid_argument("effective_rank: values must be non-increasing");
        }
        total += s;
    }
    if (total == 0.0) throw UndefinedRankError("effective_rank: all-zero spectrum");

    const double threshold = fraction * total;
    double cumulative = 0.0;
    for (std::size_t k = 0; k < singular_values.size(); ++k) {
        cumulative += singular_values[k];
        if (cumulative >= threshold) return static_cast<int>(k + 1);
    }
    return static_cast<int>(singular_values.size());
}

double orthogonality_error(const Matrix& a, OrthoMode mode) {
    const Matrix gram = (mode == OrthoMode::Rows) ? matmul_abt(a, a) : matmul_atb(a, a);
    double err = 0.0;
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        for (std::size_t j = 0; j < gram.cols(); ++j) {
            const double d = gram(i, j) - (i == j ? 1.0 : 0.0);
            err += d * d;
        }
    }
    return err;
}

}  // namespace tlora
