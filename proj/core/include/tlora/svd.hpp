#pragma once

#include <span>
#include <vector>

#include "tlora/matrix.hpp"

namespace tlora {

// Thin SVD of an n×m matrix: U is n×k with orthonormal columns, S holds the
// k = min(n, m) singular values in non-increasing order, Vt is k×m with
// orthonormal rows, and U * diag(S) * Vt reconstructs the input.
struct SVDFactors {
    Matrix U;
    std::vector<double> S;
    Matrix Vt;

    Matrix reconstruct() const;
};

// One-sided Jacobi SVD. Robust at the sizes used here (<= a few hundred per
// side). Sweeps are capped at 100*min(n,m); exceeding the cap throws
// SvdConvergenceError rather than returning silent garbage.
SVDFactors svd(const Matrix& w);

// Smallest k such that the top-k singular values sum to at least
// fraction * (total sum). Ties resolve to the first index reaching the
// threshold. Throws UndefinedRankError when all values are zero.
int effective_rank(std::span<const double> singular_values, double fraction = 0.95);

enum class OrthoMode { Rows, Cols };

// Squared Frobenius distance from orthonormality:
//   Rows: ||A A^T - I||_F^2,  Cols: ||A^T A - I||_F^2.
double orthogonality_error(const Matrix& a, OrthoMode mode);

}  // namespace tlora
