#include "tlora/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tlora {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("Matrix: dimensions must be positive");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw std::invalid_argument("from_rows: empty");
    const std::size_t ncols = rows.begin()->size();
    Matrix m(rows.size(), ncols);
    std::size_t i = 0;
    for (const auto& r : rows) {
        if (r.size() != ncols) throw std::invalid_argument("from_rows: ragged rows");
        std::size_t j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.data() + i * m;
        const double* ai = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) shape_error("matmul_abt", a, b);
    Matrix c(a.rows(), b.rows());
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
    return c;
}

Matrix matmul_atb(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) shape_error("matmul_atb", a, b);
    Matrix c(a.cols(), b.cols());
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a.data() + p * n;
        const double* bp = b.data() + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double api = ap[i];
            if (api == 0.0) continue;
            double* ci = c.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("add", a, b);
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("sub", a, b);
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
    return c;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

void add_scaled(Matrix& acc, const Matrix& x, double s) {
    if (!acc.same_shape(x)) shape_error("add_scaled", acc, x);
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += s * x.data()[i];
}

}  // namespace tlora
