#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tlora {

// Dense row-major matrix of doubles. The single value type used for
// weights, low-rank factors, activations and sample batches.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    void fill(double v);
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Shape-checked arithmetic. All throw std::invalid_argument on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose (a: n×k, b: m×k -> n×m).
Matrix matmul_abt(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose (a: k×n, b: k×m -> n×m).
Matrix matmul_atb(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
double frobenius_norm(const Matrix& a);
// acc += s * x, in place.
void add_scaled(Matrix& acc, const Matrix& x, double s);

}  // namespace tlora
