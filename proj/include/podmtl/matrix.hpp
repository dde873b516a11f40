#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "podmtl/errors.hpp"

namespace podmtl {

/// Dense row-major matrix of 64-bit reals. The only tensor type in the
/// library; vectors are n-by-1 or 1-by-n matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(const std::vector<double>& values);
    static Matrix column_vector(const std::vector<double>& values);
    static Matrix scalar(double v);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    bool all_finite() const;
    /// Throws data_error naming `what` if any entry is NaN or infinite.
    void require_finite(const char* what) const;

    double l2_norm() const;
    double abs_max() const;

    bool operator==(const Matrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Plain (untracked) kernels. The gradient tape records these same kernels
// together with their backward passes.

/// C = A * B. Throws shape_error naming both shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A * B^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// C = A^T * B.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
/// Adds a 1-by-d row to every row of an n-by-d matrix.
Matrix add_row_broadcast(const Matrix& x, const Matrix& bias);

Matrix relu(const Matrix& x);
/// Elementwise numerically stable logistic; outputs strictly inside (0, 1).
Matrix sigmoid(const Matrix& x);
double sigmoid_scalar(double x);

void accumulate(Matrix& into, const Matrix& delta);

}  // namespace podmtl
