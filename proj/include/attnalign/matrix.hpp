#pragma once

#include <cstddef>
#include <vector>

namespace attnalign {

// Dense row-major double matrix. Plain storage, no expression templates.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// out = a * b. OpenMP over rows of a; each output row is produced by exactly
// one thread so the result is identical for any thread count.
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
Matrix matmul(const Matrix& a, const Matrix& b);

// out = a * b^T.
void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out);

} // namespace attnalign
