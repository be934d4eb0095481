#include "attnalign/matrix.hpp"

#include <cstdint>

#include "attnalign/errors.hpp"

namespace attnalign {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions disagree");
    if (out.rows != a.rows || out.cols != b.cols)
        out = Matrix(a.rows, b.cols);

    const std::int64_t m = static_cast<std::int64_t>(a.rows);
    const std::size_t k = a.cols;
    const std::size_t n = b.cols;

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a.row(static_cast<std::size_t>(i));
        double* orow = out.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < n; ++j)
            orow[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.row(p);
            for (std::size_t j = 0; j < n; ++j)
                orow[j] += av * brow[j];
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    matmul(a, b, out);
    return out;
}

void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_transb: inner dimensions disagree");
    if (out.rows != a.rows || out.cols != b.rows)
        out = Matrix(a.rows, b.rows);

    const std::int64_t m = static_cast<std::int64_t>(a.rows);
    const std::size_t k = a.cols;
    const std::size_t n = b.rows;

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a.row(static_cast<std::size_t>(i));
        double* orow = out.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += arow[p] * brow[p];
            orow[j] = acc;
        }
    }
}

} // namespace attnalign
