#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "attnalign/encoder.hpp"
#include "attnalign/matrix.hpp"

// Single-threaded reference implementations of the parallel kernels. Written
// independently of the production path (naive loops, dense bias matrix, no
// row tiling) and kept as the comparison oracle for the test suite and the
// kernel benchmark.
namespace attnalign::ref {

Matrix matmul(const Matrix& a, const Matrix& b);

// Naive max-subtracted softmax of one row.
std::vector<double> softmax_row(std::span<const double> logits, double tau);

// Mean p_max / entropy over a batch of rows, one row at a time.
AttentionStats batch_row_stats_mean(const std::vector<std::vector<double>>& rows, double tau);

// Straight-line serial encoder forward producing the same trace as
// attnalign::forward.
ForwardTrace forward(const EncoderWeights& weights, std::span<const int> tokens, double tau,
                     bool record_rows = false);

} // namespace attnalign::ref
