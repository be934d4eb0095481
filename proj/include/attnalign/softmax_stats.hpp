#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace attnalign {

// Probabilities produced by a temperature-scaled softmax.
struct Distribution {
    std::vector<double> probs;
    double temperature = 1.0;
};

// Sharpness statistics of one softmax row. Entropy is in nats.
struct AttentionStats {
    double p_max = 0.0;
    double entropy = 0.0;
    std::size_t length = 0;
};

// softmax_tau(l)[i] = exp(l_i / tau) / sum_j exp(l_j / tau), computed with
// max subtraction. Throws DomainError for tau <= 0 and ShapeError for an
// empty vector.
Distribution softmax_tau(std::span<const double> logits, double tau);

// p_max and entropy (-sum p ln p, with 0 ln 0 := 0) of a distribution.
AttentionStats stats(const Distribution& d);

// In-place kernel used by the encoder's inner loop: overwrites `row` with
// softmax_tau(row) and returns its stats in one pass.
AttentionStats softmax_row_stats_inplace(double* row, std::size_t n, double tau);

// l - mean(l). Softmax is shift invariant, so this never changes the
// distribution.
std::vector<double> zero_mean(std::span<const double> logits);

} // namespace attnalign
