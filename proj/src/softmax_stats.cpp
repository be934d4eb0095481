#include "attnalign/softmax_stats.hpp"

#include <cmath>

#include "attnalign/errors.hpp"

namespace attnalign {

AttentionStats softmax_row_stats_inplace(double* row, std::size_t n, double tau) {
    if (tau <= 0.0)
        throw DomainError("softmax temperature must be > 0");
    if (n == 0)
        throw ShapeError("softmax of an empty vector");

    double mx = row[0] / tau;
    for (std::size_t i = 0; i < n; ++i) {
        row[i] /= tau;
        if (row[i] > mx)
            mx = row[i];
    }

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
    }

    const double inv = 1.0 / sum;
    double p_max = 0.0;
    double entropy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = row[i] * inv;
        row[i] = p;
        if (p > p_max)
            p_max = p;
        if (p > 0.0)
            entropy -= p * std::log(p);
    }
    if (entropy < 0.0) // -0.0 from rounding in the one-hot limit
        entropy = 0.0;
    return AttentionStats{p_max, entropy, n};
}

Distribution softmax_tau(std::span<const double> logits, double tau) {
    Distribution d;
    d.temperature = tau;
    d.probs.assign(logits.begin(), logits.end());
    if (tau <= 0.0)
        throw DomainError("softmax temperature must be > 0");
    if (d.probs.empty())
        throw ShapeError("softmax of an empty vector");
    softmax_row_stats_inplace(d.probs.data(), d.probs.size(), tau);
    return d;
}

AttentionStats stats(const Distribution& d) {
    double p_max = 0.0;
    double entropy = 0.0;
    for (double p : d.probs) {
        if (p > p_max)
            p_max = p;
        if (p > 0.0)
            entropy -= p * std::log(p);
    }
    if (entropy < 0.0)
        entropy = 0.0;
    return AttentionStats{p_max, entropy, d.probs.size()};
}

std::vector<double> zero_mean(std::span<const double> logits) {
    if (logits.empty())
        throw ShapeError("zero_mean of an empty vector");
    double mean = 0.0;
    for (double v : logits)
        mean += v;
    mean /= static_cast<double>(logits.size());

    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        out[i] = logits[i] - mean;
    return out;
}

} // namespace attnalign
