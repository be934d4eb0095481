#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "attnalign/matrix.hpp"
#include "attnalign/rpe_bias.hpp"
#include "attnalign/softmax_stats.hpp"

namespace attnalign {

struct EncoderConfig {
    int num_layers = 2;
    int num_heads = 4;
    int d_model = 64;
    int d_kv = 16;
    int d_ff = 256;
    int vocab_size = 256;
    std::uint64_t seed = 0;

    // Throws ConfigError unless all dimensions are >= 1 and
    // d_model == num_heads * d_kv.
    void validate() const;
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;      // d_model x d_model
    Matrix ffn_w1;              // d_model x d_ff
    Matrix ffn_w2;              // d_ff x d_model
    std::vector<double> attn_norm_gain; // d_model
    std::vector<double> ffn_norm_gain;  // d_model
};

struct EncoderWeights {
    EncoderConfig config;
    Matrix token_embedding;             // vocab_size x d_model
    std::vector<LayerWeights> layers;
    std::vector<BucketTable> rel_bias;  // one table per head, shared by all layers

    void validate() const;
};

// Deterministic weights from config.seed. Projections are zero-mean normal
// with scale 1/sqrt(fan_in); bucket tables zero-mean unit scale; norm gains 1.
EncoderWeights init_encoder(const EncoderConfig& config);

// Everything recorded during one forward pass. row_stats always holds one
// entry per softmax row in (layer, head, row) order; raw logit rows are kept
// only when requested since they cost R*H*L*L doubles.
struct ForwardTrace {
    std::size_t length = 0;
    std::vector<AttentionStats> row_stats;
    std::vector<std::vector<double>> logit_rows;
    Matrix hidden_states; // length x d_model

    double mean_p_max() const;
    double mean_entropy() const;
};

// Called once per pre-softmax logit row, in (layer, head, row) order.
using LogitRowSink =
    std::function<void(std::span<const double> row, int layer, int head, std::size_t row_idx)>;

// Self-attention encoder pass: logits = Q K^T + relative bias (no 1/sqrt(d_kv)
// scaling, the same per-head bias at every layer), softmax at the single
// global temperature tau, RMS-norm + ReLU feed-forward blocks with residuals.
// Throws DomainError for tau <= 0 or out-of-vocabulary ids, ShapeError for an
// empty token sequence.
ForwardTrace forward(const EncoderWeights& weights, std::span<const int> tokens, double tau,
                     bool record_rows = false);

// forward() with a streaming consumer for the raw rows.
ForwardTrace forward_with_sink(const EncoderWeights& weights, std::span<const int> tokens,
                               double tau, bool record_rows, const LogitRowSink* sink);

// Streams every pre-softmax row of every sequence in deterministic
// (sequence, layer, head, row) order.
using SequenceRowSink = std::function<void(std::span<const double> row, std::size_t sequence,
                                           int layer, int head, std::size_t row_idx)>;
void collect_logit_rows(const EncoderWeights& weights,
                        std::span<const std::vector<int>> sequences, double tau,
                        const SequenceRowSink& sink);

// Materializing convenience for small inputs.
std::vector<std::vector<double>> collect_logit_rows(const EncoderWeights& weights,
                                                    std::span<const std::vector<int>> sequences,
                                                    double tau);

} // namespace attnalign
