#include "attnalign/encoder.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "attnalign/errors.hpp"
#include "attnalign/rng.hpp"

namespace attnalign {
namespace {

constexpr double kNormEps = 1e-6;
constexpr std::size_t kRowBlock = 512; // attention rows materialized at a time

// Stable per-tensor seed streams so adding a tensor never reshuffles others.
enum StreamId : std::uint64_t {
    kStreamEmbedding = 0,
    kStreamBias = 1,        // + head
    kStreamLayerBase = 1000 // + 100 * layer + tensor slot
};

void fill_normal(Matrix& m, std::uint64_t seed, double stddev) {
    Rng rng(seed);
    for (double& v : m.data)
        v = rng.normal(0.0, stddev);
}

// y = x / rms(x) * gain, row-wise.
void rms_norm(const Matrix& x, const std::vector<double>& gain, Matrix& out) {
    const std::int64_t rows = static_cast<std::int64_t>(x.rows);
    const std::size_t cols = x.cols;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* in = x.row(static_cast<std::size_t>(i));
        double* o = out.row(static_cast<std::size_t>(i));
        double ss = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
            ss += in[j] * in[j];
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(cols) + kNormEps);
        for (std::size_t j = 0; j < cols; ++j)
            o[j] = in[j] * inv * gain[j];
    }
}

} // namespace

void EncoderConfig::validate() const {
    if (num_layers < 1 || num_heads < 1 || d_model < 1 || d_kv < 1 || d_ff < 1 ||
        vocab_size < 1)
        throw ConfigError("encoder config: all dimensions must be >= 1");
    if (d_model != num_heads * d_kv)
        throw ConfigError("encoder config: d_model must equal num_heads * d_kv");
}

void EncoderWeights::validate() const {
    config.validate();
    const std::size_t dm = static_cast<std::size_t>(config.d_model);
    if (token_embedding.rows != static_cast<std::size_t>(config.vocab_size) ||
        token_embedding.cols != dm)
        throw ConfigError("encoder weights: embedding shape mismatch");
    if (layers.size() != static_cast<std::size_t>(config.num_layers))
        throw ConfigError("encoder weights: layer count mismatch");
    if (rel_bias.size() != static_cast<std::size_t>(config.num_heads))
        throw ConfigError("encoder weights: one bucket table per head required");
    for (const LayerWeights& l : layers) {
        if (l.wq.rows != dm || l.wq.cols != dm || l.wk.rows != dm || l.wk.cols != dm ||
            l.wv.rows != dm || l.wv.cols != dm || l.wo.rows != dm || l.wo.cols != dm)
            throw ConfigError("encoder weights: projection shape mismatch");
        if (l.ffn_w1.rows != dm || l.ffn_w1.cols != static_cast<std::size_t>(config.d_ff) ||
            l.ffn_w2.rows != static_cast<std::size_t>(config.d_ff) || l.ffn_w2.cols != dm)
            throw ConfigError("encoder weights: feed-forward shape mismatch");
        if (l.attn_norm_gain.size() != dm || l.ffn_norm_gain.size() != dm)
            throw ConfigError("encoder weights: norm gain shape mismatch");
    }
    for (const BucketTable& t : rel_bias)
        t.validate();
}

EncoderWeights init_encoder(const EncoderConfig& config) {
    config.validate();
    EncoderWeights w;
    w.config = config;

    const std::size_t dm = static_cast<std::size_t>(config.d_model);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    const double ff_out_scale = 1.0 / std::sqrt(static_cast<double>(config.d_ff));

    w.token_embedding = Matrix(static_cast<std::size_t>(config.vocab_size), dm);
    fill_normal(w.token_embedding, derive_seed(config.seed, kStreamEmbedding), 1.0);

    w.rel_bias.resize(static_cast<std::size_t>(config.num_heads));
    for (int h = 0; h < config.num_heads; ++h) {
        Rng rng(derive_seed(config.seed, kStreamBias + static_cast<std::uint64_t>(h)));
        w.rel_bias[static_cast<std::size_t>(h)].head_id = h;
        for (double& v : w.rel_bias[static_cast<std::size_t>(h)].values)
            v = rng.normal();
    }

    w.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (int l = 0; l < config.num_layers; ++l) {
        LayerWeights& lw = w.layers[static_cast<std::size_t>(l)];
        const std::uint64_t base = kStreamLayerBase + 100ULL * static_cast<std::uint64_t>(l);
        lw.wq = Matrix(dm, dm);
        lw.wk = Matrix(dm, dm);
        lw.wv = Matrix(dm, dm);
        lw.wo = Matrix(dm, dm);
        lw.ffn_w1 = Matrix(dm, static_cast<std::size_t>(config.d_ff));
        lw.ffn_w2 = Matrix(static_cast<std::size_t>(config.d_ff), dm);
        fill_normal(lw.wq, derive_seed(config.seed, base + 0), proj_scale);
        fill_normal(lw.wk, derive_seed(config.seed, base + 1), proj_scale);
        fill_normal(lw.wv, derive_seed(config.seed, base + 2), proj_scale);
        fill_normal(lw.wo, derive_seed(config.seed, base + 3), proj_scale);
        fill_normal(lw.ffn_w1, derive_seed(config.seed, base + 4), proj_scale);
        fill_normal(lw.ffn_w2, derive_seed(config.seed, base + 5), ff_out_scale);
        lw.attn_norm_gain.assign(dm, 1.0);
        lw.ffn_norm_gain.assign(dm, 1.0);
    }
    return w;
}

double ForwardTrace::mean_p_max() const {
    double s = 0.0;
    for (const AttentionStats& r : row_stats)
        s += r.p_max;
    return s / static_cast<double>(row_stats.size());
}

double ForwardTrace::mean_entropy() const {
    double s = 0.0;
    for (const AttentionStats& r : row_stats)
        s += r.entropy;
    return s / static_cast<double>(row_stats.size());
}

ForwardTrace forward_with_sink(const EncoderWeights& weights, std::span<const int> tokens,
                               double tau, bool record_rows, const LogitRowSink* sink) {
    weights.validate();
    if (tau <= 0.0)
        throw DomainError("forward: temperature must be > 0");
    if (tokens.empty())
        throw ShapeError("forward: empty token sequence");
    for (int t : tokens)
        if (t < 0 || t >= weights.config.vocab_size)
            throw DomainError("forward: token id " + std::to_string(t) + " outside vocabulary");

    const EncoderConfig& cfg = weights.config;
    const std::size_t len = tokens.size();
    const std::size_t dm = static_cast<std::size_t>(cfg.d_model);
    const std::size_t dkv = static_cast<std::size_t>(cfg.d_kv);
    const int heads = cfg.num_heads;

    ForwardTrace trace;
    trace.length = len;
    trace.row_stats.resize(static_cast<std::size_t>(cfg.num_layers) *
                           static_cast<std::size_t>(heads) * len);
    if (record_rows)
        trace.logit_rows.resize(trace.row_stats.size());

    // Relative bias per head, by offset; shared across layers.
    std::vector<std::vector<double>> head_bias(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h)
        head_bias[static_cast<std::size_t>(h)] =
            bias_by_offset(weights.rel_bias[static_cast<std::size_t>(h)], len);

    Matrix hidden(len, dm);
    for (std::size_t i = 0; i < len; ++i) {
        const double* emb = weights.token_embedding.row(static_cast<std::size_t>(tokens[i]));
        double* h = hidden.row(i);
        for (std::size_t j = 0; j < dm; ++j)
            h[j] = emb[j];
    }

    Matrix normed(len, dm), q(len, dm), k(len, dm), v(len, dm), attn(len, dm);
    Matrix proj, ffn_hidden, ffn_out;
    const std::size_t block_rows = std::min(kRowBlock, len);
    Matrix scores(block_rows, len);

    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        const LayerWeights& lw = weights.layers[static_cast<std::size_t>(layer)];

        rms_norm(hidden, lw.attn_norm_gain, normed);
        matmul(normed, lw.wq, q);
        matmul(normed, lw.wk, k);
        matmul(normed, lw.wv, v);

        for (int head = 0; head < heads; ++head) {
            const std::size_t hoff = static_cast<std::size_t>(head) * dkv;
            const std::vector<double>& bias = head_bias[static_cast<std::size_t>(head)];
            const std::size_t stat_base =
                (static_cast<std::size_t>(layer) * static_cast<std::size_t>(heads) +
                 static_cast<std::size_t>(head)) *
                len;

            for (std::size_t row0 = 0; row0 < len; row0 += block_rows) {
                const std::size_t rows_here = std::min(block_rows, len - row0);
                const std::int64_t nrows = static_cast<std::int64_t>(rows_here);

                // scores[m][n] = q_m . k_n + bias[m - n]
#pragma omp parallel for schedule(static)
                for (std::int64_t r = 0; r < nrows; ++r) {
                    const std::size_t m = row0 + static_cast<std::size_t>(r);
                    const double* qm = q.row(m) + hoff;
                    double* srow = scores.row(static_cast<std::size_t>(r));
                    const double* brow = bias.data() + (m + len - 1);
                    for (std::size_t n = 0; n < len; ++n) {
                        const double* kn = k.row(n) + hoff;
                        double acc = 0.0;
                        for (std::size_t c = 0; c < dkv; ++c)
                            acc += qm[c] * kn[c];
                        srow[n] = acc + brow[-static_cast<std::int64_t>(n)];
                    }
                }

                // raw rows leave in order before the in-place softmax
                if (sink != nullptr)
                    for (std::size_t r = 0; r < rows_here; ++r)
                        (*sink)(std::span<const double>(scores.row(r), len), layer, head,
                                row0 + r);
                if (record_rows)
                    for (std::size_t r = 0; r < rows_here; ++r)
                        trace.logit_rows[stat_base + row0 + r]
                            .assign(scores.row(r), scores.row(r) + len);

#pragma omp parallel for schedule(static)
                for (std::int64_t r = 0; r < nrows; ++r)
                    trace.row_stats[stat_base + row0 + static_cast<std::size_t>(r)] =
                        softmax_row_stats_inplace(scores.row(static_cast<std::size_t>(r)), len,
                                                  tau);

                // attn[m, head slice] = sum_n p[m][n] * v[n, head slice]
#pragma omp parallel for schedule(static)
                for (std::int64_t r = 0; r < nrows; ++r) {
                    const std::size_t m = row0 + static_cast<std::size_t>(r);
                    const double* prow = scores.row(static_cast<std::size_t>(r));
                    double* out = attn.row(m) + hoff;
                    for (std::size_t c = 0; c < dkv; ++c)
                        out[c] = 0.0;
                    for (std::size_t n = 0; n < len; ++n) {
                        const double p = prow[n];
                        const double* vn = v.row(n) + hoff;
                        for (std::size_t c = 0; c < dkv; ++c)
                            out[c] += p * vn[c];
                    }
                }
            }
        }

        matmul(attn, lw.wo, proj);
        for (std::size_t i = 0; i < hidden.data.size(); ++i)
            hidden.data[i] += proj.data[i];

        rms_norm(hidden, lw.ffn_norm_gain, normed);
        matmul(normed, lw.ffn_w1, ffn_hidden);
        for (double& x : ffn_hidden.data)
            x = x > 0.0 ? x : 0.0;
        matmul(ffn_hidden, lw.ffn_w2, ffn_out);
        for (std::size_t i = 0; i < hidden.data.size(); ++i)
            hidden.data[i] += ffn_out.data[i];
    }

    trace.hidden_states = std::move(hidden);
    return trace;
}

ForwardTrace forward(const EncoderWeights& weights, std::span<const int> tokens, double tau,
                     bool record_rows) {
    return forward_with_sink(weights, tokens, tau, record_rows, nullptr);
}

void collect_logit_rows(const EncoderWeights& weights,
                        std::span<const std::vector<int>> sequences, double tau,
                        const SequenceRowSink& sink) {
    if (sequences.empty())
        throw ShapeError("collect_logit_rows: no sequences");
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const LogitRowSink per_row = [&](std::span<const double> row, int layer, int head,
                                         std::size_t row_idx) {
            sink(row, s, layer, head, row_idx);
        };
        forward_with_sink(weights, sequences[s], tau, false, &per_row);
    }
}

std::vector<std::vector<double>> collect_logit_rows(const EncoderWeights& weights,
                                                    std::span<const std::vector<int>> sequences,
                                                    double tau) {
    std::vector<std::vector<double>> rows;
    collect_logit_rows(weights, sequences, tau,
                       [&](std::span<const double> row, std::size_t, int, int, std::size_t) {
                           rows.emplace_back(row.begin(), row.end());
                       });
    return rows;
}

} // namespace attnalign
