#include "attnalign/reference.hpp"

#include <cmath>
#include <string>

#include "attnalign/errors.hpp"
#include "attnalign/rpe_bias.hpp"

namespace attnalign::ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("ref::matmul: inner dimensions disagree");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t p = 0; p < a.cols; ++p) {
            const double av = a(i, p);
            for (std::size_t j = 0; j < b.cols; ++j)
                out(i, j) += av * b(p, j);
        }
    return out;
}

std::vector<double> softmax_row(std::span<const double> logits, double tau) {
    if (tau <= 0.0)
        throw DomainError("ref::softmax_row: temperature must be > 0");
    if (logits.empty())
        throw ShapeError("ref::softmax_row: empty row");
    std::vector<double> scaled(logits.size());
    double mx = logits[0] / tau;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        scaled[i] = logits[i] / tau;
        if (scaled[i] > mx)
            mx = scaled[i];
    }
    double sum = 0.0;
    for (double& s : scaled) {
        s = std::exp(s - mx);
        sum += s;
    }
    for (double& s : scaled)
        s /= sum;
    return scaled;
}

static AttentionStats row_stats(const std::vector<double>& probs) {
    AttentionStats st;
    st.length = probs.size();
    for (double p : probs) {
        if (p > st.p_max)
            st.p_max = p;
        if (p > 0.0)
            st.entropy -= p * std::log(p);
    }
    if (st.entropy < 0.0)
        st.entropy = 0.0;
    return st;
}

AttentionStats batch_row_stats_mean(const std::vector<std::vector<double>>& rows, double tau) {
    AttentionStats mean;
    for (const std::vector<double>& r : rows) {
        const AttentionStats st = row_stats(softmax_row(r, tau));
        mean.p_max += st.p_max;
        mean.entropy += st.entropy;
        mean.length = st.length;
    }
    mean.p_max /= static_cast<double>(rows.size());
    mean.entropy /= static_cast<double>(rows.size());
    return mean;
}

static std::vector<double> rms_norm_row(const double* x, const std::vector<double>& gain,
                                        std::size_t n) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        ss += x[j] * x[j];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + 1e-6);
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j)
        out[j] = x[j] * inv * gain[j];
    return out;
}

ForwardTrace forward(const EncoderWeights& weights, std::span<const int> tokens, double tau,
                     bool record_rows) {
    weights.validate();
    if (tau <= 0.0)
        throw DomainError("ref::forward: temperature must be > 0");
    if (tokens.empty())
        throw ShapeError("ref::forward: empty token sequence");
    for (int t : tokens)
        if (t < 0 || t >= weights.config.vocab_size)
            throw DomainError("ref::forward: token id " + std::to_string(t) +
                              " outside vocabulary");

    const EncoderConfig& cfg = weights.config;
    const std::size_t len = tokens.size();
    const std::size_t dm = static_cast<std::size_t>(cfg.d_model);
    const std::size_t dkv = static_cast<std::size_t>(cfg.d_kv);

    ForwardTrace trace;
    trace.length = len;

    std::vector<Matrix> bias(static_cast<std::size_t>(cfg.num_heads));
    for (int h = 0; h < cfg.num_heads; ++h)
        bias[static_cast<std::size_t>(h)] =
            build_bias_matrix(weights.rel_bias[static_cast<std::size_t>(h)], len);

    Matrix hidden(len, dm);
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < dm; ++j)
            hidden(i, j) = weights.token_embedding(static_cast<std::size_t>(tokens[i]), j);

    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        const LayerWeights& lw = weights.layers[static_cast<std::size_t>(layer)];

        Matrix normed(len, dm);
        for (std::size_t i = 0; i < len; ++i) {
            const std::vector<double> r = rms_norm_row(hidden.row(i), lw.attn_norm_gain, dm);
            for (std::size_t j = 0; j < dm; ++j)
                normed(i, j) = r[j];
        }
        const Matrix q = ref::matmul(normed, lw.wq);
        const Matrix k = ref::matmul(normed, lw.wk);
        const Matrix v = ref::matmul(normed, lw.wv);

        Matrix attn(len, dm);
        for (int head = 0; head < cfg.num_heads; ++head) {
            const std::size_t hoff = static_cast<std::size_t>(head) * dkv;
            for (std::size_t m = 0; m < len; ++m) {
                std::vector<double> logits(len);
                for (std::size_t n = 0; n < len; ++n) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dkv; ++c)
                        acc += q(m, hoff + c) * k(n, hoff + c);
                    logits[n] = acc + bias[static_cast<std::size_t>(head)](m, n);
                }
                if (record_rows)
                    trace.logit_rows.push_back(logits);
                const std::vector<double> probs = softmax_row(logits, tau);
                trace.row_stats.push_back(row_stats(probs));
                for (std::size_t n = 0; n < len; ++n)
                    for (std::size_t c = 0; c < dkv; ++c)
                        attn(m, hoff + c) += probs[n] * v(n, hoff + c);
            }
        }

        const Matrix proj = ref::matmul(attn, lw.wo);
        for (std::size_t i = 0; i < hidden.data.size(); ++i)
            hidden.data[i] += proj.data[i];

        for (std::size_t i = 0; i < len; ++i) {
            const std::vector<double> r = rms_norm_row(hidden.row(i), lw.ffn_norm_gain, dm);
            for (std::size_t j = 0; j < dm; ++j)
                normed(i, j) = r[j];
        }
        Matrix ffn = ref::matmul(normed, lw.ffn_w1);
        for (double& x : ffn.data)
            x = x > 0.0 ? x : 0.0;
        const Matrix ffn_out = ref::matmul(ffn, lw.ffn_w2);
        for (std::size_t i = 0; i < hidden.data.size(); ++i)
            hidden.data[i] += ffn_out.data[i];
    }

    trace.hidden_states = std::move(hidden);
    return trace;
}

} // namespace attnalign::ref
