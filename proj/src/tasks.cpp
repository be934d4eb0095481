#include "attnalign/tasks.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_set>

#include "attnalign/analytic.hpp"
#include "attnalign/calibration.hpp"
#include "attnalign/errors.hpp"
#include "attnalign/rng.hpp"

namespace attnalign {

SyntheticTask gen_passkey(std::span<const int> passkey, std::size_t junk_len,
                          std::uint64_t seed) {
    if (passkey.empty())
        throw ShapeError("gen_passkey: passkey must be non-empty");
    for (int t : passkey)
        if (t < 0 || t >= kPasskeyMarker)
            throw DomainError("gen_passkey: passkey ids must lie in [0, 255)");

    Rng rng(seed);
    SyntheticTask task;
    task.kind = TaskKind::passkey;
    task.seed = seed;
    task.tokens.reserve(junk_len + passkey.size() + 1);

    const std::size_t insert_at = junk_len == 0 ? 0 : rng.uniform_int(junk_len + 1);
    for (std::size_t i = 0; i < junk_len; ++i) {
        if (i == insert_at) {
            task.tokens.push_back(kPasskeyMarker);
            task.tokens.insert(task.tokens.end(), passkey.begin(), passkey.end());
        }
        task.tokens.push_back(static_cast<int>(rng.uniform_int(kPasskeyMarker)));
    }
    if (insert_at >= junk_len) {
        task.tokens.push_back(kPasskeyMarker);
        task.tokens.insert(task.tokens.end(), passkey.begin(), passkey.end());
    }

    const std::size_t marker_pos = insert_at == junk_len ? junk_len : insert_at;
    task.answer_start = marker_pos + 1;
    task.answer_end = task.answer_start + passkey.size();
    return task;
}

SyntheticTask gen_lines(std::size_t n_lines, std::uint64_t seed) {
    if (n_lines < 1)
        throw ShapeError("gen_lines: need at least one line");
    // keys are 2-token pairs over [0, 255), so 255^2 distinct keys exist
    if (n_lines > 60000)
        throw DomainError("gen_lines: too many lines for distinct 2-token keys");

    Rng rng(seed);
    SyntheticTask task;
    task.kind = TaskKind::line;
    task.seed = seed;
    task.tokens.reserve(3 * n_lines + 2);

    std::unordered_set<std::uint32_t> used;
    std::vector<std::pair<int, int>> keys;
    keys.reserve(n_lines);
    while (keys.size() < n_lines) {
        const int hi = static_cast<int>(rng.uniform_int(kPasskeyMarker));
        const int lo = static_cast<int>(rng.uniform_int(kPasskeyMarker));
        const std::uint32_t code = static_cast<std::uint32_t>(hi) * 255u +
                                   static_cast<std::uint32_t>(lo);
        if (used.insert(code).second)
            keys.emplace_back(hi, lo);
    }

    for (std::size_t i = 0; i < n_lines; ++i) {
        task.tokens.push_back(keys[i].first);
        task.tokens.push_back(keys[i].second);
        task.tokens.push_back(static_cast<int>(rng.uniform_int(kPasskeyMarker)));
    }

    const std::size_t query = rng.uniform_int(n_lines);
    task.tokens.push_back(keys[query].first);
    task.tokens.push_back(keys[query].second);
    task.answer_start = 3 * query + 2;
    task.answer_end = task.answer_start + 1;
    return task;
}

double needle_pmax(double gap, double sigma, std::size_t length, double tau, NeedleMode mode,
                   std::size_t n_replicates, std::uint64_t seed) {
    if (length < 1)
        throw ShapeError("needle_pmax: length must be >= 1");
    if (tau <= 0.0 || sigma < 0.0)
        throw DomainError("needle_pmax: need tau > 0 and sigma >= 0");

    if (mode == NeedleMode::closed_form) {
        const double num = std::exp(gap / tau);
        return num / (num + static_cast<double>(length) *
                                std::exp(sigma * sigma / (2.0 * tau * tau)));
    }

    if (n_replicates < 1)
        throw DomainError("needle_pmax: need at least one replicate");

    std::vector<double> per_rep(n_replicates);
    const std::int64_t reps = static_cast<std::int64_t>(n_replicates);

#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < reps; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        // max-subtracted softmax over [gap, junk...]; only the needle's
        // probability is needed
        double mx = gap / tau;
        std::vector<double> junk(length);
        for (double& v : junk) {
            v = rng.normal(0.0, sigma) / tau;
            if (v > mx)
                mx = v;
        }
        double denom = std::exp(gap / tau - mx);
        const double needle = denom;
        for (double v : junk)
            denom += std::exp(v - mx);
        per_rep[static_cast<std::size_t>(r)] = needle / denom;
    }

    double sum = 0.0;
    for (double v : per_rep)
        sum += v;
    return sum / static_cast<double>(n_replicates);
}

NeedleCurve dispersed_attention_demo(double gap, double sigma,
                                     std::span<const std::size_t> length_grid) {
    if (length_grid.empty())
        throw ShapeError("dispersed_attention_demo: empty length grid");
    const std::size_t l_tr = length_grid.front();

    NeedleCurve curve;
    curve.gap = gap;
    curve.junk_sigma = sigma;
    for (const std::size_t len : length_grid) {
        if (len < l_tr)
            throw DomainError("dispersed_attention_demo: grid must start at its shortest length");
        const double tau_aligned =
            sigma > 0.0 ? solve_tau_entropy(l_tr, len, sigma, sigma) : 1.0;
        curve.lengths.push_back(len);
        curve.tau_fixed.push_back(1.0);
        curve.tau_aligned.push_back(tau_aligned);
        curve.p_fixed.push_back(needle_pmax(gap, sigma, len, 1.0, NeedleMode::closed_form));
        curve.p_aligned.push_back(
            needle_pmax(gap, sigma, len, tau_aligned, NeedleMode::closed_form));
    }
    return curve;
}

bool correction_achievable(double gap, double sigma, std::size_t l_tr, std::size_t l_ex) {
    const double target = needle_pmax(gap, sigma, l_tr, 1.0, NeedleMode::closed_form);
    for (double tau : kTauGrid)
        if (needle_pmax(gap, sigma, l_ex, tau, NeedleMode::closed_form) >= target)
            return true;
    return false;
}

} // namespace attnalign
