#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace attnalign {

// Generator vocabulary: token ids 0..255, with 255 reserved as the passkey
// marker so junk text can never contain it.
inline constexpr int kTaskVocab = 256;
inline constexpr int kPasskeyMarker = 255;

enum class TaskKind { passkey, line };

struct SyntheticTask {
    std::vector<int> tokens;
    std::size_t answer_start = 0; // half-open [answer_start, answer_end)
    std::size_t answer_end = 0;
    TaskKind kind = TaskKind::passkey;
    std::uint64_t seed = 0;
};

// Uniform-random junk ids (marker excluded) with marker + passkey inserted at
// a seeded position; the answer span covers the passkey tokens. Passkey ids
// must not collide with the marker.
SyntheticTask gen_passkey(std::span<const int> passkey, std::size_t junk_len,
                          std::uint64_t seed);

// n_lines (key, key, value) token triples with pairwise-distinct 2-token
// keys, followed by a seeded query key; the answer span is the queried value.
SyntheticTask gen_lines(std::size_t n_lines, std::uint64_t seed);

enum class NeedleMode { closed_form, monte_carlo };

// Attention probability of a single needle logit with advantage `gap` over
// `length` junk logits drawn from N(0, sigma^2), at temperature tau.
// closed_form evaluates e^{g/tau} / (e^{g/tau} + L e^{sigma^2/(2 tau^2)});
// monte_carlo softmaxes sampled rows and averages the needle probability.
double needle_pmax(double gap, double sigma, std::size_t length, double tau, NeedleMode mode,
                   std::size_t n_replicates = 10000, std::uint64_t seed = 0);

enum class TauPolicy { fixed_1, prop2_aligned };

// Closed-form needle curves under both temperature policies: tau = 1
// everywhere vs. the entropy-aligned tau from the closed-form solver with
// sigma_tr = sigma_ex = sigma.
struct NeedleCurve {
    double gap = 0.0;
    double junk_sigma = 0.0;
    std::vector<std::size_t> lengths;
    std::vector<double> tau_fixed;   // all 1.0
    std::vector<double> tau_aligned; // prop-2 temperature per length
    std::vector<double> p_fixed;
    std::vector<double> p_aligned;
};

// grid must be non-empty and start at the training length.
NeedleCurve dispersed_attention_demo(double gap, double sigma,
                                     std::span<const std::size_t> length_grid);

// Whether some tau on the calibration grid recovers at least the training
// needle probability at the extrapolated length.
bool correction_achievable(double gap, double sigma, std::size_t l_tr, std::size_t l_ex);

} // namespace attnalign
