#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "attnalign/encoder.hpp"

namespace attnalign {

enum class AlignmentMode { max_prob, entropy };

const char* to_string(AlignmentMode mode);

// Temperature grid searched during calibration, largest first.
inline constexpr std::array<double, 11> kTauGrid = {1.00, 0.95, 0.90, 0.85, 0.80, 0.75,
                                                    0.70, 0.65, 0.60, 0.55, 0.50};

// Anything that can replay its pre-softmax logit rows under a global
// temperature and report the average row statistic. The encoder is the real
// source; synthetic sources back the analytic cross-checks.
class LogitSource {
public:
    virtual ~LogitSource() = default;
    virtual std::size_t length() const = 0;
    virtual double mean_stat(double tau, AlignmentMode mode) const = 0;
};

// Frozen encoder + a fixed set of equal-length sequences. Statistics pool
// over all rows of all layers, heads and sequences.
class EncoderLogitSource : public LogitSource {
public:
    EncoderLogitSource(const EncoderWeights& weights, std::vector<std::vector<int>> sequences);

    std::size_t length() const override { return length_; }
    double mean_stat(double tau, AlignmentMode mode) const override;

private:
    const EncoderWeights& weights_;
    std::vector<std::vector<int>> sequences_;
    std::size_t length_;
};

// i.i.d. N(0, sigma^2) logit rows, regenerated identically per call from the
// seed. With pinned_max set, entry 0 of every row is replaced by that value,
// which realizes the fixed-largest-logit assumption of the closed-form
// max-prob solver.
class GaussianLogitSource : public LogitSource {
public:
    GaussianLogitSource(std::size_t length, std::size_t n_rows, double sigma,
                        std::uint64_t seed, std::optional<double> pinned_max = std::nullopt);

    std::size_t length() const override { return length_; }
    double mean_stat(double tau, AlignmentMode mode) const override;

private:
    std::size_t length_;
    std::size_t n_rows_;
    double sigma_;
    std::uint64_t seed_;
    std::optional<double> pinned_max_;
};

// Average over all softmax rows of p_max (max-prob mode) or entropy (entropy
// mode) with every softmax run at temperature tau.
double find_s(const LogitSource& source, double tau, AlignmentMode mode);

struct CalibrationOptions {
    // After the grid winner is found, also evaluate the midpoints to its
    // neighbors and keep the best of the three.
    bool refine = false;
};

struct CalibrationResult {
    double tau_ex = 1.0;
    AlignmentMode mode = AlignmentMode::max_prob;
    double target_stat = 0.0;   // S̄ at the short length, tau = 1
    double achieved_stat = 0.0; // S̄ at the long length, tau = tau_ex
    std::vector<std::pair<double, double>> grid; // (tau, stat) as evaluated
    std::size_t l_tr = 0;
    std::size_t l_ex = 0;
};

// Grid search: tau_ex = argmin_tau |S̄_ex(tau) - S̄_tr(1)| over kTauGrid,
// ties broken toward larger tau. Requires long.length() > short.length().
// Verifies on every run that the grid statistic is monotone in tau.
CalibrationResult calibrate(const LogitSource& short_source, const LogitSource& long_source,
                            AlignmentMode mode, const CalibrationOptions& options = {});

// Length-only baseline tau = log_{l_ex}(l_tr) = ln(l_tr) / ln(l_ex).
// Throws DomainError for lengths < 2.
double log_baseline_tau(std::size_t l_tr, std::size_t l_ex);

} // namespace attnalign
