#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnalign/encoder.hpp"

namespace attnalign {

// (sigma, l_max) of a zero-meaned average logit vector.
struct GaussianFit {
    double sigma = 0.0;
    double l_max = 0.0;
    std::size_t length = 0;
    std::string layer = "layer0";
};

struct QQReport {
    // (theoretical standard-normal quantile, empirical quantile), ascending.
    std::vector<std::pair<double, double>> points;
    double linearity = 0.0; // Pearson correlation of the point set
};

// Inverse standard-normal CDF (Acklam's rational approximation plus one
// Halley refinement step; good to ~1e-15 over (0,1)).
double normal_quantile(double p);

// Sorts every row ascending, averages elementwise, zero-means the result.
// Streaming accumulator so encoder-scale row sets never need materializing.
class SortedRowAverager {
public:
    explicit SortedRowAverager(std::size_t length);

    void add(std::span<const double> row);
    std::size_t count() const { return count_; }
    std::vector<double> average() const;

private:
    std::size_t length_;
    std::size_t count_ = 0;
    std::vector<double> acc_;
    std::vector<double> scratch_;
};

std::vector<double> average_logit_vector(const std::vector<std::vector<double>>& rows);

// Average logit vector of one encoder layer's rows (layer = -1 pools all
// layers) over the given sequences at temperature tau.
std::vector<double> layer_average_logit_vector(const EncoderWeights& weights,
                                               std::span<const std::vector<int>> sequences,
                                               double tau = 1.0, int layer = 0);

// sigma = population standard deviation of the de-meaned entries, l_max =
// largest de-meaned entry. Throws ZeroSigmaError on a constant vector and
// ShapeError for fewer than 2 entries.
GaussianFit fit_gaussian(std::span<const double> avg);

// Closed-form estimate together with whether it landed inside the model's
// valid range (p_max <= 1, entropy >= 0). Out-of-range values are returned
// unclamped.
struct ApproxValue {
    double value = 0.0;
    bool in_model = true;
};

// P_max ~= e^{l_max/tau} / (L e^{sigma^2/(2 tau^2)})
ApproxValue approx_pmax(std::size_t length, double sigma, double l_max, double tau);

// H ~= ln L - sigma^2 / (2 tau^2)
ApproxValue approx_entropy(std::size_t length, double sigma, double tau);

// Larger real root of A tau^2 - B tau + C = 0 with
//   A = ln L_ex + ln p_max_tr
//   B = ln L_tr + ln p_max_tr + sigma_tr^2 / 2
//   C = sigma_ex^2 / 2.
// Throws NoRealRootError when the discriminant is negative (callers fall
// back to the empirical grid search) and DegenerateCoefficientError for
// A <= 0.
double solve_tau_maxprob(std::size_t l_tr, std::size_t l_ex, double p_max_tr, double sigma_tr,
                         double sigma_ex);

// tau = sigma_ex / sqrt(sigma_tr^2 + 2 ln(L_ex / L_tr))
double solve_tau_entropy(std::size_t l_tr, std::size_t l_ex, double sigma_tr, double sigma_ex);

// Empirical vs closed-form moments of N(0, sigma^2):
//   E[e^{l/tau}] = e^{sigma^2/(2 tau^2)}   and   E[l e^l] = sigma^2 e^{sigma^2/2}.
struct McExpectationReport {
    double exp_tau_empirical = 0.0;
    double exp_tau_closed = 0.0;
    double exp_tau_rel_err = 0.0;
    double l_exp_empirical = 0.0;
    double l_exp_closed = 0.0;
    double l_exp_rel_err = 0.0;
    std::size_t n_samples = 0;
};

McExpectationReport mc_oracle_expectations(double sigma, double tau, std::size_t n_samples,
                                           std::uint64_t seed);

// Exact-by-simulation softmax moments of i.i.d. N(0, sigma^2) rows: the
// verification side for the approx_* formulas.
struct GaussianSoftmaxMoments {
    double mean_entropy = 0.0;
    double mean_p_max = 0.0;
    double mean_row_max = 0.0; // empirical l_max
    std::size_t replicates = 0;
};

GaussianSoftmaxMoments mc_softmax_moments(std::size_t length, double sigma, double tau,
                                          std::size_t replicates, std::uint64_t seed);

// Standardizes the samples, pairs their order statistics at plotting
// positions (i - 0.5)/n with standard-normal quantiles, and reports the
// Pearson correlation as the linearity score. Needs >= 20 samples; throws
// ZeroSigmaError on constant input.
QQReport qq_check(std::span<const double> samples);

struct TemperatureCurveRow {
    std::size_t l_ex = 0;
    std::optional<double> tau_prop1;
    std::optional<double> tau_prop2;
    std::optional<double> tau_log;
};

// One row per extrapolation-length fit: both closed-form temperatures plus
// the log baseline. Solver failures empty the affected cell instead of
// aborting the table.
std::vector<TemperatureCurveRow> temperature_curve(std::size_t l_tr, const GaussianFit& fit_tr,
                                                   std::span<const GaussianFit> fits_ex,
                                                   double p_max_tr);

} // namespace attnalign
