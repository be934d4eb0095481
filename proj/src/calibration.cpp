#include "attnalign/calibration.hpp"

#include <cmath>
#include <cstdint>

#include "attnalign/errors.hpp"
#include "attnalign/rng.hpp"
#include "attnalign/softmax_stats.hpp"

namespace attnalign {

const char* to_string(AlignmentMode mode) {
    return mode == AlignmentMode::max_prob ? "max_prob" : "entropy";
}

EncoderLogitSource::EncoderLogitSource(const EncoderWeights& weights,
                                       std::vector<std::vector<int>> sequences)
    : weights_(weights), sequences_(std::move(sequences)) {
    if (sequences_.empty())
        throw ShapeError("encoder logit source: no sequences");
    length_ = sequences_.front().size();
    for (const std::vector<int>& s : sequences_)
        if (s.size() != length_)
            throw ShapeError("encoder logit source: sequences must share one length");
    if (length_ == 0)
        throw ShapeError("encoder logit source: empty sequence");
}

double EncoderLogitSource::mean_stat(double tau, AlignmentMode mode) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const std::vector<int>& seq : sequences_) {
        const ForwardTrace trace = forward(weights_, seq, tau);
        for (const AttentionStats& st : trace.row_stats)
            sum += mode == AlignmentMode::max_prob ? st.p_max : st.entropy;
        count += trace.row_stats.size();
    }
    return sum / static_cast<double>(count);
}

GaussianLogitSource::GaussianLogitSource(std::size_t length, std::size_t n_rows, double sigma,
                                         std::uint64_t seed, std::optional<double> pinned_max)
    : length_(length), n_rows_(n_rows), sigma_(sigma), seed_(seed), pinned_max_(pinned_max) {
    if (length_ == 0 || n_rows_ == 0)
        throw ShapeError("gaussian logit source: length and row count must be >= 1");
    if (sigma_ < 0.0)
        throw DomainError("gaussian logit source: sigma must be >= 0");
}

double GaussianLogitSource::mean_stat(double tau, AlignmentMode mode) const {
    // Per-row results land in fixed slots; the reduction below is serial and
    // index-ordered, so the value is independent of the thread count.
    std::vector<double> per_row(n_rows_);
    const std::int64_t rows = static_cast<std::int64_t>(n_rows_);

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i) {
        Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(i)));
        std::vector<double> row(length_);
        for (double& v : row)
            v = rng.normal(0.0, sigma_);
        if (pinned_max_)
            row[0] = *pinned_max_;
        const AttentionStats st = softmax_row_stats_inplace(row.data(), row.size(), tau);
        per_row[static_cast<std::size_t>(i)] =
            mode == AlignmentMode::max_prob ? st.p_max : st.entropy;
    }

    double sum = 0.0;
    for (double v : per_row)
        sum += v;
    return sum / static_cast<double>(n_rows_);
}

double find_s(const LogitSource& source, double tau, AlignmentMode mode) {
    if (tau <= 0.0)
        throw DomainError("find_s: temperature must be > 0");
    return source.mean_stat(tau, mode);
}

namespace {

// Statistic must move monotonically along the descending-tau grid: entropy
// falls with tau, max probability rises.
void check_grid_monotone(const std::vector<std::pair<double, double>>& grid,
                         AlignmentMode mode) {
    constexpr double slack = 1e-12;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double prev = grid[i - 1].second;
        const double cur = grid[i].second;
        const bool ok = mode == AlignmentMode::entropy ? cur <= prev + slack
                                                       : cur >= prev - slack;
        if (!ok)
            throw Error("calibrate: grid statistic is not monotone in tau");
    }
}

} // namespace

CalibrationResult calibrate(const LogitSource& short_source, const LogitSource& long_source,
                            AlignmentMode mode, const CalibrationOptions& options) {
    if (long_source.length() <= short_source.length())
        throw DomainError("calibrate: extrapolation length must exceed training length");

    CalibrationResult result;
    result.mode = mode;
    result.l_tr = short_source.length();
    result.l_ex = long_source.length();
    result.target_stat = find_s(short_source, 1.0, mode);

    std::size_t best = 0;
    double best_gap = 0.0;
    for (std::size_t i = 0; i < kTauGrid.size(); ++i) {
        const double tau = kTauGrid[i];
        const double stat = find_s(long_source, tau, mode);
        result.grid.emplace_back(tau, stat);
        const double gap = std::abs(stat - result.target_stat);
        if (i == 0 || gap < best_gap) { // strict: ties stay with the larger tau
            best = i;
            best_gap = gap;
        }
    }
    check_grid_monotone(result.grid, mode);

    if (options.refine) {
        const double winner = kTauGrid[best];
        for (const double tau : {winner + 0.025, winner - 0.025}) {
            if (tau > kTauGrid.front() || tau < kTauGrid.back())
                continue;
            const double stat = find_s(long_source, tau, mode);
            result.grid.emplace_back(tau, stat);
            const double gap = std::abs(stat - result.target_stat);
            if (gap < best_gap) {
                best = result.grid.size() - 1;
                best_gap = gap;
            }
        }
        result.tau_ex = result.grid[best].first;
        result.achieved_stat = result.grid[best].second;
        return result;
    }

    result.tau_ex = result.grid[best].first;
    result.achieved_stat = result.grid[best].second;
    return result;
}

double log_baseline_tau(std::size_t l_tr, std::size_t l_ex) {
    if (l_tr < 2 || l_ex < 2)
        throw DomainError("log_baseline_tau: lengths must be >= 2");
    return std::log(static_cast<double>(l_tr)) / std::log(static_cast<double>(l_ex));
}

} // namespace attnalign
