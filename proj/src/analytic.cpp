#include "attnalign/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "attnalign/calibration.hpp"
#include "attnalign/errors.hpp"
#include "attnalign/rng.hpp"

namespace attnalign {

double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0)
        throw DomainError("normal_quantile: p must lie in (0, 1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step against the exact CDF.
    const double e = 0.5 * std::erfc(-x / 1.4142135623730951) - p;
    const double u = e * 2.5066282746310002 * std::exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
    return x;
}

SortedRowAverager::SortedRowAverager(std::size_t length) : length_(length) {
    if (length_ == 0)
        throw ShapeError("sorted-row averager: row length must be >= 1");
    acc_.assign(length_, 0.0);
    scratch_.resize(length_);
}

void SortedRowAverager::add(std::span<const double> row) {
    if (row.size() != length_)
        throw ShapeError("sorted-row averager: row length mismatch");
    std::copy(row.begin(), row.end(), scratch_.begin());
    std::sort(scratch_.begin(), scratch_.end());
    for (std::size_t i = 0; i < length_; ++i)
        acc_[i] += scratch_[i];
    ++count_;
}

std::vector<double> SortedRowAverager::average() const {
    if (count_ == 0)
        throw ShapeError("sorted-row averager: no rows added");
    std::vector<double> avg(length_);
    double mean = 0.0;
    for (std::size_t i = 0; i < length_; ++i) {
        avg[i] = acc_[i] / static_cast<double>(count_);
        mean += avg[i];
    }
    mean /= static_cast<double>(length_);
    for (double& v : avg)
        v -= mean;
    return avg;
}

std::vector<double> average_logit_vector(const std::vector<std::vector<double>>& rows) {
    if (rows.empty())
        throw ShapeError("average_logit_vector: no rows");
    SortedRowAverager averager(rows.front().size());
    for (const std::vector<double>& row : rows)
        averager.add(row);
    return averager.average();
}

std::vector<double> layer_average_logit_vector(const EncoderWeights& weights,
                                               std::span<const std::vector<int>> sequences,
                                               double tau, int layer) {
    if (sequences.empty())
        throw ShapeError("layer_average_logit_vector: no sequences");
    SortedRowAverager averager(sequences.front().size());
    collect_logit_rows(weights, sequences, tau,
                       [&](std::span<const double> row, std::size_t, int row_layer, int,
                           std::size_t) {
                           if (layer < 0 || row_layer == layer)
                               averager.add(row);
                       });
    return averager.average();
}

GaussianFit fit_gaussian(std::span<const double> avg) {
    if (avg.size() < 2)
        throw ShapeError("fit_gaussian: need at least 2 entries");

    double mean = 0.0;
    for (double v : avg)
        mean += v;
    mean /= static_cast<double>(avg.size());

    double ss = 0.0;
    double l_max = avg[0] - mean;
    for (double v : avg) {
        const double z = v - mean;
        ss += z * z;
        if (z > l_max)
            l_max = z;
    }
    const double sigma = std::sqrt(ss / static_cast<double>(avg.size()));
    if (sigma == 0.0)
        throw ZeroSigmaError("fit_gaussian: constant vector has zero sigma");

    GaussianFit fit;
    fit.sigma = sigma;
    fit.l_max = l_max;
    fit.length = avg.size();
    return fit;
}

ApproxValue approx_pmax(std::size_t length, double sigma, double l_max, double tau) {
    if (length < 1)
        throw ShapeError("approx_pmax: length must be >= 1");
    if (sigma < 0.0 || tau <= 0.0)
        throw DomainError("approx_pmax: need sigma >= 0 and tau > 0");
    const double value =
        std::exp(l_max / tau - sigma * sigma / (2.0 * tau * tau)) / static_cast<double>(length);
    return ApproxValue{value, value <= 1.0};
}

ApproxValue approx_entropy(std::size_t length, double sigma, double tau) {
    if (length < 1)
        throw ShapeError("approx_entropy: length must be >= 1");
    if (sigma < 0.0 || tau <= 0.0)
        throw DomainError("approx_entropy: need sigma >= 0 and tau > 0");
    const double value =
        std::log(static_cast<double>(length)) - sigma * sigma / (2.0 * tau * tau);
    return ApproxValue{value, value >= 0.0};
}

double solve_tau_maxprob(std::size_t l_tr, std::size_t l_ex, double p_max_tr, double sigma_tr,
                         double sigma_ex) {
    if (l_tr < 2 || l_ex < l_tr)
        throw DomainError("solve_tau_maxprob: need l_ex >= l_tr >= 2");
    if (p_max_tr <= 0.0 || p_max_tr > 1.0)
        throw DomainError("solve_tau_maxprob: p_max_tr must lie in (0, 1]");
    if (sigma_tr <= 0.0 || sigma_ex <= 0.0)
        throw DomainError("solve_tau_maxprob: sigmas must be > 0");

    const double log_p = std::log(p_max_tr);
    const double coeff_a = std::log(static_cast<double>(l_ex)) + log_p;
    const double coeff_b =
        std::log(static_cast<double>(l_tr)) + log_p + sigma_tr * sigma_tr / 2.0;
    const double coeff_c = sigma_ex * sigma_ex / 2.0;

    if (coeff_a <= 0.0)
        throw DegenerateCoefficientError(
            "solve_tau_maxprob: leading coefficient ln(L_ex) + ln(p_max_tr) is not positive");

    const double disc = coeff_b * coeff_b - 4.0 * coeff_a * coeff_c;
    if (disc < 0.0)
        throw NoRealRootError("solve_tau_maxprob: negative discriminant, no real temperature");

    const double sq = std::sqrt(disc);
    // larger root, in the form that avoids cancellation
    return coeff_b >= 0.0 ? (coeff_b + sq) / (2.0 * coeff_a) : 2.0 * coeff_c / (coeff_b - sq);
}

double solve_tau_entropy(std::size_t l_tr, std::size_t l_ex, double sigma_tr, double sigma_ex) {
    if (l_tr < 1 || l_ex < l_tr)
        throw DomainError("solve_tau_entropy: need l_ex >= l_tr >= 1");
    if (sigma_tr <= 0.0 || sigma_ex <= 0.0)
        throw DomainError("solve_tau_entropy: sigmas must be > 0");
    const double ratio = static_cast<double>(l_ex) / static_cast<double>(l_tr);
    return sigma_ex / std::sqrt(sigma_tr * sigma_tr + 2.0 * std::log(ratio));
}

McExpectationReport mc_oracle_expectations(double sigma, double tau, std::size_t n_samples,
                                           std::uint64_t seed) {
    if (sigma <= 0.0 || tau <= 0.0)
        throw DomainError("mc_oracle_expectations: need sigma > 0 and tau > 0");
    if (n_samples < 1000)
        throw DomainError("mc_oracle_expectations: need at least 1e3 samples");

    // Fixed chunking; per-chunk partial sums reduced in index order makes the
    // result independent of the thread count.
    constexpr std::size_t kChunks = 512;
    const std::size_t per_chunk = (n_samples + kChunks - 1) / kChunks;
    std::vector<double> sum_exp_tau(kChunks, 0.0), sum_l_exp(kChunks, 0.0);

#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(kChunks); ++c) {
        const std::size_t begin = static_cast<std::size_t>(c) * per_chunk;
        const std::size_t end = std::min(begin + per_chunk, n_samples);
        if (begin >= end)
            continue;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const double l = rng.normal(0.0, sigma);
            s1 += std::exp(l / tau);
            s2 += l * std::exp(l);
        }
        sum_exp_tau[static_cast<std::size_t>(c)] = s1;
        sum_l_exp[static_cast<std::size_t>(c)] = s2;
    }

    double s1 = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < kChunks; ++c) {
        s1 += sum_exp_tau[c];
        s2 += sum_l_exp[c];
    }

    McExpectationReport rep;
    rep.n_samples = n_samples;
    rep.exp_tau_empirical = s1 / static_cast<double>(n_samples);
    rep.exp_tau_closed = std::exp(sigma * sigma / (2.0 * tau * tau));
    rep.exp_tau_rel_err = std::abs(rep.exp_tau_empirical - rep.exp_tau_closed) / rep.exp_tau_closed;
    rep.l_exp_empirical = s2 / static_cast<double>(n_samples);
    rep.l_exp_closed = sigma * sigma * std::exp(sigma * sigma / 2.0);
    rep.l_exp_rel_err = std::abs(rep.l_exp_empirical - rep.l_exp_closed) / rep.l_exp_closed;
    return rep;
}

GaussianSoftmaxMoments mc_softmax_moments(std::size_t length, double sigma, double tau,
                                          std::size_t replicates, std::uint64_t seed) {
    if (length < 1 || replicates < 1)
        throw ShapeError("mc_softmax_moments: length and replicates must be >= 1");
    if (sigma < 0.0 || tau <= 0.0)
        throw DomainError("mc_softmax_moments: need sigma >= 0 and tau > 0");

    std::vector<double> ent(replicates), pmx(replicates), rmx(replicates);
    const std::int64_t reps = static_cast<std::int64_t>(replicates);

#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < reps; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        std::vector<double> row(length);
        double mx = -1e300;
        for (double& v : row) {
            v = rng.normal(0.0, sigma);
            if (v > mx)
                mx = v;
        }
        rmx[static_cast<std::size_t>(r)] = mx;
        const AttentionStats st = softmax_row_stats_inplace(row.data(), row.size(), tau);
        ent[static_cast<std::size_t>(r)] = st.entropy;
        pmx[static_cast<std::size_t>(r)] = st.p_max;
    }

    GaussianSoftmaxMoments mom;
    mom.replicates = replicates;
    for (std::size_t r = 0; r < replicates; ++r) {
        mom.mean_entropy += ent[r];
        mom.mean_p_max += pmx[r];
        mom.mean_row_max += rmx[r];
    }
    mom.mean_entropy /= static_cast<double>(replicates);
    mom.mean_p_max /= static_cast<double>(replicates);
    mom.mean_row_max /= static_cast<double>(replicates);
    return mom;
}

QQReport qq_check(std::span<const double> samples) {
    if (samples.size() < 20)
        throw ShapeError("qq_check: need at least 20 samples");

    const std::size_t n = samples.size();
    double mean = 0.0;
    for (double v : samples)
        mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : samples)
        ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd == 0.0)
        throw ZeroSigmaError("qq_check: constant input");

    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());

    QQReport rep;
    rep.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        rep.points.emplace_back(normal_quantile(p), (sorted[i] - mean) / sd);
    }

    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : rep.points) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& [x, y] : rep.points) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    rep.linearity = sxy / std::sqrt(sxx * syy);
    return rep;
}

std::vector<TemperatureCurveRow> temperature_curve(std::size_t l_tr, const GaussianFit& fit_tr,
                                                   std::span<const GaussianFit> fits_ex,
                                                   double p_max_tr) {
    std::vector<TemperatureCurveRow> rows;
    rows.reserve(fits_ex.size());
    for (const GaussianFit& fit : fits_ex) {
        TemperatureCurveRow row;
        row.l_ex = fit.length;
        try {
            row.tau_prop1 = solve_tau_maxprob(l_tr, fit.length, p_max_tr, fit_tr.sigma, fit.sigma);
        } catch (const DomainError&) {
        }
        try {
            row.tau_prop2 = solve_tau_entropy(l_tr, fit.length, fit_tr.sigma, fit.sigma);
        } catch (const DomainError&) {
        }
        try {
            row.tau_log = log_baseline_tau(l_tr, fit.length);
        } catch (const DomainError&) {
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace attnalign
