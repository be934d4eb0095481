#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attnalign/analytic.hpp"
#include "attnalign/calibration.hpp"
#include "attnalign/encoder.hpp"
#include "attnalign/tasks.hpp"

namespace attnalign::io {

// All writers go through a temp file + rename so readers never observe a
// partially written file.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

// One double at 6 significant digits, '.' separator, locale independent.
std::string format_number(double value);

// Encoder weights persist as one JSON document: config fields plus flat
// row-major weight arrays, with the bucket tables under
// "relative_attention_bias" (one 32-entry array per head).
void save_model(const std::filesystem::path& path, const EncoderWeights& weights);
EncoderWeights load_model(const std::filesystem::path& path);

// Accepts either a full model document or a bare
// {"relative_attention_bias": [[...], ...]} file.
std::vector<BucketTable> load_bucket_tables(const std::filesystem::path& path);

// Token sequences as JSON lines, one integer array per line.
void save_sequences(const std::filesystem::path& path,
                    std::span<const std::vector<int>> sequences);
std::vector<std::vector<int>> load_sequences(const std::filesystem::path& path);

std::string calibration_result_to_json(const CalibrationResult& result);
CalibrationResult calibration_result_from_json(const std::string& text);
void save_calibration_result(const std::filesystem::path& path, const CalibrationResult& result);
CalibrationResult load_calibration_result(const std::filesystem::path& path);

std::string gaussian_fit_to_json(const GaussianFit& fit);
GaussianFit gaussian_fit_from_json(const std::string& text);

// CSV emitters. Columns are fixed by the consumer side (plotting scripts).
std::string grid_csv(const CalibrationResult& result);                    // tau,stat
std::string temperature_curve_csv(std::span<const TemperatureCurveRow> rows);
                                                                           // L_ex,tau_prop1,tau_prop2,tau_log
std::string needle_curve_csv(const NeedleCurve& curve);                    // L,tau,p_needle,policy
std::string qq_csv(const QQReport& report);                                // theoretical,empirical
std::string bias_profile_csv(std::span<const double> profile);             // n,bias

// Per-length statistics report (analyze command).
struct AnalyzeRow {
    std::size_t length = 0;
    double p_max = 0.0;
    double entropy = 0.0;
    double sigma = 0.0;
    double l_max = 0.0;
};
std::string analyze_csv(std::span<const AnalyzeRow> rows); // length,p_max,entropy,sigma,l_max
std::vector<AnalyzeRow> read_analyze_csv(const std::filesystem::path& path);

} // namespace attnalign::io
