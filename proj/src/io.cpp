#include "attnalign/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attnalign/errors.hpp"

namespace attnalign::io {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw IoError("malformed JSON in " + what);
    return j;
}

json matrix_to_json(const Matrix& m) {
    return json(m.data);
}

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols,
                        const std::string& name) {
    if (!j.is_array() || j.size() != rows * cols)
        throw IoError("weight array '" + name + "' must hold " + std::to_string(rows * cols) +
                      " numbers");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = j[i].get<double>();
    return m;
}

std::vector<double> vector_from_json(const json& j, std::size_t n, const std::string& name) {
    if (!j.is_array() || j.size() != n)
        throw IoError("array '" + name + "' must hold " + std::to_string(n) + " numbers");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = j[i].get<double>();
    return v;
}

std::vector<BucketTable> bucket_tables_from_json(const json& j) {
    if (!j.is_array() || j.empty())
        throw IoError("relative_attention_bias must be a non-empty array of per-head tables");
    std::vector<BucketTable> tables;
    tables.reserve(j.size());
    for (std::size_t h = 0; h < j.size(); ++h) {
        const json& t = j[h];
        if (!t.is_array() || t.size() != kNumBuckets)
            throw IoError("bucket table " + std::to_string(h) + " must hold exactly 32 numbers");
        BucketTable table;
        table.head_id = static_cast<int>(h);
        for (int i = 0; i < kNumBuckets; ++i)
            table.values[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i)].get<double>();
        table.validate();
        tables.push_back(table);
    }
    return tables;
}

AlignmentMode mode_from_string(const std::string& s) {
    if (s == "max_prob")
        return AlignmentMode::max_prob;
    if (s == "entropy")
        return AlignmentMode::entropy;
    throw IoError("unknown alignment mode '" + s + "'");
}

} // namespace

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out)
            throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

std::string format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", value);
    return buf;
}

void save_model(const std::filesystem::path& path, const EncoderWeights& weights) {
    weights.validate();
    json j;
    j["config"] = {{"num_layers", weights.config.num_layers},
                   {"num_heads", weights.config.num_heads},
                   {"d_model", weights.config.d_model},
                   {"d_kv", weights.config.d_kv},
                   {"d_ff", weights.config.d_ff},
                   {"vocab_size", weights.config.vocab_size},
                   {"seed", weights.config.seed}};
    j["token_embedding"] = matrix_to_json(weights.token_embedding);
    json layers = json::array();
    for (const LayerWeights& lw : weights.layers) {
        layers.push_back({{"wq", matrix_to_json(lw.wq)},
                          {"wk", matrix_to_json(lw.wk)},
                          {"wv", matrix_to_json(lw.wv)},
                          {"wo", matrix_to_json(lw.wo)},
                          {"ffn_w1", matrix_to_json(lw.ffn_w1)},
                          {"ffn_w2", matrix_to_json(lw.ffn_w2)},
                          {"attn_norm_gain", json(lw.attn_norm_gain)},
                          {"ffn_norm_gain", json(lw.ffn_norm_gain)}});
    }
    j["layers"] = std::move(layers);
    json bias = json::array();
    for (const BucketTable& t : weights.rel_bias)
        bias.push_back(json(t.values));
    j["relative_attention_bias"] = std::move(bias);
    atomic_write_text(path, j.dump());
}

EncoderWeights load_model(const std::filesystem::path& path) {
    const json j = parse(read_text(path), path.string());
    if (!j.contains("config"))
        throw IoError("model file lacks a config object");
    const json& c = j.at("config");

    EncoderWeights w;
    w.config.num_layers = c.at("num_layers").get<int>();
    w.config.num_heads = c.at("num_heads").get<int>();
    w.config.d_model = c.at("d_model").get<int>();
    w.config.d_kv = c.at("d_kv").get<int>();
    w.config.d_ff = c.at("d_ff").get<int>();
    w.config.vocab_size = c.at("vocab_size").get<int>();
    w.config.seed = c.at("seed").get<std::uint64_t>();
    w.config.validate();

    const std::size_t dm = static_cast<std::size_t>(w.config.d_model);
    const std::size_t dff = static_cast<std::size_t>(w.config.d_ff);
    w.token_embedding = matrix_from_json(j.at("token_embedding"),
                                         static_cast<std::size_t>(w.config.vocab_size), dm,
                                         "token_embedding");

    const json& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != static_cast<std::size_t>(w.config.num_layers))
        throw IoError("model file must hold num_layers layer objects");
    for (const json& l : layers) {
        LayerWeights lw;
        lw.wq = matrix_from_json(l.at("wq"), dm, dm, "wq");
        lw.wk = matrix_from_json(l.at("wk"), dm, dm, "wk");
        lw.wv = matrix_from_json(l.at("wv"), dm, dm, "wv");
        lw.wo = matrix_from_json(l.at("wo"), dm, dm, "wo");
        lw.ffn_w1 = matrix_from_json(l.at("ffn_w1"), dm, dff, "ffn_w1");
        lw.ffn_w2 = matrix_from_json(l.at("ffn_w2"), dff, dm, "ffn_w2");
        lw.attn_norm_gain = vector_from_json(l.at("attn_norm_gain"), dm, "attn_norm_gain");
        lw.ffn_norm_gain = vector_from_json(l.at("ffn_norm_gain"), dm, "ffn_norm_gain");
        w.layers.push_back(std::move(lw));
    }

    w.rel_bias = bucket_tables_from_json(j.at("relative_attention_bias"));
    if (w.rel_bias.size() != static_cast<std::size_t>(w.config.num_heads))
        throw IoError("model file must hold one bucket table per head");
    w.validate();
    return w;
}

std::vector<BucketTable> load_bucket_tables(const std::filesystem::path& path) {
    const json j = parse(read_text(path), path.string());
    if (!j.contains("relative_attention_bias"))
        throw IoError(path.string() + " lacks a relative_attention_bias key");
    return bucket_tables_from_json(j.at("relative_attention_bias"));
}

void save_sequences(const std::filesystem::path& path,
                    std::span<const std::vector<int>> sequences) {
    std::string out;
    for (const std::vector<int>& seq : sequences) {
        out += json(seq).dump();
        out += '\n';
    }
    atomic_write_text(path, out);
}

std::vector<std::vector<int>> load_sequences(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::vector<int>> sequences;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_array())
            throw IoError(path.string() + ":" + std::to_string(line_no) +
                          ": expected a JSON integer array");
        std::vector<int> seq;
        seq.reserve(j.size());
        for (const json& v : j) {
            if (!v.is_number_integer())
                throw IoError(path.string() + ":" + std::to_string(line_no) +
                              ": token ids must be integers");
            seq.push_back(v.get<int>());
        }
        sequences.push_back(std::move(seq));
    }
    return sequences;
}

std::string calibration_result_to_json(const CalibrationResult& result) {
    json grid = json::array();
    for (const auto& [tau, stat] : result.grid)
        grid.push_back({{"tau", tau}, {"stat", stat}});
    const json j = {{"tau_ex", result.tau_ex},
                    {"mode", to_string(result.mode)},
                    {"target_stat", result.target_stat},
                    {"achieved_stat", result.achieved_stat},
                    {"l_tr", result.l_tr},
                    {"l_ex", result.l_ex},
                    {"grid", grid}};
    return j.dump(2) + "\n";
}

CalibrationResult calibration_result_from_json(const std::string& text) {
    const json j = parse(text, "calibration result");
    CalibrationResult r;
    r.tau_ex = j.at("tau_ex").get<double>();
    r.mode = mode_from_string(j.at("mode").get<std::string>());
    r.target_stat = j.at("target_stat").get<double>();
    r.achieved_stat = j.at("achieved_stat").get<double>();
    r.l_tr = j.at("l_tr").get<std::size_t>();
    r.l_ex = j.at("l_ex").get<std::size_t>();
    for (const json& g : j.at("grid"))
        r.grid.emplace_back(g.at("tau").get<double>(), g.at("stat").get<double>());
    return r;
}

void save_calibration_result(const std::filesystem::path& path,
                             const CalibrationResult& result) {
    atomic_write_text(path, calibration_result_to_json(result));
}

CalibrationResult load_calibration_result(const std::filesystem::path& path) {
    return calibration_result_from_json(read_text(path));
}

std::string gaussian_fit_to_json(const GaussianFit& fit) {
    const json j = {{"sigma", fit.sigma},
                    {"l_max", fit.l_max},
                    {"length", fit.length},
                    {"layer", fit.layer}};
    return j.dump(2) + "\n";
}

GaussianFit gaussian_fit_from_json(const std::string& text) {
    const json j = parse(text, "gaussian fit");
    GaussianFit fit;
    fit.sigma = j.at("sigma").get<double>();
    fit.l_max = j.at("l_max").get<double>();
    fit.length = j.at("length").get<std::size_t>();
    fit.layer = j.at("layer").get<std::string>();
    return fit;
}

std::string grid_csv(const CalibrationResult& result) {
    std::string out = "tau,stat\n";
    for (const auto& [tau, stat] : result.grid) {
        out += format_number(tau);
        out += ',';
        out += format_number(stat);
        out += '\n';
    }
    return out;
}

std::string temperature_curve_csv(std::span<const TemperatureCurveRow> rows) {
    std::string out = "L_ex,tau_prop1,tau_prop2,tau_log\n";
    for (const TemperatureCurveRow& r : rows) {
        out += std::to_string(r.l_ex);
        out += ',';
        if (r.tau_prop1)
            out += format_number(*r.tau_prop1);
        out += ',';
        if (r.tau_prop2)
            out += format_number(*r.tau_prop2);
        out += ',';
        if (r.tau_log)
            out += format_number(*r.tau_log);
        out += '\n';
    }
    return out;
}

std::string needle_curve_csv(const NeedleCurve& curve) {
    std::string out = "L,tau,p_needle,policy\n";
    for (std::size_t i = 0; i < curve.lengths.size(); ++i) {
        out += std::to_string(curve.lengths[i]);
        out += ',';
        out += format_number(curve.tau_fixed[i]);
        out += ',';
        out += format_number(curve.p_fixed[i]);
        out += ",fixed_1\n";
        out += std::to_string(curve.lengths[i]);
        out += ',';
        out += format_number(curve.tau_aligned[i]);
        out += ',';
        out += format_number(curve.p_aligned[i]);
        out += ",prop2_aligned\n";
    }
    return out;
}

std::string qq_csv(const QQReport& report) {
    std::string out = "theoretical,empirical\n";
    for (const auto& [t, e] : report.points) {
        out += format_number(t);
        out += ',';
        out += format_number(e);
        out += '\n';
    }
    return out;
}

std::string bias_profile_csv(std::span<const double> profile) {
    std::string out = "n,bias\n";
    for (std::size_t n = 0; n < profile.size(); ++n) {
        out += std::to_string(n);
        out += ',';
        out += format_number(profile[n]);
        out += '\n';
    }
    return out;
}

std::string analyze_csv(std::span<const AnalyzeRow> rows) {
    std::string out = "length,p_max,entropy,sigma,l_max\n";
    for (const AnalyzeRow& r : rows) {
        out += std::to_string(r.length);
        out += ',';
        out += format_number(r.p_max);
        out += ',';
        out += format_number(r.entropy);
        out += ',';
        out += format_number(r.sigma);
        out += ',';
        out += format_number(r.l_max);
        out += '\n';
    }
    return out;
}

std::vector<AnalyzeRow> read_analyze_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("length,p_max,entropy,sigma,l_max", 0) != 0)
        throw IoError(path.string() + ": expected an analyze CSV header");
    std::vector<AnalyzeRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        AnalyzeRow r;
        char* end = nullptr;
        const char* s = line.c_str();
        r.length = std::strtoull(s, &end, 10);
        auto next_field = [&]() {
            if (*end != ',')
                throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad CSV row");
            s = end + 1;
            return std::strtod(s, &end);
        };
        r.p_max = next_field();
        r.entropy = next_field();
        r.sigma = next_field();
        r.l_max = next_field();
        rows.push_back(r);
    }
    return rows;
}

} // namespace attnalign::io
