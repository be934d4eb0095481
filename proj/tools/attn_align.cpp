// attn-align: calibrate softmax temperatures for length extrapolation,
// predict them in closed form, inspect attention statistics, and verify the
// analytic approximations against Monte-Carlo runs.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attnalign/analytic.hpp"
#include "attnalign/calibration.hpp"
#include "attnalign/encoder.hpp"
#include "attnalign/errors.hpp"
#include "attnalign/io.hpp"
#include "attnalign/rng.hpp"
#include "attnalign/tasks.hpp"

namespace fs = std::filesystem;
using namespace attnalign;

namespace {

AlignmentMode parse_mode(const std::string& s) {
    return s == "max" ? AlignmentMode::max_prob : AlignmentMode::entropy;
}

fs::path with_suffix(const fs::path& out, const char* suffix) {
    fs::path p = out;
    p.replace_extension();
    p += suffix;
    return p;
}

struct CalibrateArgs {
    std::string model, short_seqs, long_seqs, mode;
    std::string out = "calibration.json";
    std::optional<std::size_t> l_tr, l_ex; // cross-checks against the files
    bool refine = false;
};

int cmd_calibrate(const CalibrateArgs& args) {
    const EncoderWeights weights = io::load_model(args.model);
    const EncoderLogitSource short_src(weights, io::load_sequences(args.short_seqs));
    const EncoderLogitSource long_src(weights, io::load_sequences(args.long_seqs));
    if (args.l_tr && *args.l_tr != short_src.length())
        throw DomainError("--l-tr disagrees with the short sequence file (length " +
                          std::to_string(short_src.length()) + ")");
    if (args.l_ex && *args.l_ex != long_src.length())
        throw DomainError("--l-ex disagrees with the long sequence file (length " +
                          std::to_string(long_src.length()) + ")");

    CalibrationOptions opt;
    opt.refine = args.refine;
    const CalibrationResult result =
        calibrate(short_src, long_src, parse_mode(args.mode), opt);

    io::save_calibration_result(args.out, result);
    const fs::path grid_path = with_suffix(args.out, ".grid.csv");
    io::atomic_write_text(grid_path, io::grid_csv(result));

    std::printf("tau_ex=%s mode=%s l_tr=%zu l_ex=%zu target=%s achieved=%s\n",
                io::format_number(result.tau_ex).c_str(), to_string(result.mode), result.l_tr,
                result.l_ex, io::format_number(result.target_stat).c_str(),
                io::format_number(result.achieved_stat).c_str());
    std::printf("wrote %s and %s\n", args.out.c_str(), grid_path.string().c_str());
    return 0;
}

struct PredictArgs {
    std::size_t l_tr = 0;
    std::vector<std::size_t> lengths;
    std::string fits;
    std::optional<double> sigma;
    std::optional<double> pmax_tr;
    std::optional<double> l_max;
    std::string out = "temperature_curve.csv";
};

int cmd_predict_tau(const PredictArgs& args) {
    if (args.lengths.empty())
        throw DomainError("predict-tau needs --lengths or --l-ex");
    GaussianFit fit_tr;
    std::vector<GaussianFit> fits_ex;
    double pmax_tr = 0.0;

    if (!args.fits.empty()) {
        const std::vector<io::AnalyzeRow> rows = io::read_analyze_csv(args.fits);
        std::map<std::size_t, io::AnalyzeRow> by_length;
        for (const io::AnalyzeRow& r : rows)
            by_length[r.length] = r;
        const auto tr = by_length.find(args.l_tr);
        if (tr == by_length.end())
            throw DomainError("fits file has no row for the training length " +
                              std::to_string(args.l_tr));
        fit_tr.sigma = tr->second.sigma;
        fit_tr.l_max = tr->second.l_max;
        fit_tr.length = args.l_tr;
        pmax_tr = args.pmax_tr.value_or(tr->second.p_max);
        for (std::size_t l : args.lengths) {
            const auto it = by_length.find(l);
            if (it == by_length.end())
                throw DomainError("fits file has no row for length " + std::to_string(l));
            GaussianFit f;
            f.sigma = it->second.sigma;
            f.l_max = it->second.l_max;
            f.length = l;
            fits_ex.push_back(f);
        }
    } else if (args.sigma && args.pmax_tr) {
        fit_tr.sigma = *args.sigma;
        fit_tr.l_max = args.l_max.value_or(0.0);
        fit_tr.length = args.l_tr;
        pmax_tr = *args.pmax_tr;
        for (std::size_t l : args.lengths) {
            GaussianFit f;
            f.sigma = *args.sigma;
            f.l_max = fit_tr.l_max;
            f.length = l;
            fits_ex.push_back(f);
        }
    } else {
        throw DomainError("predict-tau needs --fits FILE or both --sigma and --pmax-tr");
    }

    const std::vector<TemperatureCurveRow> curve =
        temperature_curve(args.l_tr, fit_tr, fits_ex, pmax_tr);
    io::atomic_write_text(args.out, io::temperature_curve_csv(curve));
    std::printf("wrote %s (%zu rows)\n", args.out.c_str(), curve.size());
    return 0;
}

struct AnalyzeArgs {
    std::string model, seqs;
    double tau = 1.0;
    std::string out = "analyze.csv";
    std::string format = "csv";
    int layer = 0;
};

int cmd_analyze(const AnalyzeArgs& args) {
    const EncoderWeights weights = io::load_model(args.model);
    const std::vector<std::vector<int>> sequences = io::load_sequences(args.seqs);
    if (sequences.empty())
        throw DomainError("sequence file holds no sequences");

    std::map<std::size_t, std::vector<std::vector<int>>> by_length;
    for (const std::vector<int>& s : sequences)
        by_length[s.size()].push_back(s);

    std::vector<io::AnalyzeRow> rows;
    for (const auto& [length, group] : by_length) {
        io::AnalyzeRow row;
        row.length = length;

        const EncoderLogitSource src(weights, group);
        row.p_max = find_s(src, args.tau, AlignmentMode::max_prob);
        row.entropy = find_s(src, args.tau, AlignmentMode::entropy);

        // fit scope: tau-independent pre-softmax rows of the requested layer
        const std::vector<double> avg =
            layer_average_logit_vector(weights, group, 1.0, args.layer);
        try {
            const GaussianFit fit = fit_gaussian(avg);
            row.sigma = fit.sigma;
            row.l_max = fit.l_max;
        } catch (const ZeroSigmaError&) {
            row.sigma = 0.0; // constant rows (e.g. zeroed attention)
            row.l_max = 0.0;
        }
        rows.push_back(row);
    }

    if (args.format == "json") {
        std::string out = "[\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            char buf[256];
            std::snprintf(buf, sizeof(buf),
                          "  {\"length\": %zu, \"p_max\": %.17g, \"entropy\": %.17g, "
                          "\"sigma\": %.17g, \"l_max\": %.17g}%s\n",
                          rows[i].length, rows[i].p_max, rows[i].entropy, rows[i].sigma,
                          rows[i].l_max, i + 1 < rows.size() ? "," : "");
            out += buf;
        }
        out += "]\n";
        io::atomic_write_text(args.out, out);
    } else {
        io::atomic_write_text(args.out, io::analyze_csv(rows));
    }
    std::printf("wrote %s (%zu lengths)\n", args.out.c_str(), rows.size());
    return 0;
}

struct OracleArgs {
    double sigma = 1.0;
    double tau = 1.0;
    std::size_t samples = 1000000;
    std::uint64_t seed = 0;
    bool inject_entropy_bug = false;
};

int cmd_oracle(const OracleArgs& args) {
    if (args.samples < 1000000)
        std::fprintf(stderr,
                     "warning: tolerances are sized for 1e6 samples; %zu may not meet them\n",
                     args.samples);

    int failures = 0;
    const auto report = [&](const char* name, bool ok, const std::string& detail) {
        std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
        if (!ok)
            ++failures;
    };

    // moment identities behind the denominator and entropy approximations
    const McExpectationReport mc =
        mc_oracle_expectations(args.sigma, args.tau, args.samples, args.seed);
    report("E[e^(l/tau)] vs e^(sigma^2/(2 tau^2))", mc.exp_tau_rel_err <= 0.01,
           "rel_err=" + io::format_number(mc.exp_tau_rel_err) + " (tol 0.01)");
    report("E[l e^l] vs sigma^2 e^(sigma^2/2)", mc.l_exp_rel_err <= 0.02,
           "rel_err=" + io::format_number(mc.l_exp_rel_err) + " (tol 0.02)");

    // entropy approximation against simulated softmax rows at L = 4096
    constexpr std::size_t kFidelityLength = 4096;
    constexpr std::size_t kFidelityReplicates = 10000;
    int tau_index = 0;
    for (const double tau : {1.0, 0.7, 0.5}) {
        const GaussianSoftmaxMoments mom =
            mc_softmax_moments(kFidelityLength, args.sigma, tau, kFidelityReplicates,
                               derive_seed(args.seed, 100 + static_cast<std::uint64_t>(tau_index)));
        ++tau_index;
        double predicted = approx_entropy(kFidelityLength, args.sigma, tau).value;
        if (args.inject_entropy_bug) // test hook: drop the 1/2 in the variance term
            predicted = std::log(static_cast<double>(kFidelityLength)) -
                        args.sigma * args.sigma / (tau * tau);
        const double dev = std::abs(predicted - mom.mean_entropy);
        char name[64];
        std::snprintf(name, sizeof(name), "entropy approximation at tau=%.1f", tau);
        report(name, dev <= 0.05, "|dev|=" + io::format_number(dev) + " nats (tol 0.05)");
    }

    // max-probability approximation with the empirical largest logit
    const GaussianSoftmaxMoments mom =
        mc_softmax_moments(kFidelityLength, args.sigma, 1.0, kFidelityReplicates,
                           derive_seed(args.seed, 200));
    const double predicted_pmax =
        approx_pmax(kFidelityLength, args.sigma, mom.mean_row_max, 1.0).value;
    const double rel = std::abs(predicted_pmax - mom.mean_p_max) / mom.mean_p_max;
    report("p_max approximation with empirical l_max", rel <= 0.10,
           "rel_err=" + io::format_number(rel) + " (tol 0.10)");

    // normality machinery
    Rng rng(derive_seed(args.seed, 300));
    std::vector<double> samples(10000);
    for (double& v : samples)
        v = rng.normal(0.0, args.sigma);
    const QQReport qq = qq_check(samples);
    report("qq linearity of gaussian samples", qq.linearity >= 0.995,
           "linearity=" + io::format_number(qq.linearity) + " (tol >= 0.995)");

    return failures == 0 ? 0 : 1;
}

struct DemoArgs {
    double gap = 4.0;
    double sigma = 1.0;
    std::vector<std::size_t> lengths;
    std::string out = "needle_curve.csv";
};

int cmd_demo(const DemoArgs& args) {
    const NeedleCurve curve = dispersed_attention_demo(args.gap, args.sigma, args.lengths);
    io::atomic_write_text(args.out, io::needle_curve_csv(curve));
    const std::size_t l_tr = curve.lengths.front();
    for (std::size_t i = 0; i < curve.lengths.size(); ++i) {
        const bool ok = correction_achievable(args.gap, args.sigma, l_tr, curve.lengths[i]);
        std::printf("L=%zu p_fixed=%s p_aligned=%s correction_achievable=%s\n",
                    curve.lengths[i], io::format_number(curve.p_fixed[i]).c_str(),
                    io::format_number(curve.p_aligned[i]).c_str(), ok ? "yes" : "no");
    }
    std::printf("wrote %s\n", args.out.c_str());
    return 0;
}

struct BucketTableArgs {
    std::string model;
    int head = 0;
    std::size_t length = 0;
    std::optional<std::size_t> query_pos;
    std::string out = "bias_profile.csv";
};

int cmd_bucket_table(const BucketTableArgs& args) {
    const std::vector<BucketTable> tables = io::load_bucket_tables(args.model);
    if (args.head < 0 || static_cast<std::size_t>(args.head) >= tables.size())
        throw DomainError("head " + std::to_string(args.head) + " out of range (model has " +
                          std::to_string(tables.size()) + " tables)");
    const std::size_t m = args.query_pos.value_or(args.length / 2);
    const std::vector<double> profile =
        bias_profile(tables[static_cast<std::size_t>(args.head)], m, args.length);
    io::atomic_write_text(args.out, io::bias_profile_csv(profile));
    std::printf("wrote %s (head %d, m=%zu, L=%zu)\n", args.out.c_str(), args.head, m,
                args.length);
    return 0;
}

struct QqArgs {
    std::string model, seqs;
    double sigma = 1.0;
    std::size_t samples = 10000;
    std::uint64_t seed = 0;
    int layer = 0;
    std::string out = "qq.csv";
    std::string format = "csv";
};

int cmd_qq(const QqArgs& args) {
    std::vector<double> data;
    if (!args.model.empty()) {
        if (args.seqs.empty())
            throw DomainError("qq with --model also needs --seqs");
        const EncoderWeights weights = io::load_model(args.model);
        const std::vector<std::vector<int>> sequences = io::load_sequences(args.seqs);
        if (sequences.empty())
            throw DomainError("sequence file holds no sequences");
        data = layer_average_logit_vector(weights, sequences, 1.0, args.layer);
    } else {
        Rng rng(args.seed);
        data.resize(args.samples);
        for (double& v : data)
            v = rng.normal(0.0, args.sigma);
    }

    const QQReport rep = qq_check(data);
    if (args.format == "json") {
        std::string out = "{\n  \"linearity\": " + io::format_number(rep.linearity) +
                          ",\n  \"points\": [";
        for (std::size_t i = 0; i < rep.points.size(); ++i) {
            out += i == 0 ? "" : ",";
            out += "[" + io::format_number(rep.points[i].first) + "," +
                   io::format_number(rep.points[i].second) + "]";
        }
        out += "]\n}\n";
        io::atomic_write_text(args.out, out);
    } else {
        io::atomic_write_text(args.out, io::qq_csv(rep));
    }
    std::printf("linearity=%s n=%zu\n", io::format_number(rep.linearity).c_str(),
                rep.points.size());
    std::printf("wrote %s\n", args.out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention alignment toolkit: temperature calibration for T5-style "
                 "relative-position attention at extrapolated lengths"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    if (const char* env = std::getenv("ATTN_ALIGN_SEED"))
        seed = std::strtoull(env, nullptr, 10);

    CalibrateArgs cal;
    CLI::App* c = app.add_subcommand("calibrate",
                                     "Grid-search the extrapolation temperature by aligning "
                                     "average max-probability or entropy");
    c->add_option("--model", cal.model, "encoder weights JSON")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--short-seqs", cal.short_seqs, "training-length sequences (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--long-seqs", cal.long_seqs, "extrapolation-length sequences (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--mode", cal.mode, "alignment statistic")
        ->required()
        ->check(CLI::IsMember({"max", "ent"}));
    c->add_option("--out", cal.out, "result JSON path (grid CSV written alongside)");
    c->add_flag("--refine", cal.refine, "bisect once around the grid winner");
    std::size_t cal_ltr = 0, cal_lex = 0;
    CLI::Option* cal_ltr_opt =
        c->add_option("--l-tr", cal_ltr, "expected training length (cross-check)");
    CLI::Option* cal_lex_opt =
        c->add_option("--l-ex", cal_lex, "expected extrapolation length (cross-check)");

    PredictArgs pre;
    CLI::App* p = app.add_subcommand("predict-tau",
                                     "Closed-form temperatures (both solvers) plus the "
                                     "log-length baseline");
    p->add_option("--l-tr", pre.l_tr, "training length")->required();
    CLI::Option* pre_lengths =
        p->add_option("--lengths", pre.lengths, "extrapolation lengths")->delimiter(',');
    std::size_t pre_lex = 0;
    CLI::Option* pre_lex_opt =
        p->add_option("--l-ex", pre_lex, "single extrapolation length");
    pre_lengths->excludes(pre_lex_opt);
    p->add_option("--fits", pre.fits, "analyze CSV with per-length sigma/l_max/p_max")
        ->check(CLI::ExistingFile);
    double sigma_flag = 0.0, pmax_flag = 0.0, lmax_flag = 0.0;
    CLI::Option* sigma_opt =
        p->add_option("--sigma", sigma_flag, "constant logit sigma for all lengths");
    CLI::Option* pmax_opt =
        p->add_option("--pmax-tr", pmax_flag, "average max probability at the training length");
    CLI::Option* lmax_opt =
        p->add_option("--lmax", lmax_flag, "largest average-logit entry for the fit record");
    p->add_option("--out", pre.out, "output CSV path");

    AnalyzeArgs ana;
    CLI::App* a = app.add_subcommand("analyze",
                                     "Per-length attention statistics and layer-0 gaussian fit");
    a->add_option("--model", ana.model, "encoder weights JSON")
        ->required()
        ->check(CLI::ExistingFile);
    a->add_option("--seqs", ana.seqs, "sequences (JSONL), grouped by length")
        ->required()
        ->check(CLI::ExistingFile);
    a->add_option("--tau", ana.tau, "softmax temperature for the statistics");
    a->add_option("--layer", ana.layer, "fit scope layer (-1 pools all layers)");
    a->add_option("--out", ana.out, "output path");
    a->add_option("--format", ana.format, "output format")->check(CLI::IsMember({"csv", "json"}));

    OracleArgs ora;
    CLI::App* o = app.add_subcommand("oracle",
                                     "Verify the closed-form approximations against "
                                     "Monte-Carlo simulation");
    o->add_option("--sigma", ora.sigma, "logit standard deviation");
    o->add_option("--tau", ora.tau, "temperature for the moment check");
    o->add_option("--samples", ora.samples, "Monte-Carlo sample count");
    o->add_flag("--inject-entropy-bug", ora.inject_entropy_bug)->group(""); // test hook

    DemoArgs dem;
    CLI::App* d = app.add_subcommand("demo",
                                     "Closed-form needle-attention curves under fixed and "
                                     "entropy-aligned temperatures");
    d->add_option("--gap", dem.gap, "needle logit advantage");
    d->add_option("--sigma", dem.sigma, "junk logit sigma");
    d->add_option("--lengths", dem.lengths, "length grid; first entry is the training length")
        ->required()
        ->delimiter(',');
    d->add_option("--out", dem.out, "output CSV path");

    BucketTableArgs bt;
    CLI::App* b = app.add_subcommand("bucket-table",
                                     "Dump one head's relative bias profile for plotting");
    b->add_option("--model", bt.model, "model JSON or bare bucket-table JSON")
        ->required()
        ->check(CLI::ExistingFile);
    b->add_option("--head", bt.head, "head index");
    b->add_option("--length", bt.length, "sequence length L")->required();
    std::size_t query_pos_flag = 0;
    CLI::Option* qp = b->add_option("--query-pos", query_pos_flag,
                                    "fixed query position m (default L/2)");
    b->add_option("--out", bt.out, "output CSV path");

    QqArgs qq;
    CLI::App* q = app.add_subcommand("qq",
                                     "QQ normality check of the average logit vector or of "
                                     "synthetic gaussian samples");
    q->add_option("--model", qq.model, "encoder weights JSON")->check(CLI::ExistingFile);
    q->add_option("--seqs", qq.seqs, "sequences (JSONL)")->check(CLI::ExistingFile);
    q->add_option("--sigma", qq.sigma, "sigma for synthetic samples");
    q->add_option("--samples", qq.samples, "synthetic sample count");
    q->add_option("--layer", qq.layer, "fit scope layer (-1 pools all layers)");
    q->add_option("--out", qq.out, "output path");
    q->add_option("--format", qq.format, "output format")->check(CLI::IsMember({"csv", "json"}));

    for (CLI::App* sub : {c, p, a, o, d, b, q})
        sub->add_option("--seed", seed, "random seed (falls back to ATTN_ALIGN_SEED)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    ora.seed = seed;
    qq.seed = seed;
    if (*qp)
        bt.query_pos = query_pos_flag;
    if (*sigma_opt)
        pre.sigma = sigma_flag;
    if (*pmax_opt)
        pre.pmax_tr = pmax_flag;
    if (*lmax_opt)
        pre.l_max = lmax_flag;
    if (*pre_lex_opt)
        pre.lengths.push_back(pre_lex);
    if (*cal_ltr_opt)
        cal.l_tr = cal_ltr;
    if (*cal_lex_opt)
        cal.l_ex = cal_lex;

    try {
        if (app.got_subcommand(c))
            return cmd_calibrate(cal);
        if (app.got_subcommand(p))
            return cmd_predict_tau(pre);
        if (app.got_subcommand(a))
            return cmd_analyze(ana);
        if (app.got_subcommand(o))
            return cmd_oracle(ora);
        if (app.got_subcommand(d))
            return cmd_demo(dem);
        if (app.got_subcommand(b))
            return cmd_bucket_table(bt);
        if (app.got_subcommand(q))
            return cmd_qq(qq);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
