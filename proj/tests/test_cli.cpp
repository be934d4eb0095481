#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "attnalign/encoder.hpp"
#include "attnalign/io.hpp"
#include "attnalign/rng.hpp"

using namespace attnalign;
namespace fs = std::filesystem;

namespace {

struct CliFixture {
    fs::path dir;

    CliFixture() {
        dir = fs::temp_directory_path() / ("attnalign_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~CliFixture() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }

    fs::path operator/(const std::string& name) const { return dir / name; }

    // Runs the CLI, captures stdout+stderr, returns the exit code.
    int run(const std::string& args, std::string* output = nullptr) const {
        const fs::path log = dir / "run.log";
        const std::string cmd = std::string(ATTN_ALIGN_CLI_PATH) + " " + args + " > " +
                                log.string() + " 2>&1";
        const int rc = std::system(cmd.c_str());
        if (output) {
            std::ifstream in(log);
            std::ostringstream ss;
            ss << in.rdbuf();
            *output = ss.str();
        }
        return WEXITSTATUS(rc);
    }

    std::string slurp(const fs::path& p) const {
        std::ifstream in(p);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    EncoderWeights write_tiny_model(const fs::path& path, std::uint64_t seed = 1,
                                    bool zero_attention = false) const {
        EncoderConfig cfg;
        cfg.num_layers = 1;
        cfg.num_heads = 2;
        cfg.d_model = 8;
        cfg.d_kv = 4;
        cfg.d_ff = 16;
        cfg.vocab_size = 32;
        cfg.seed = seed;
        EncoderWeights w = init_encoder(cfg);
        if (zero_attention) {
            for (LayerWeights& l : w.layers) {
                for (double& v : l.wq.data)
                    v = 0.0;
                for (double& v : l.wk.data)
                    v = 0.0;
            }
            for (BucketTable& t : w.rel_bias)
                t.values.fill(0.0);
        }
        io::save_model(path, w);
        return w;
    }

    void write_seqs(const fs::path& path, std::size_t count, std::size_t length, int vocab,
                    std::uint64_t seed) const {
        std::vector<std::vector<int>> seqs(count);
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng(derive_seed(seed, i));
            seqs[i].resize(length);
            for (int& t : seqs[i])
                t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab)));
        }
        io::save_sequences(path, seqs);
    }
};

} // namespace

TEST_CASE("cli: calibrate") {
    CliFixture fx;
    fx.write_tiny_model(fx / "model.json");
    fx.write_seqs(fx / "short.jsonl", 2, 16, 32, 10);
    fx.write_seqs(fx / "long.jsonl", 2, 64, 32, 20);

    SUBCASE("happy path writes JSON plus grid CSV") {
        const std::string out = (fx / "cal.json").string();
        const int rc = fx.run("calibrate --model " + (fx / "model.json").string() +
                              " --short-seqs " + (fx / "short.jsonl").string() +
                              " --long-seqs " + (fx / "long.jsonl").string() +
                              " --mode max --out " + out);
        REQUIRE(rc == 0);
        const CalibrationResult r = io::load_calibration_result(out);
        bool on_grid = false;
        for (double tau : kTauGrid)
            on_grid = on_grid || tau == r.tau_ex;
        CHECK(on_grid);
        CHECK(r.l_tr == 16);
        CHECK(r.l_ex == 64);
        CHECK(r.grid.size() == kTauGrid.size());
        const std::string grid = fx.slurp(fx / "cal.grid.csv");
        CHECK(grid.rfind("tau,stat\n", 0) == 0);

        // determinism of the whole command, including under one thread
        const std::string json_a = fx.slurp(out);
        REQUIRE(fx.run("calibrate --model " + (fx / "model.json").string() + " --short-seqs " +
                       (fx / "short.jsonl").string() + " --long-seqs " +
                       (fx / "long.jsonl").string() + " --mode max --out " + out) == 0);
        CHECK(fx.slurp(out) == json_a);
        const std::string one_thread =
            "OMP_NUM_THREADS=1 " + std::string(ATTN_ALIGN_CLI_PATH) + " calibrate --model " +
            (fx / "model.json").string() + " --short-seqs " + (fx / "short.jsonl").string() +
            " --long-seqs " + (fx / "long.jsonl").string() + " --mode max --out " + out +
            " > /dev/null 2>&1";
        REQUIRE(WEXITSTATUS(std::system(one_thread.c_str())) == 0);
        CHECK(fx.slurp(out) == json_a);
    }

    SUBCASE("equal lengths exit 2 citing the precondition") {
        std::string log;
        const int rc = fx.run("calibrate --model " + (fx / "model.json").string() +
                                  " --short-seqs " + (fx / "short.jsonl").string() +
                                  " --long-seqs " + (fx / "short.jsonl").string() +
                                  " --mode ent --out " + (fx / "x.json").string(),
                              &log);
        CHECK(rc == 2);
        CHECK(log.find("exceed") != std::string::npos);
    }

    SUBCASE("unknown mode exits 2") {
        CHECK(fx.run("calibrate --model " + (fx / "model.json").string() + " --short-seqs " +
                     (fx / "short.jsonl").string() + " --long-seqs " +
                     (fx / "long.jsonl").string() + " --mode wat") == 2);
    }

    SUBCASE("missing file exits 2") {
        CHECK(fx.run("calibrate --model " + (fx / "nope.json").string() + " --short-seqs " +
                     (fx / "short.jsonl").string() + " --long-seqs " +
                     (fx / "long.jsonl").string() + " --mode max") == 2);
    }
}

TEST_CASE("cli: predict-tau") {
    CliFixture fx;

    SUBCASE("log column reproduces the published table") {
        const std::string out = (fx / "curve.csv").string();
        REQUIRE(fx.run("predict-tau --l-tr 512 --lengths 1024,2048,4096,8192,15000 "
                       "--sigma 1.0 --pmax-tr 0.3 --out " +
                       out) == 0);
        std::ifstream in(out);
        std::string header;
        std::getline(in, header);
        CHECK(header == "L_ex,tau_prop1,tau_prop2,tau_log");
        const double expected[] = {0.90, 0.82, 0.75, 0.69, 0.65};
        std::string line;
        std::size_t i = 0;
        while (std::getline(in, line)) {
            const std::size_t last = line.rfind(',');
            const double tau_log = std::stod(line.substr(last + 1));
            REQUIRE(i < 5);
            CHECK(tau_log == doctest::Approx(expected[i]).scale(1.0).epsilon(0.005));
            ++i;
        }
        CHECK(i == 5);
    }

    SUBCASE("multi-document and code tables") {
        const auto log_column = [&](const std::string& path) {
            std::vector<double> taus;
            std::ifstream in(path);
            std::string line;
            std::getline(in, line); // header
            while (std::getline(in, line))
                taus.push_back(std::stod(line.substr(line.rfind(',') + 1)));
            return taus;
        };

        const std::string out = (fx / "curve2.csv").string();
        REQUIRE(fx.run("predict-tau --l-tr 512 --lengths 1700,3300,5000 --sigma 1 "
                       "--pmax-tr 0.3 --out " +
                       out) == 0);
        const std::vector<double> qa = log_column(out);
        const double qa_expected[] = {0.84, 0.77, 0.73};
        REQUIRE(qa.size() == 3);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(qa[i] == doctest::Approx(qa_expected[i]).scale(1.0).epsilon(0.005));

        const std::string out3 = (fx / "curve3.csv").string();
        REQUIRE(fx.run("predict-tau --l-tr 768 --lengths 1000,2000 --sigma 1 --pmax-tr 0.3 "
                       "--out " +
                       out3) == 0);
        const std::vector<double> code = log_column(out3);
        const double code_expected[] = {0.96, 0.87};
        REQUIRE(code.size() == 2);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(code[i] == doctest::Approx(code_expected[i]).scale(1.0).epsilon(0.005));
    }

    SUBCASE("identity row is all ones") {
        const std::string out = (fx / "curve4.csv").string();
        REQUIRE(fx.run("predict-tau --l-tr 512 --lengths 512 --sigma 1 --pmax-tr 0.3 --out " +
                       out) == 0);
        CHECK(fx.slurp(out) == "L_ex,tau_prop1,tau_prop2,tau_log\n512,1,1,1\n");
    }

    SUBCASE("missing fit inputs exit 2") {
        std::string log;
        CHECK(fx.run("predict-tau --l-tr 512 --lengths 1024", &log) == 2);
        CHECK(log.find("--sigma") != std::string::npos);
    }

    SUBCASE("fits route reads the analyze CSV") {
        const std::vector<io::AnalyzeRow> rows = {{512, 0.3, 5.7, 1.0, 4.0},
                                                  {2048, 0.2, 6.9, 1.0, 4.0}};
        io::atomic_write_text(fx / "fits.csv", io::analyze_csv(rows));
        const std::string out = (fx / "curve5.csv").string();
        REQUIRE(fx.run("predict-tau --l-tr 512 --lengths 2048 --fits " +
                       (fx / "fits.csv").string() + " --out " + out) == 0);
        const std::string text = fx.slurp(out);
        // prop-2 column equals 1/sqrt(1 + 2 ln 4) with sigma 1
        CHECK(text.find("0.514849") != std::string::npos);

        // a grid length absent from the fits file is an input error
        CHECK(fx.run("predict-tau --l-tr 512 --lengths 4096 --fits " +
                     (fx / "fits.csv").string()) == 2);
    }
}

TEST_CASE("cli: analyze") {
    CliFixture fx;

    SUBCASE("zeroed attention gives the uniform statistics") {
        fx.write_tiny_model(fx / "zero.json", 2, true);
        fx.write_seqs(fx / "seqs.jsonl", 2, 64, 32, 30);
        const std::string out = (fx / "analyze.csv").string();
        REQUIRE(fx.run("analyze --model " + (fx / "zero.json").string() + " --seqs " +
                       (fx / "seqs.jsonl").string() + " --out " + out) == 0);
        const std::vector<io::AnalyzeRow> rows = io::read_analyze_csv(out);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].length == 64);
        CHECK(rows[0].p_max == doctest::Approx(1.0 / 64.0).epsilon(1e-6));
        CHECK(rows[0].entropy == doctest::Approx(std::log(64.0)).epsilon(1e-6));
        CHECK(rows[0].sigma == 0.0); // constant rows fall back to sigma 0
    }

    SUBCASE("dispersal ordering across two lengths") {
        fx.write_tiny_model(fx / "model.json", 3);
        std::vector<std::vector<int>> seqs;
        for (std::uint64_t s = 0; s < 2; ++s) {
            Rng rng(derive_seed(40, s));
            std::vector<int> a(24), b(96);
            for (int& t : a)
                t = static_cast<int>(rng.uniform_int(32));
            for (int& t : b)
                t = static_cast<int>(rng.uniform_int(32));
            seqs.push_back(a);
            seqs.push_back(b);
        }
        io::save_sequences(fx / "mixed.jsonl", seqs);
        const std::string out = (fx / "analyze2.csv").string();
        REQUIRE(fx.run("analyze --model " + (fx / "model.json").string() + " --seqs " +
                       (fx / "mixed.jsonl").string() + " --out " + out) == 0);
        const std::vector<io::AnalyzeRow> rows = io::read_analyze_csv(out);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].length == 24);
        CHECK(rows[1].length == 96);
        CHECK(rows[1].entropy > rows[0].entropy);
        CHECK(rows[1].p_max < rows[0].p_max);
        CHECK(rows[0].sigma > 0.0);
    }

    SUBCASE("empty sequence file exits 2") {
        fx.write_tiny_model(fx / "model.json");
        io::atomic_write_text(fx / "empty.jsonl", "");
        CHECK(fx.run("analyze --model " + (fx / "model.json").string() + " --seqs " +
                     (fx / "empty.jsonl").string()) == 2);
    }
}

TEST_CASE("cli: oracle") {
    CliFixture fx;

    SUBCASE("defaults pass") {
        std::string log;
        const int rc = fx.run("oracle --seed 3", &log);
        CHECK(rc == 0);
        CHECK(log.find("FAIL") == std::string::npos);
        CHECK(log.find("PASS E[e^(l/tau)]") != std::string::npos);
        CHECK(log.find("PASS qq linearity") != std::string::npos);
    }

    SUBCASE("sabotaged entropy constant is detected") {
        std::string log;
        const int rc = fx.run("oracle --seed 3 --inject-entropy-bug", &log);
        CHECK(rc == 1);
        CHECK(log.find("FAIL entropy approximation") != std::string::npos);
    }

    SUBCASE("small sample counts warn") {
        std::string log;
        const int rc = fx.run("oracle --seed 3 --samples 100000", &log);
        CHECK(rc == 0);
        CHECK(log.find("warning") != std::string::npos);

        // below the sample floor the warning still prints, then the
        // precondition rejects the run
        log.clear();
        const int rc2 = fx.run("oracle --seed 3 --samples 100", &log);
        CHECK(rc2 == 2);
        CHECK(log.find("warning") != std::string::npos);
        CHECK(log.find("1e3") != std::string::npos);
    }
}

TEST_CASE("cli: demo, bucket-table, qq") {
    CliFixture fx;

    SUBCASE("demo writes the two-policy curve") {
        const std::string out = (fx / "needle.csv").string();
        std::string log;
        REQUIRE(fx.run("demo --gap 4 --sigma 1 --lengths 64,256,1024 --out " + out, &log) == 0);
        const std::string text = fx.slurp(out);
        CHECK(text.rfind("L,tau,p_needle,policy\n", 0) == 0);
        CHECK(text.find("fixed_1") != std::string::npos);
        CHECK(text.find("prop2_aligned") != std::string::npos);
        CHECK(log.find("correction_achievable") != std::string::npos);
    }

    SUBCASE("bucket-table profiles a stored table") {
        io::atomic_write_text(
            fx / "table.json",
            R"({"relative_attention_bias": [[0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,)"
            R"(18,19,20,21,22,23,24,25,26,27,28,29,30,31]]})");
        const std::string out = (fx / "profile.csv").string();
        REQUIRE(fx.run("bucket-table --model " + (fx / "table.json").string() +
                       " --length 8 --query-pos 0 --out " + out) == 0);
        CHECK(fx.slurp(out) ==
              "n,bias\n0,0\n1,17\n2,18\n3,19\n4,20\n5,21\n6,22\n7,23\n");

        // head out of range
        CHECK(fx.run("bucket-table --model " + (fx / "table.json").string() +
                     " --length 8 --head 5") == 2);
    }

    SUBCASE("qq on synthetic samples reports linearity") {
        const std::string out = (fx / "qq.csv").string();
        std::string log;
        REQUIRE(fx.run("qq --sigma 1 --samples 10000 --seed 9 --out " + out, &log) == 0);
        CHECK(log.find("linearity=0.99") != std::string::npos);
        const std::string text = fx.slurp(out);
        CHECK(text.rfind("theoretical,empirical\n", 0) == 0);
    }

    SUBCASE("qq on the toy encoder's average logit vector") {
        fx.write_tiny_model(fx / "model.json", 6);
        fx.write_seqs(fx / "seqs.jsonl", 2, 48, 32, 60);
        std::string log;
        REQUIRE(fx.run("qq --model " + (fx / "model.json").string() + " --seqs " +
                           (fx / "seqs.jsonl").string() + " --out " + (fx / "qq2.csv").string(),
                       &log) == 0);
        CHECK(log.find("linearity=") != std::string::npos);
    }
}

TEST_CASE("cli: usage errors") {
    CliFixture fx;
    CHECK(fx.run("") == 2);
    CHECK(fx.run("no-such-command") == 2);
    std::string log;
    CHECK(fx.run("--help", &log) == 0);
    CHECK(log.find("calibrate") != std::string::npos);
}

TEST_CASE("cli: length cross-checks and single-length form") {
    CliFixture fx;
    fx.write_tiny_model(fx / "model.json");
    fx.write_seqs(fx / "short.jsonl", 1, 16, 32, 1);
    fx.write_seqs(fx / "long.jsonl", 1, 48, 32, 2);

    // a wrong --l-ex cross-check is an input error
    CHECK(fx.run("calibrate --model " + (fx / "model.json").string() + " --short-seqs " +
                 (fx / "short.jsonl").string() + " --long-seqs " + (fx / "long.jsonl").string() +
                 " --mode ent --l-tr 16 --l-ex 999 --out " + (fx / "c.json").string()) == 2);
    CHECK(fx.run("calibrate --model " + (fx / "model.json").string() + " --short-seqs " +
                 (fx / "short.jsonl").string() + " --long-seqs " + (fx / "long.jsonl").string() +
                 " --mode ent --l-tr 16 --l-ex 48 --out " + (fx / "c.json").string()) == 0);

    // --l-ex is the single-length spelling of --lengths
    const std::string out = (fx / "single.csv").string();
    REQUIRE(fx.run("predict-tau --l-tr 512 --l-ex 1024 --sigma 1 --pmax-tr 0.3 --out " + out) ==
            0);
    CHECK(fx.slurp(out).find("1024,") != std::string::npos);
    CHECK(fx.run("predict-tau --l-tr 512 --sigma 1 --pmax-tr 0.3") == 2);
}

TEST_CASE("cli: seed falls back to ATTN_ALIGN_SEED") {
    CliFixture fx;
    const fs::path a = fx / "a.csv";
    const fs::path b = fx / "b.csv";
    const fs::path c = fx / "c.csv";
    REQUIRE(fx.run("qq --sigma 1 --samples 500 --seed 31 --out " + a.string()) == 0);
    const fs::path log = fx.dir / "env.log";
    const std::string cmd = "ATTN_ALIGN_SEED=31 " + std::string(ATTN_ALIGN_CLI_PATH) +
                            " qq --sigma 1 --samples 500 --out " + b.string() + " > " +
                            log.string() + " 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(fx.slurp(a) == fx.slurp(b));
    // an explicit flag beats the environment
    const std::string cmd2 = "ATTN_ALIGN_SEED=99 " + std::string(ATTN_ALIGN_CLI_PATH) +
                             " qq --sigma 1 --samples 500 --seed 31 --out " + c.string() +
                             " > " + log.string() + " 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd2.c_str())) == 0);
    CHECK(fx.slurp(a) == fx.slurp(c));
}
