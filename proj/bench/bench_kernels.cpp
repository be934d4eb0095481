// Kernel benchmark: OpenMP-parallel production paths against the serial
// reference implementations. Run as:
//   bench_kernels [length] [repeats]

#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdlib>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "attnalign/analytic.hpp"
#include "attnalign/calibration.hpp"
#include "attnalign/encoder.hpp"
#include "attnalign/reference.hpp"
#include "attnalign/rng.hpp"

using namespace attnalign;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::vector<int> random_tokens(std::size_t n, int vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> t(n);
    for (int& v : t)
        v = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab)));
    return t;
}

} // namespace

int main(int argc, char** argv) {
    const std::size_t length = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 512;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 3;

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (compiled without OpenMP)\n");
#endif

    EncoderConfig cfg;
    cfg.seed = 7;
    const EncoderWeights w = init_encoder(cfg);
    const std::vector<int> toks = random_tokens(length, cfg.vocab_size, 11);

    std::printf("%-34s %10s %10s %8s\n", "kernel", "parallel", "serial", "speedup");

    {
        double tp = 0.0, ts = 0.0;
        volatile double guard = 0.0;
        for (int r = 0; r < repeats; ++r) {
            auto t0 = clock_type::now();
            const ForwardTrace a = forward(w, toks, 0.8);
            tp += seconds_since(t0);
            guard = guard + a.mean_entropy();

            t0 = clock_type::now();
            const ForwardTrace b = ref::forward(w, toks, 0.8);
            ts += seconds_since(t0);
            guard = guard + b.mean_entropy();
        }
        std::printf("%-34s %9.3fs %9.3fs %7.2fx\n", "encoder forward (R2 H4 d64)",
                    tp / repeats, ts / repeats, ts / tp);
        (void)guard;
    }

    {
        // synthetic logit rows: generation + per-row softmax statistics
        const std::size_t rows = 4096;
        const GaussianLogitSource src(length, rows, 1.0, 3);
        double tp = 0.0, ts = 0.0;
        volatile double guard = 0.0;
        for (int r = 0; r < repeats; ++r) {
            auto t0 = clock_type::now();
            guard = guard + find_s(src, 0.8, AlignmentMode::entropy);
            tp += seconds_since(t0);

            // serial reference does the same work row by row
            t0 = clock_type::now();
            double mean = 0.0;
            std::vector<double> row(length);
            for (std::size_t i = 0; i < rows; ++i) {
                Rng rng(derive_seed(3, i));
                for (double& v : row)
                    v = rng.normal();
                const std::vector<double> probs = ref::softmax_row(row, 0.8);
                double entropy = 0.0;
                for (double p : probs)
                    if (p > 0.0)
                        entropy -= p * std::log(p);
                mean += entropy;
            }
            guard = guard + mean / static_cast<double>(rows);
            ts += seconds_since(t0);
        }
        std::printf("%-34s %9.3fs %9.3fs %7.2fx\n", "gaussian rows + softmax stats",
                    tp / repeats, ts / repeats, ts / tp);
        (void)guard;
    }

    {
        // Monte-Carlo moment oracle; serial baseline forced via one thread
        const std::size_t n = 2000000;
        double tp = 0.0, ts = 0.0;
        volatile double guard = 0.0;
        for (int r = 0; r < repeats; ++r) {
            auto t0 = clock_type::now();
            guard = guard + mc_oracle_expectations(1.0, 1.0, n, 5).exp_tau_empirical;
            tp += seconds_since(t0);

#ifdef _OPENMP
            const int prev = omp_get_max_threads();
            omp_set_num_threads(1);
#endif
            t0 = clock_type::now();
            guard = guard + mc_oracle_expectations(1.0, 1.0, n, 5).exp_tau_empirical;
            ts += seconds_since(t0);
#ifdef _OPENMP
            omp_set_num_threads(prev);
#endif
        }
        std::printf("%-34s %9.3fs %9.3fs %7.2fx\n", "mc moment oracle (2e6 samples)",
                    tp / repeats, ts / repeats, ts / tp);
        (void)guard;
    }

    return 0;
}
