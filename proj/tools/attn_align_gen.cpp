// attn-align-gen: fixtures for the attn-align workflow — seeded toy encoder
// weights, random token sequences, and the synthetic retrieval tasks.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attnalign/encoder.hpp"
#include "attnalign/io.hpp"
#include "attnalign/rng.hpp"
#include "attnalign/tasks.hpp"

using namespace attnalign;

int main(int argc, char** argv) {
    CLI::App app{"Fixture generator for the attention alignment toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    if (const char* env = std::getenv("ATTN_ALIGN_SEED"))
        seed = std::strtoull(env, nullptr, 10);

    EncoderConfig cfg;
    std::string out = "model.json";
    CLI::App* m = app.add_subcommand("init-model", "Write seeded toy encoder weights");
    m->add_option("--layers", cfg.num_layers);
    m->add_option("--heads", cfg.num_heads);
    m->add_option("--d-model", cfg.d_model);
    m->add_option("--d-kv", cfg.d_kv);
    m->add_option("--d-ff", cfg.d_ff);
    m->add_option("--vocab", cfg.vocab_size);
    m->add_option("--out", out);

    std::size_t count = 8, length = 128;
    int vocab = 256;
    std::string seq_out = "seqs.jsonl";
    CLI::App* s = app.add_subcommand("gen-seqs", "Write uniform random token sequences (JSONL)");
    s->add_option("--count", count);
    s->add_option("--length", length)->required();
    s->add_option("--vocab", vocab);
    s->add_option("--out", seq_out);

    std::vector<int> passkey = {7, 3, 9, 1};
    std::size_t junk_len = 1000, n_tasks = 1;
    std::string task_out = "tasks.jsonl";
    CLI::App* pk = app.add_subcommand("gen-passkey", "Write passkey retrieval tasks (JSONL)");
    pk->add_option("--passkey", passkey)->delimiter(',');
    pk->add_option("--junk-len", junk_len);
    pk->add_option("--count", n_tasks);
    pk->add_option("--out", task_out);

    std::size_t n_lines = 100;
    CLI::App* ln = app.add_subcommand("gen-lines", "Write line retrieval tasks (JSONL)");
    ln->add_option("--n-lines", n_lines);
    ln->add_option("--count", n_tasks);
    ln->add_option("--out", task_out);

    for (CLI::App* sub : {m, s, pk, ln})
        sub->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(m)) {
            cfg.seed = seed;
            io::save_model(out, init_encoder(cfg));
            std::printf("wrote %s\n", out.c_str());
        } else if (app.got_subcommand(s)) {
            std::vector<std::vector<int>> seqs(count);
            for (std::size_t i = 0; i < count; ++i) {
                Rng rng(derive_seed(seed, i));
                seqs[i].resize(length);
                for (int& t : seqs[i])
                    t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab)));
            }
            io::save_sequences(seq_out, seqs);
            std::printf("wrote %s (%zu sequences of length %zu)\n", seq_out.c_str(), count,
                        length);
        } else if (app.got_subcommand(pk)) {
            std::vector<std::vector<int>> seqs;
            for (std::size_t i = 0; i < n_tasks; ++i)
                seqs.push_back(gen_passkey(passkey, junk_len, derive_seed(seed, i)).tokens);
            io::save_sequences(task_out, seqs);
            std::printf("wrote %s (%zu tasks)\n", task_out.c_str(), n_tasks);
        } else if (app.got_subcommand(ln)) {
            std::vector<std::vector<int>> seqs;
            for (std::size_t i = 0; i < n_tasks; ++i)
                seqs.push_back(gen_lines(n_lines, derive_seed(seed, i)).tokens);
            io::save_sequences(task_out, seqs);
            std::printf("wrote %s (%zu tasks)\n", task_out.c_str(), n_tasks);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
