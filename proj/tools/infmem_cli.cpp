// infmem command line: thin layer over the C API in libinfmem.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "infmem/infmem.h"

namespace {

struct CliFailure {
    infmem_status status;
};

void check(infmem_status s) {
    if (s != INFMEM_OK) {
        throw CliFailure{s};
    }
}

struct ConfigHandle {
    infmem_config* p = nullptr;
    ~ConfigHandle() { infmem_config_free(p); }
};

// defaults < --config file < INFMEM_* environment < flags
void load_config(ConfigHandle& h, const std::string& file, const std::vector<std::string>& sets) {
    if (file.empty()) {
        check(infmem_config_new(&h.p));
    } else {
        check(infmem_config_load(file.c_str(), &h.p));
    }
    check(infmem_config_apply_env(h.p));
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
        }
        check(infmem_config_set(h.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
}

void set(ConfigHandle& h, const char* key, const std::string& value) {
    check(infmem_config_set(h.p, key, value.c_str()));
}

std::string get(const ConfigHandle& h, const char* key) {
    size_t n = 0;
    check(infmem_config_get(h.p, key, nullptr, 0, &n));
    std::string s(n, '\0');
    check(infmem_config_get(h.p, key, s.data(), s.size(), &n));
    s.resize(n - 1);
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous unbounded long-term memory: data, training and memory experiments", "infmem"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(infmem_version()));

    std::string config_file;
    std::vector<std::string> sets;
    auto add_config_flags = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "Config file ([section] key = value)");
        sub->add_option("--set", sets, "Override one config entry, e.g. --set train.steps=50")->take_all();
    };

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Write train/val/test sorting datasets");
    add_config_flags(gen);
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Dataset directory (default: data.dir)");
    gen->add_option("--seed", gen_seed, "Dataset seed (default: data.seed)");

    // train
    auto* tr = app.add_subcommand("train", "Train a model, writing train.csv and checkpoints");
    add_config_flags(tr);
    std::uint64_t train_seed = 0;
    std::string train_out;
    std::string resume;
    std::uint64_t stop_at = 0;
    std::uint64_t steps = 0;
    tr->add_option("--seed", train_seed, "Training seed (default: train.seed)");
    tr->add_option("--out", train_out, "Run directory (default: run.out)");
    tr->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
    tr->add_option("--stop-at", stop_at, "Stop after this optimizer step");
    tr->add_option("--steps", steps, "Total optimizer steps (default: train.steps)");

    // eval
    auto* ev = app.add_subcommand("eval", "Accuracy and NLL of a checkpoint on a split");
    std::string ckpt;
    std::string split = "test";
    std::string eval_out;
    std::string eval_data;
    ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    ev->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--out", eval_out, "Directory for eval.csv (default: the checkpoint's directory)");
    ev->add_option("--data", eval_data, "Dataset directory overriding the checkpoint's");

    // sweep-basis
    auto* sw = app.add_subcommand("sweep-basis", "Regression error (and accuracy) against basis count");
    add_config_flags(sw);
    infmem_sweep_options sopt;
    infmem_sweep_defaults(&sopt);
    std::vector<std::size_t> lengths(sopt.lengths, sopt.lengths + sopt.n_lengths);
    std::vector<std::size_t> basis(sopt.basis, sopt.basis + sopt.n_basis);
    std::string sweep_out = "runs/sweep";
    sw->add_option("--lengths", lengths, "Signal lengths")->delimiter(',');
    sw->add_option("--basis", basis, "Basis counts N")->delimiter(',');
    sw->add_option("--embed", sopt.embed, "Signal width");
    sw->add_option("--seeds", sopt.seeds, "Random signals per point");
    sw->add_option("--seed", sopt.seed, "Master seed");
    sw->add_option("--train-steps", sopt.train_steps, "Also train and evaluate a model per N for this many steps");
    sw->add_option("--out", sweep_out, "Directory for sweep.csv");

    // bench-memory
    auto* bm = app.add_subcommand("bench-memory", "Update/read cost and state size against update count");
    infmem_bench_options bopt;
    infmem_bench_defaults(&bopt);
    bool sticky = false;
    std::string bench_out = "runs/bench";
    bm->add_option("--basis", bopt.basis, "Basis functions N");
    bm->add_option("--embed", bopt.embed, "Embedding size");
    bm->add_option("--length", bopt.length, "Rows absorbed per update");
    bm->add_option("--heads", bopt.heads, "Read heads");
    bm->add_option("--updates", bopt.updates, "Number of updates");
    bm->add_option("--repeats", bopt.repeats, "Timing repeats per update (median)");
    bm->add_flag("--sticky", sticky, "Sticky resampling instead of linear");
    bm->add_option("--seed", bopt.seed, "Seed");
    bm->add_option("--out", bench_out, "Directory for bench.csv");

    // inspect-memory
    auto* im = app.add_subcommand("inspect-memory", "Dump memory samples and sticky histograms");
    std::string im_ckpt;
    std::string im_split = "val";
    std::string im_out;
    std::size_t index = 0;
    std::size_t points = 200;
    std::size_t bins = 32;
    im->add_option("--checkpoint", im_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    im->add_option("--split", im_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    im->add_option("--index", index, "Instance index in the split");
    im->add_option("--points", points, "Evaluation points over [0,1]");
    im->add_option("--bins", bins, "Histogram bins");
    im->add_option("--out", im_out, "Output directory (default: the checkpoint's directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    auto parent_dir = [](const std::string& file) {
        const auto slash = file.find_last_of('/');
        return slash == std::string::npos ? std::string(".") : file.substr(0, slash);
    };

    try {
        if (gen->parsed()) {
            ConfigHandle c;
            load_config(c, config_file, sets);
            if (!gen_out.empty()) set(c, "data.dir", gen_out);
            if (gen->count("--seed")) set(c, "data.seed", std::to_string(gen_seed));
            check(infmem_gen_data(c.p));
            std::printf("wrote dataset to %s\n", get(c, "data.dir").c_str());
        } else if (tr->parsed()) {
            ConfigHandle c;
            load_config(c, config_file, sets);
            if (tr->count("--seed")) set(c, "train.seed", std::to_string(train_seed));
            if (!train_out.empty()) set(c, "run.out", train_out);
            if (tr->count("--steps")) set(c, "train.steps", std::to_string(steps));
            std::uint64_t done = 0;
            check(infmem_train(c.p, resume.empty() ? nullptr : resume.c_str(), stop_at, &done));
            std::printf("trained to step %llu in %s\n", static_cast<unsigned long long>(done),
                        get(c, "run.out").c_str());
        } else if (ev->parsed()) {
            double acc = 0.0;
            double nll = 0.0;
            const std::string out = eval_out.empty() ? parent_dir(ckpt) : eval_out;
            check(infmem_eval(ckpt.c_str(), split.c_str(), out.c_str(), eval_data.c_str(), &acc, &nll));
            std::printf("%s accuracy %.4f nll %.4f\n", split.c_str(), acc, nll);
        } else if (sw->parsed()) {
            ConfigHandle c;
            load_config(c, config_file, sets);
            sopt.lengths = lengths.data();
            sopt.n_lengths = lengths.size();
            sopt.basis = basis.data();
            sopt.n_basis = basis.size();
            sopt.run = c.p;
            const std::string csv = sweep_out + "/sweep.csv";
            std::error_code ec;
            std::filesystem::create_directories(sweep_out, ec);
            check(infmem_sweep_basis(&sopt, csv.c_str()));
            std::printf("wrote %s\n", csv.c_str());
        } else if (bm->parsed()) {
            bopt.sticky = sticky ? 1 : 0;
            std::error_code ec;
            std::filesystem::create_directories(bench_out, ec);
            const std::string csv = bench_out + "/bench.csv";
            check(infmem_bench_memory(&bopt, csv.c_str()));
            std::printf("wrote %s\n", csv.c_str());
        } else if (im->parsed()) {
            const std::string out = im_out.empty() ? parent_dir(im_ckpt) : im_out;
            check(infmem_inspect_memory(im_ckpt.c_str(), out.c_str(), im_split.c_str(), index, points, bins));
            std::printf("wrote %s/memory_samples.csv and %s/sticky_hist.csv\n", out.c_str(), out.c_str());
        }
    } catch (const CliFailure& f) {
        std::fprintf(stderr, "infmem: %s: %s\n", infmem_status_name(f.status), infmem_last_error());
        return 1;
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "infmem: %s\n", e.what());
        return 2;
    }
    return 0;
}
