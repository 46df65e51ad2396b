#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "infmem/config.hpp"
#include "infmem/experiment.hpp"
#include "infmem/io.hpp"

namespace infmem {

// Dataset named by the config: read from data_dir when set, generated in memory otherwise.
std::vector<SortingInstance> load_split(const RunConfig& cfg, const std::string& split);

void gen_data(const RunConfig& cfg);

struct TrainSummary {
    std::uint64_t steps = 0;
    std::filesystem::path checkpoint;
    double last_nll = 0.0;
};

// Trains toward cfg.train.steps (or `stop_at` if smaller and nonzero), appending to
// <out>/train.csv and writing <out>/checkpoint.bin. With `resume`, parameters, optimizer
// moments and the step counter come from that checkpoint.
TrainSummary train_run(const RunConfig& cfg, const std::filesystem::path& resume = {}, std::uint64_t stop_at = 0);

// Appends (split, accuracy, nll) to <out>/eval.csv.
EvalResult eval_run(const std::filesystem::path& checkpoint, const std::string& split,
                    const std::filesystem::path& out_dir, const std::string& data_dir_override = {});

struct SweepOptions {
    std::vector<std::size_t> lengths{1024};
    std::vector<std::size_t> basis{16, 32, 64, 128, 256, 512};
    std::size_t embed = 32;
    std::size_t seeds = 10;
    std::uint64_t seed = 1;
    std::vector<double> widths{0.01, 0.05};
    double ridge = 0.5;
    // Downstream accuracy per N: train a model with this config for `train_steps` on
    // instances of the swept length. 0 skips training and leaves accuracy as nan.
    std::uint64_t train_steps = 0;
    RunConfig run;
};

struct SweepRow {
    std::size_t length = 0;
    std::size_t basis = 0;
    double mse = 0.0;
    double accuracy = 0.0;
};

// Mean squared reconstruction error of i.i.d. N(0,1) sequences (length × embed) after a
// ridge fit with N basis functions, averaged over seeds.
double reconstruction_mse(std::size_t length, std::size_t embed, std::size_t basis, std::span<const double> widths,
                          double ridge, std::size_t seeds, std::uint64_t seed);

std::vector<SweepRow> sweep_basis(const SweepOptions& opt, const std::filesystem::path& csv);

struct BenchOptions {
    std::size_t basis = 64;
    std::size_t embed = 64;
    std::size_t length = 64;  // rows per update
    std::size_t heads = 2;
    std::size_t updates = 100;
    std::size_t repeats = 5;
    UpdateMode mode = UpdateMode::linspace;
    std::uint64_t seed = 1;
};

struct BenchRow {
    std::uint64_t update_count = 0;
    std::size_t state_bytes = 0;
    double update_ms = 0.0;
    double read_ms = 0.0;
};

std::vector<BenchRow> bench_memory(const BenchOptions& opt, const std::filesystem::path& csv);

// Runs one instance of the split through the checkpointed model and writes
// memory_samples.csv (layer, t, value_0..) and sticky_hist.csv (layer, bin, lo, hi, prob).
void inspect_memory(const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
                    const std::string& split, std::size_t index, std::size_t points, std::size_t bins);

}  // namespace infmem
