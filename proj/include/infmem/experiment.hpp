#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "infmem/model.hpp"
#include "infmem/tasks.hpp"

namespace infmem {

struct InstanceResult {
    double nll = 0.0;           // summed over target positions
    double kl = 0.0;            // summed over LTM queries of the segments that carry loss
    std::size_t loss_tokens = 0;
    std::size_t tokens = 0;     // all positions fed through the model
    std::vector<int> predicted; // argmax at each target position (teacher forced)
    ModelState state;           // after the last segment
};

// Feeds input, SEP, target through the model in segments of at most L positions, the
// first segment taking the remainder so the last one is full. Loss is on target positions
// only. With `train`, segments holding loss positions are differentiated and their
// gradients, multiplied by `grad_scale`, accumulate into the model parameters.
InstanceResult run_instance(const Model& model, const SortingInstance& inst, std::uint64_t state_seed, bool train,
                            double grad_scale = 1.0);

// Splits n positions into segment lengths (≤ L each, first one shortest).
std::vector<std::size_t> segment_lengths(std::size_t n, std::size_t l);

struct TrainOptions {
    std::uint64_t seed = 1;
    std::uint64_t steps = 1000;
    std::size_t batch = 1;
    double lr = 2.5e-4;
    double clip = 0.25;
    std::uint64_t emit_every = 10;
    bool operator==(const TrainOptions&) const = default;
};

struct TrainRow {
    std::uint64_t step = 0;
    double nll = 0.0;   // per target token
    double kl = 0.0;    // per target token
    double total = 0.0;
    double lr = 0.0;
    double tokens_per_s = 0.0;
};

// Runs optimizer steps (adam.steps_taken(), until]. Batch composition and memory sampling
// depend only on (seed, step), so a run split by a checkpoint replays exactly. Rows are
// emitted every opt.emit_every steps and at step opt.steps.
void train(Model& model, Adam& adam, std::span<const SortingInstance> data, const TrainOptions& opt,
           std::uint64_t until, const std::function<void(const TrainRow&)>& emit, ModelState* last_state = nullptr);

struct EvalResult {
    double accuracy = 0.0;
    double nll = 0.0;  // per target token
    std::size_t instances = 0;
};

EvalResult evaluate_split(const Model& model, std::span<const SortingInstance> data, std::uint64_t seed);

}  // namespace infmem
