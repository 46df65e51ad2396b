#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "infmem/autodiff.hpp"
#include "infmem/basis.hpp"
#include "infmem/tensor.hpp"

namespace infmem {

using Rng = std::mt19937_64;

enum class UpdateMode { linspace, sticky };

// Continuous attention densities of one layer: heads × queries, head-major.
struct AttentionRecord {
    std::size_t heads = 0;
    std::size_t queries = 0;
    std::vector<double> mean;
    std::vector<double> variance;

    [[nodiscard]] bool empty() const noexcept { return mean.empty(); }
};

// Continuous long-term memory X̄(t) = Bᵀψ(t). The coefficient matrix is N×e for the
// lifetime of the state no matter how many updates it absorbs.
class MemoryState {
public:
    MemoryState() = default;
    MemoryState(std::shared_ptr<const BasisSpec> spec, std::size_t embed, double tau, std::size_t samples,
                double lambda, std::shared_ptr<RegressionCache> cache = nullptr);

    [[nodiscard]] const BasisSpec& spec() const { return *spec_; }
    [[nodiscard]] const std::shared_ptr<const BasisSpec>& spec_ptr() const noexcept { return spec_; }
    [[nodiscard]] const Tensor& coeffs() const noexcept { return coeffs_; }
    [[nodiscard]] std::size_t basis_count() const noexcept { return coeffs_.rows(); }
    [[nodiscard]] std::size_t embed() const noexcept { return coeffs_.cols(); }
    [[nodiscard]] double tau() const noexcept { return tau_; }
    [[nodiscard]] std::size_t samples() const noexcept { return samples_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] std::uint64_t update_count() const noexcept { return update_count_; }
    [[nodiscard]] bool initialized() const noexcept { return update_count_ > 0; }
    [[nodiscard]] RegressionCache& cache() const { return *cache_; }

    // Restores a state read back from a checkpoint.
    void restore(Tensor coeffs, std::uint64_t update_count);

private:
    friend MemoryState update(const MemoryState&, const Tensor&, UpdateMode, std::span<const AttentionRecord>,
                              std::size_t, Rng&);

    std::shared_ptr<const BasisSpec> spec_;
    std::shared_ptr<RegressionCache> cache_;
    Tensor coeffs_;
    double tau_ = 0.75;
    std::size_t samples_ = 0;
    double lambda_ = 0.5;
    std::uint64_t update_count_ = 0;
};

// Bᵀψ(t).
std::vector<double> evaluate(const MemoryState& mem, double t);
// Rows are Bᵀψ(t_m).
Tensor evaluate_many(const MemoryState& mem, std::span<const double> positions);

// E_{N(t; μ, σ²)}[ψ_j(t)] = N(μ; μ̃_j, σ² + σ̃_j²), integrated over the whole real line.
std::vector<double> expected_basis(double mean, double variance, const BasisSpec& spec);
// Differentiable batch form: mean, variance are L×1; result is L×N.
Var expected_basis(const Var& mean, const Var& variance, const BasisSpec& spec);

// Mass of N(μ, σ²) on [a, b]; infinite bounds are allowed.
double gaussian_interval_mass(double mean, double variance, double a, double b);

struct StickySample {
    std::vector<double> positions;  // sorted, in [0,1]
    std::vector<double> bin_probs;
    bool fallback = false;          // no attention mass; positions are linearly spaced
};

// Histogram of previous-step attention mass over `bins` equal bins of [0,1], then `samples`
// draws: bin ~ Categorical(p), position uniform inside the bin.
StickySample sticky_locations(std::span<const AttentionRecord> records, std::size_t bins, std::size_t samples,
                              Rng& rng);

// M points linearly spaced over [0,1] (a single point sits at 0.5).
std::vector<double> linspace_locations(std::size_t samples);

// Contract-and-append: samples the old signal at M locations (linearly spaced or sticky),
// places those rows linearly over [0,τ] and x_new over (τ,1], and refits B. The first update
// fits x_new over t_i = i/L. `x_new` must already be detached from any graph.
MemoryState update(const MemoryState& mem, const Tensor& x_new, UpdateMode mode,
                   std::span<const AttentionRecord> records, std::size_t bins, Rng& rng);

// Positions used by update(): M past rows then L new rows.
std::vector<double> update_positions(std::size_t samples, std::size_t new_rows, double tau);

// Per-head read parameters. Keys and values project the shared coefficient matrix B (N×e)
// down to the head width d.
struct LtmHeadParams {
    Var key;       // e×d
    Var value;     // e×d
};

struct LtmAffine {
    Var mean_w;    // N×1
    Var mean_b;    // 1×1
    Var var_w;     // N×1
    Var var_b;     // 1×1
};

struct LtmParams {
    std::vector<LtmHeadParams> heads;
    std::vector<LtmAffine> affine;  // one per head, or a single shared map
    Var out;                        // e×e

    [[nodiscard]] const LtmAffine& affine_for(std::size_t h) const { return affine.size() == 1 ? affine[0] : affine[h]; }
};

struct LtmOutput {
    Var z;                      // L×e
    std::vector<Var> mean;      // per head, L×1
    std::vector<Var> variance;  // per head, L×1
    AttentionRecord record;
};

// Continuous attention over the memory for each head's queries (L×d each). Gradients reach
// the queries and params; B is read as a constant.
LtmOutput ltm_attend(const MemoryState& mem, std::span<const Var> queries, const LtmParams& params);

}  // namespace infmem
