#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "infmem/autodiff.hpp"
#include "infmem/basis.hpp"
#include "infmem/memory.hpp"
#include "infmem/tensor.hpp"

namespace infmem {

enum class LtmMode { off, linspace, sticky };
enum class KlForm { half_log, standard };

LtmMode parse_ltm_mode(std::string_view s);
std::string_view ltm_mode_name(LtmMode m);
KlForm parse_kl_form(std::string_view s);
std::string_view kl_form_name(KlForm f);

struct ModelConfig {
    std::size_t vocab = 21;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t embed = 64;
    std::size_t input_len = 64;   // L
    std::size_t stm_len = 64;     // L_STM
    std::size_t ff_hidden = 256;
    std::size_t basis_count = 64; // N
    std::vector<double> basis_widths{0.01, 0.05};
    double tau = 0.75;
    std::size_t samples = 0;      // M; 0 means N
    std::size_t sticky_bins = 32; // D
    double ridge = 0.5;
    double kl_weight = 1e-5;
    double kl_sigma0 = 0.05;
    KlForm kl_form = KlForm::half_log;
    bool gate = true;
    bool gate_depthwise = false;
    bool shared_affine = false;
    LtmMode ltm = LtmMode::linspace;

    [[nodiscard]] std::size_t head_dim() const { return embed / heads; }
    [[nodiscard]] std::size_t memory_samples() const { return samples == 0 ? basis_count : samples; }
    // Distinct relative distances a query can see: 0 .. L_STM + L - 1.
    [[nodiscard]] std::size_t rel_span() const { return stm_len + input_len; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
    Var ln1_gain, ln1_bias;
    Var wq, wk, wv, wr;  // e×e
    Var rel_bias;        // H × rel_span
    LtmParams ltm;
    std::vector<Var> gate_w;  // 3 taps: e×e, or 1×e when depthwise
    Var gate_b;               // 1×e
    Var ln2_gain, ln2_bias;
    Var ff_w1, ff_b1, ff_w2, ff_b2;
};

class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] const std::shared_ptr<const BasisSpec>& basis() const noexcept { return basis_; }
    [[nodiscard]] const std::shared_ptr<RegressionCache>& cache() const noexcept { return cache_; }

    // Stable order; names are unique.
    [[nodiscard]] const std::vector<std::pair<std::string, Var>>& parameters() const noexcept { return named_; }
    [[nodiscard]] Var& parameter(std::string_view name);
    [[nodiscard]] std::size_t parameter_count() const;
    void zero_grad();

    Var embedding;
    std::vector<LayerParams> layers;
    Var lnf_gain, lnf_bias;
    Var out_w, out_b;

private:
    ModelConfig config_;
    std::shared_ptr<const BasisSpec> basis_;
    std::shared_ptr<RegressionCache> cache_;
    std::vector<std::pair<std::string, Var>> named_;
};

struct LayerState {
    Var stm;  // cached inputs of earlier segments, up to L_STM rows; always read through stop-gradient
    MemoryState memory;
    AttentionRecord record;  // LTM densities of the latest segment
};

struct ModelState {
    std::vector<LayerState> layers;
    Rng rng;
};

ModelState initial_state(const Model& model, std::uint64_t seed);

struct ForwardResult {
    Var logits;                  // L×V
    std::vector<Var> variances;  // LTM variances, one L×1 block per (layer, head) that read the LTM
    std::vector<AttentionRecord> records;
};

// One segment: attention over [stm; X] with a causal mask inside X, LTM read when the layer's
// memory holds content, feed-forward. Afterwards each layer's state absorbs the segment:
// rows pushed out of the STM (all of X when L_STM = 0) are gated and folded into the LTM.
ForwardResult forward(const Model& model, std::span<const int> tokens, ModelState& state);

// Multi-head self-attention block: queries from x, keys/values from [stm; x].
// Also returns the per-head queries for the LTM read.
struct SelfAttention {
    Var z;
    std::vector<Var> queries;
    std::vector<Tensor> probs;  // per head, L × (stm + L)
};
SelfAttention self_attention(const Var& x, const Var& stm, const LayerParams& p, std::size_t heads);

Var smoothing_gate(const Var& x, std::span<const Var> taps, const Var& bias);

// logits[i] + bias[h, (offset + i) - j] for j ≤ offset + i.
Var add_relative_bias(const Var& logits, const Var& bias, std::size_t head, std::size_t offset);

// Summed cross entropy over positions with targets ≥ 0.
Var nll_loss(const Var& logits, std::span<const int> targets);
Var kl_loss(std::span<const Var> variances, double sigma0, KlForm form);

struct AdamConfig {
    double lr = 2.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 0.25;
    std::uint64_t total_steps = 1;
};

class Adam {
public:
    Adam(const Model& model, AdamConfig cfg);
    // lr at step s ∈ [1, T]: cosine from lr0 to 0.
    [[nodiscard]] double learning_rate(std::uint64_t step) const;
    // Applies one update from the gradients currently stored in the model. Returns the
    // pre-clip gradient norm.
    double step(Model& model);
    [[nodiscard]] std::uint64_t steps_taken() const noexcept { return t_; }
    [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] std::vector<Tensor>& first_moment() noexcept { return m_; }
    [[nodiscard]] std::vector<Tensor>& second_moment() noexcept { return v_; }
    [[nodiscard]] const std::vector<Tensor>& first_moment() const noexcept { return m_; }
    [[nodiscard]] const std::vector<Tensor>& second_moment() const noexcept { return v_; }
    void set_steps_taken(std::uint64_t t) noexcept { t_ = t; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t t_ = 0;
};

}  // namespace infmem
