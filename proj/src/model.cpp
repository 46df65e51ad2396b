#include "infmem/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "infmem/errors.hpp"

namespace infmem {

using detail::Node;

LtmMode parse_ltm_mode(std::string_view s) {
    if (s == "off") return LtmMode::off;
    if (s == "linspace") return LtmMode::linspace;
    if (s == "sticky") return LtmMode::sticky;
    throw InvalidArgument("unknown ltm mode '" + std::string(s) + "' (off, linspace, sticky)");
}

std::string_view ltm_mode_name(LtmMode m) {
    switch (m) {
        case LtmMode::off: return "off";
        case LtmMode::linspace: return "linspace";
        case LtmMode::sticky: return "sticky";
    }
    return "?";
}

KlForm parse_kl_form(std::string_view s) {
    if (s == "half_log") return KlForm::half_log;
    if (s == "standard") return KlForm::standard;
    throw InvalidArgument("unknown kl form '" + std::string(s) + "' (half_log, standard)");
}

std::string_view kl_form_name(KlForm f) { return f == KlForm::half_log ? "half_log" : "standard"; }

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) {
            throw InvalidArgument(std::string(name) + " must be positive");
        }
    };
    positive(vocab, "vocab");
    positive(layers, "layers");
    positive(heads, "heads");
    positive(embed, "embed");
    positive(input_len, "input_len");
    positive(ff_hidden, "ff_hidden");
    positive(basis_count, "basis_count");
    positive(sticky_bins, "sticky_bins");
    if (embed % heads != 0) {
        throw InvalidArgument("embed " + std::to_string(embed) + " is not divisible by heads " + std::to_string(heads));
    }
    if (basis_widths.empty()) {
        throw InvalidArgument("basis_widths must list at least one width");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw InvalidArgument("tau must lie in (0, 1), got " + std::to_string(tau));
    }
    if (!(kl_sigma0 > 0.0)) {
        throw InvalidArgument("kl_sigma0 must be positive");
    }
    if (!(ridge >= 0.0) || !(kl_weight >= 0.0)) {
        throw InvalidArgument("ridge and kl_weight must be non-negative");
    }
}

namespace {

Tensor normal_tensor(Shape shape, double sd, Rng& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

Tensor filled(Shape shape, double v) { return Tensor(std::move(shape), v); }

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const std::size_t e = config_.embed;
    const std::size_t d = config_.head_dim();
    const std::size_t n = config_.basis_count;
    const double se = 1.0 / std::sqrt(static_cast<double>(e));
    auto add = [&](std::string name, Tensor value) {
        Var v = Var::leaf(std::move(value));
        named_.emplace_back(std::move(name), v);
        return v;
    };

    embedding = add("embedding", normal_tensor({config_.vocab, e}, 1.0, rng));
    if (config_.ltm != LtmMode::off) {
        basis_ = std::make_shared<const BasisSpec>(make_basis(n, config_.basis_widths));
        cache_ = std::make_shared<RegressionCache>(basis_);
    }
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        LayerParams p;
        p.ln1_gain = add(pre + "ln1.gain", filled({e}, 1.0));
        p.ln1_bias = add(pre + "ln1.bias", filled({e}, 0.0));
        p.wq = add(pre + "attn.wq", normal_tensor({e, e}, se, rng));
        p.wk = add(pre + "attn.wk", normal_tensor({e, e}, se, rng));
        p.wv = add(pre + "attn.wv", normal_tensor({e, e}, se, rng));
        p.wr = add(pre + "attn.wr", normal_tensor({e, e}, se, rng));
        p.rel_bias = add(pre + "attn.rel_bias", filled({config_.heads, config_.rel_span()}, 0.0));
        if (config_.ltm != LtmMode::off) {
            for (std::size_t h = 0; h < config_.heads; ++h) {
                const std::string hp = pre + "ltm.head" + std::to_string(h) + ".";
                p.ltm.heads.push_back({add(hp + "key", normal_tensor({e, d}, se, rng)),
                                       add(hp + "value", normal_tensor({e, d}, se, rng))});
            }
            const std::size_t maps = config_.shared_affine ? 1 : config_.heads;
            const double sn = 1.0 / std::sqrt(static_cast<double>(n));
            for (std::size_t h = 0; h < maps; ++h) {
                const std::string ap = pre + "ltm.affine" + std::to_string(h) + ".";
                LtmAffine a;
                a.mean_w = add(ap + "mean_w", normal_tensor({n, 1}, sn, rng));
                a.mean_b = add(ap + "mean_b", filled({1, 1}, 0.0));
                a.var_w = add(ap + "var_w", normal_tensor({n, 1}, sn, rng));
                a.var_b = add(ap + "var_b", filled({1, 1}, 0.0));
                p.ltm.affine.push_back(a);
            }
            p.ltm.out = add(pre + "ltm.out", normal_tensor({e, e}, se, rng));
            if (config_.gate) {
                const Shape tap = config_.gate_depthwise ? Shape{1, e} : Shape{e, e};
                for (int k = 0; k < 3; ++k) {
                    p.gate_w.push_back(add(pre + "gate.w" + std::to_string(k), filled(tap, 0.0)));
                }
                p.gate_b = add(pre + "gate.b", filled({1, e}, 0.0));
            }
        }
        p.ln2_gain = add(pre + "ln2.gain", filled({e}, 1.0));
        p.ln2_bias = add(pre + "ln2.bias", filled({e}, 0.0));
        p.ff_w1 = add(pre + "ff.w1", normal_tensor({e, config_.ff_hidden}, se, rng));
        p.ff_b1 = add(pre + "ff.b1", filled({1, config_.ff_hidden}, 0.0));
        p.ff_w2 = add(pre + "ff.w2", normal_tensor({config_.ff_hidden, e},
                                                  1.0 / std::sqrt(static_cast<double>(config_.ff_hidden)), rng));
        p.ff_b2 = add(pre + "ff.b2", filled({1, e}, 0.0));
        layers.push_back(std::move(p));
    }
    lnf_gain = add("final.ln.gain", filled({e}, 1.0));
    lnf_bias = add("final.ln.bias", filled({e}, 0.0));
    out_w = add("output.w", normal_tensor({e, config_.vocab}, se, rng));
    out_b = add("output.b", filled({1, config_.vocab}, 0.0));
}

Var& Model::parameter(std::string_view name) {
    for (auto& [n, v] : named_) {
        if (n == name) {
            return v;
        }
    }
    throw InvalidArgument("no parameter named '" + std::string(name) + "'");
}

std::size_t Model::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [n, v] : named_) {
        total += v.value().size();
    }
    return total;
}

void Model::zero_grad() {
    for (auto& [n, v] : named_) {
        v.zero_grad();
    }
}

ModelState initial_state(const Model& model, std::uint64_t seed) {
    const auto& cfg = model.config();
    ModelState st;
    st.rng.seed(seed);
    st.layers.resize(cfg.layers);
    for (auto& ls : st.layers) {
        ls.stm = Var::constant(Tensor::matrix(0, cfg.embed));
        if (cfg.ltm != LtmMode::off) {
            ls.memory = MemoryState(model.basis(), cfg.embed, cfg.tau, cfg.memory_samples(), cfg.ridge, model.cache());
        }
    }
    return st;
}

Var add_relative_bias(const Var& logits, const Var& bias, std::size_t head, std::size_t offset) {
    const std::size_t m = logits.rows();
    const std::size_t k = logits.cols();
    const std::size_t span = bias.cols();
    if (head >= bias.rows()) {
        throw ShapeError("relative bias has " + std::to_string(bias.rows()) + " heads, asked for head " +
                         std::to_string(head));
    }
    if (offset + m > k || k > span) {
        throw ShapeError("relative bias: " + std::to_string(m) + " queries over " + std::to_string(k) +
                         " keys does not fit a span of " + std::to_string(span));
    }
    Tensor out = logits.value();
    const double* b = bias.value().ptr() + head * span;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= offset + i; ++j) {
            out(i, j) += b[offset + i - j];
        }
    }
    return make_node(std::move(out), {logits, bias}, [=](const Node& self, std::span<Tensor* const> g) {
        if (g[0]) {
            *g[0] += self.grad;
        }
        if (g[1]) {
            double* gb = g[1]->ptr() + head * span;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j <= offset + i; ++j) {
                    gb[offset + i - j] += self.grad[i * k + j];
                }
            }
        }
    });
}

SelfAttention self_attention(const Var& x, const Var& stm, const LayerParams& p, std::size_t heads) {
    const std::size_t l = x.rows();
    const std::size_t e = x.cols();
    if (e % heads != 0 || p.wq.rows() != e) {
        throw ShapeError("self_attention: input " + shape_string(x.shape()) + " does not match projections " +
                         shape_string(p.wq.shape()) + " with " + std::to_string(heads) + " heads");
    }
    const std::size_t past = stm.defined() ? stm.rows() : 0;
    if (past > 0 && stm.cols() != e) {
        throw ShapeError("self_attention: cache " + shape_string(stm.shape()) + " does not match input " +
                         shape_string(x.shape()));
    }
    Var kv = x;
    if (past > 0) {
        const Var parts[] = {stm, x};
        kv = ad::concat_rows(parts);
    }
    const std::size_t k = past + l;
    const std::size_t d = e / heads;
    const Var q = ad::matmul(x, p.wq);
    const Var keys = ad::matmul(kv, p.wk);
    const Var values = ad::matmul(kv, p.wv);
    Tensor mask = Tensor::matrix(l, k);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = past + i + 1; j < k; ++j) {
            mask(i, j) = -std::numeric_limits<double>::infinity();
        }
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    SelfAttention out;
    std::vector<Var> z;
    for (std::size_t h = 0; h < heads; ++h) {
        const Var qh = ad::slice_cols(q, h * d, d);
        const Var scores = ad::scale(ad::matmul_nt(qh, ad::slice_cols(keys, h * d, d)), inv);
        const Var probs = ad::softmax_rows(add_relative_bias(scores, p.rel_bias, h, past), &mask);
        z.push_back(ad::matmul(probs, ad::slice_cols(values, h * d, d)));
        out.queries.push_back(qh);
        out.probs.push_back(probs.value());
    }
    out.z = ad::matmul(ad::concat_cols(z), p.wr);
    return out;
}

Var smoothing_gate(const Var& x, std::span<const Var> taps, const Var& bias) {
    if (taps.size() != 3) {
        throw ShapeError("smoothing gate needs 3 taps, got " + std::to_string(taps.size()));
    }
    const bool depthwise = taps[0].rows() == 1;
    // tap 0 sees the previous row, tap 2 the next one
    const Var shifted[] = {ad::shift_rows(x, 1), x, ad::shift_rows(x, -1)};
    Var conv;
    for (int k = 0; k < 3; ++k) {
        const Var term = depthwise ? ad::mul_row(shifted[k], taps[k]) : ad::matmul(shifted[k], taps[k]);
        conv = conv.defined() ? ad::add(conv, term) : term;
    }
    return ad::mul(ad::sigmoid(ad::add_row(conv, bias)), x);
}

namespace {

Var feed_forward(const Var& x, const LayerParams& p) {
    const Var hidden = ad::gelu(ad::add_row(ad::matmul(x, p.ff_w1), p.ff_b1));
    return ad::add_row(ad::matmul(hidden, p.ff_w2), p.ff_b2);
}

void absorb(const Model& model, const LayerParams& p, LayerState& ls, const Tensor& x, Rng& rng) {
    const auto& cfg = model.config();
    const std::size_t e = cfg.embed;
    const Tensor& old = ls.stm.value();
    const std::size_t total = old.rows() + x.rows();
    const std::size_t keep = std::min(total, cfg.stm_len);
    const std::size_t evict = total - keep;

    Tensor joined = Tensor::matrix(total, e);
    std::copy(old.data().begin(), old.data().end(), joined.ptr());
    std::copy(x.data().begin(), x.data().end(), joined.ptr() + old.size());
    Tensor kept = Tensor::matrix(keep, e);
    std::copy_n(joined.ptr() + evict * e, keep * e, kept.ptr());
    ls.stm = Var::constant(std::move(kept));

    if (cfg.ltm == LtmMode::off || evict == 0) {
        return;
    }
    Tensor evicted = Tensor::matrix(evict, e);
    std::copy_n(joined.ptr(), evict * e, evicted.ptr());
    if (cfg.gate) {
        NoGradGuard guard;
        evicted = smoothing_gate(Var::constant(std::move(evicted)), p.gate_w, p.gate_b).value();
    }
    const UpdateMode mode = cfg.ltm == LtmMode::sticky ? UpdateMode::sticky : UpdateMode::linspace;
    std::span<const AttentionRecord> records;
    if (!ls.record.empty()) {
        records = std::span<const AttentionRecord>(&ls.record, 1);
    }
    ls.memory = update(ls.memory, evicted, mode, records, cfg.sticky_bins, rng);
}

}  // namespace

ForwardResult forward(const Model& model, std::span<const int> tokens, ModelState& state) {
    const auto& cfg = model.config();
    if (tokens.empty() || tokens.size() > cfg.input_len) {
        throw ShapeError("segment of " + std::to_string(tokens.size()) + " tokens, expected 1.." +
                         std::to_string(cfg.input_len));
    }
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab) {
            throw InvalidArgument("token id " + std::to_string(t) + " outside vocabulary of " +
                                  std::to_string(cfg.vocab));
        }
    }
    if (state.layers.size() != cfg.layers) {
        throw StateError("state has " + std::to_string(state.layers.size()) + " layers, model has " +
                         std::to_string(cfg.layers));
    }
    ForwardResult res;
    Var x = ad::gather_rows(model.embedding, tokens);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const LayerParams& p = model.layers[l];
        LayerState& ls = state.layers[l];
        Var stm_norm;
        if (ls.stm.defined() && ls.stm.rows() > 0) {
            stm_norm = ad::layer_norm(ad::stop_gradient(ls.stm), p.ln1_gain, p.ln1_bias);
        }
        const Var xn = ad::layer_norm(x, p.ln1_gain, p.ln1_bias);
        SelfAttention sa = self_attention(xn, stm_norm, p, cfg.heads);
        Var z = sa.z;
        AttentionRecord record;
        if (cfg.ltm != LtmMode::off && ls.memory.initialized()) {
            LtmOutput lo = ltm_attend(ls.memory, sa.queries, p.ltm);
            z = ad::add(z, lo.z);
            res.variances.insert(res.variances.end(), lo.variance.begin(), lo.variance.end());
            record = std::move(lo.record);
        }
        const Var x1 = ad::add(x, z);
        const Var x2 = ad::add(x1, feed_forward(ad::layer_norm(x1, p.ln2_gain, p.ln2_bias), p));

        ls.record = record;
        absorb(model, p, ls, x.value(), state.rng);
        res.records.push_back(std::move(record));
        x = x2;
    }
    res.logits = ad::add_row(ad::matmul(ad::layer_norm(x, model.lnf_gain, model.lnf_bias), model.out_w), model.out_b);
    return res;
}

Var nll_loss(const Var& logits, std::span<const int> targets) {
    if (targets.size() != logits.rows()) {
        throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(logits.rows()) + " rows");
    }
    return ad::cross_entropy_sum(logits, targets);
}

Var kl_loss(std::span<const Var> variances, double sigma0, KlForm form) {
    if (!(sigma0 > 0.0)) {
        throw InvalidArgument("kl_loss: sigma0 must be positive");
    }
    const double inv = 1.0 / (sigma0 * sigma0);
    // ratio r = σ²/σ₀²; half_log form ½(r − ½ log r − 1), standard ½(r − log r − 1)
    const double log_coeff = form == KlForm::half_log ? 0.5 : 1.0;
    Var total = Var::constant(Tensor::scalar(0.0));
    for (const Var& v : variances) {
        const Var r = ad::scale(v, inv);
        const Var term = ad::add_scalar(ad::sub(r, ad::scale(ad::log(r), log_coeff)), -1.0);
        total = ad::add(total, ad::scale(ad::sum(term), 0.5));
    }
    return total;
}

Adam::Adam(const Model& model, AdamConfig cfg) : cfg_(cfg) {
    if (cfg_.total_steps == 0) {
        throw InvalidArgument("optimizer needs at least one step");
    }
    for (const auto& [name, v] : model.parameters()) {
        m_.emplace_back(v.shape());
        v_.emplace_back(v.shape());
    }
}

double Adam::learning_rate(std::uint64_t step) const {
    if (cfg_.total_steps <= 1) {
        return cfg_.lr;
    }
    const double s = static_cast<double>(std::min(std::max<std::uint64_t>(step, 1), cfg_.total_steps) - 1);
    const double frac = s / static_cast<double>(cfg_.total_steps - 1);
    return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double Adam::step(Model& model) {
    const auto& params = model.parameters();
    if (params.size() != m_.size()) {
        throw StateError("optimizer state does not match the model");
    }
    double sq = 0.0;
    for (const auto& [name, v] : params) {
        for (double g : v.grad().data()) {
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient norm");
    }
    const double clip = (cfg_.clip > 0.0 && norm > cfg_.clip) ? cfg_.clip / norm : 1.0;
    ++t_;
    const double lr = learning_rate(t_);
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Var v = params[k].second;
        const Tensor& g = v.grad();
        Tensor& w = v.mutable_value();
        Tensor& m = m_[k];
        Tensor& s = v_[k];
        const bool has = g.size() == w.size();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = has ? g[i] * clip : 0.0;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            s[i] = cfg_.beta2 * s[i] + (1.0 - cfg_.beta2) * gi * gi;
            w[i] -= lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + cfg_.eps);
        }
    }
    return norm;
}

}  // namespace infmem
