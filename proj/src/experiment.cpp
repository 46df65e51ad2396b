#include "infmem/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include "infmem/errors.hpp"
#include "infmem/seed.hpp"

namespace infmem {

std::vector<std::size_t> segment_lengths(std::size_t n, std::size_t l) {
    if (l == 0) {
        throw InvalidArgument("segment length must be positive");
    }
    std::vector<std::size_t> out;
    if (n == 0) {
        return out;
    }
    if (n % l != 0) {
        out.push_back(n % l);
    }
    for (std::size_t k = 0; k < n / l; ++k) {
        out.push_back(l);
    }
    return out;
}

InstanceResult run_instance(const Model& model, const SortingInstance& inst, std::uint64_t state_seed, bool train,
                            double grad_scale) {
    const auto& cfg = model.config();
    const std::vector<int> seq = inst.sequence();
    const std::size_t n = seq.size() - 1;
    const std::size_t first_target = inst.input.size();  // position of SEP predicts target[0]
    std::vector<int> targets(n, -1);
    for (std::size_t t = first_target; t < n; ++t) {
        targets[t] = seq[t + 1];
    }
    ModelState state = initial_state(model, state_seed);
    InstanceResult res;
    res.tokens = n;
    std::size_t begin = 0;
    for (std::size_t len : segment_lengths(n, cfg.input_len)) {
        const std::span<const int> tokens(seq.data() + begin, len);
        const std::span<const int> tgt(targets.data() + begin, len);
        const bool has_loss = begin + len > first_target;
        std::optional<NoGradGuard> guard;
        if (!(train && has_loss)) {
            guard.emplace();
        }
        ForwardResult fr = forward(model, tokens, state);
        if (has_loss) {
            const Var nll = nll_loss(fr.logits, tgt);
            Var total = nll;
            double kl_value = 0.0;
            if (!fr.variances.empty()) {
                const Var kl = kl_loss(fr.variances, cfg.kl_sigma0, cfg.kl_form);
                kl_value = kl.value().item();
                if (cfg.kl_weight > 0.0) {
                    total = ad::add(nll, ad::scale(kl, cfg.kl_weight));
                }
            }
            const double total_value = total.value().item();
            if (!std::isfinite(total_value)) {
                throw NumericError("non-finite loss " + std::to_string(total_value) + " (nll " +
                                   std::to_string(nll.value().item()) + ", kl " + std::to_string(kl_value) + ")");
            }
            res.nll += nll.value().item();
            res.kl += kl_value;
            if (train) {
                backward(ad::scale(total, grad_scale));
            }
            const Tensor& logits = fr.logits.value();
            const std::size_t v = logits.cols();
            for (std::size_t i = 0; i < len; ++i) {
                if (tgt[i] < 0) {
                    continue;
                }
                const double* row = logits.ptr() + i * v;
                res.predicted.push_back(static_cast<int>(std::max_element(row, row + v) - row));
                ++res.loss_tokens;
            }
        }
        begin += len;
    }
    res.state = std::move(state);
    return res;
}

void train(Model& model, Adam& adam, std::span<const SortingInstance> data, const TrainOptions& opt,
           std::uint64_t until, const std::function<void(const TrainRow&)>& emit, ModelState* last_state) {
    if (data.empty()) {
        throw InvalidArgument("training set is empty");
    }
    if (opt.batch == 0) {
        throw InvalidArgument("batch size must be positive");
    }
    const double kl_weight = model.config().kl_weight;
    double nll = 0.0;
    double kl = 0.0;
    std::size_t loss_tokens = 0;
    std::size_t tokens = 0;
    auto window_start = std::chrono::steady_clock::now();
    while (adam.steps_taken() < until) {
        const std::uint64_t step = adam.steps_taken() + 1;
        std::vector<std::size_t> picks(opt.batch);
        std::size_t batch_tokens = 0;
        for (std::size_t b = 0; b < opt.batch; ++b) {
            picks[b] = static_cast<std::size_t>(derive_seed(opt.seed, {step, b, 0}) % data.size());
            batch_tokens += data[picks[b]].target.size();
        }
        const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(batch_tokens, 1));
        model.zero_grad();
        for (std::size_t b = 0; b < opt.batch; ++b) {
            InstanceResult r = run_instance(model, data[picks[b]], derive_seed(opt.seed, {step, b, 1}), true, scale);
            nll += r.nll;
            kl += r.kl;
            loss_tokens += r.loss_tokens;
            tokens += r.tokens;
            if (last_state && b + 1 == opt.batch) {
                *last_state = std::move(r.state);
            }
        }
        const double lr = adam.learning_rate(step);
        adam.step(model);
        if (opt.emit_every > 0 && (step % opt.emit_every == 0 || step == opt.steps)) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - window_start).count();
            TrainRow row;
            row.step = step;
            const double denom = static_cast<double>(std::max<std::size_t>(loss_tokens, 1));
            row.nll = nll / denom;
            row.kl = kl / denom;
            row.total = row.nll + kl_weight * row.kl;
            row.lr = lr;
            row.tokens_per_s = secs > 0.0 ? static_cast<double>(tokens) / secs : 0.0;
            emit(row);
            nll = kl = 0.0;
            loss_tokens = tokens = 0;
            window_start = std::chrono::steady_clock::now();
        }
    }
}

EvalResult evaluate_split(const Model& model, std::span<const SortingInstance> data, std::uint64_t seed) {
    EvalResult out;
    double acc = 0.0;
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const InstanceResult r = run_instance(model, data[i], derive_seed(seed, {i, 2}), false);
        acc += sorting_accuracy(r.predicted, data[i].target);
        nll += r.nll;
        tokens += r.loss_tokens;
    }
    out.instances = data.size();
    if (!data.empty()) {
        out.accuracy = acc / static_cast<double>(data.size());
        out.nll = nll / static_cast<double>(std::max<std::size_t>(tokens, 1));
    }
    return out;
}

}  // namespace infmem
