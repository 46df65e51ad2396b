#include "infmem/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "infmem/errors.hpp"

namespace infmem {

MemoryState::MemoryState(std::shared_ptr<const BasisSpec> spec, std::size_t embed, double tau, std::size_t samples,
                         double lambda, std::shared_ptr<RegressionCache> cache)
    : spec_(std::move(spec)),
      cache_(std::move(cache)),
      coeffs_(Tensor::matrix(spec_ ? spec_->size() : 0, embed)),
      tau_(tau),
      samples_(samples),
      lambda_(lambda) {
    if (!spec_) {
        throw InvalidArgument("memory needs a basis");
    }
    validate(*spec_);
    if (embed == 0) {
        throw InvalidArgument("memory embedding width must be positive");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw InvalidArgument("contraction factor tau must lie in (0,1), got " + std::to_string(tau));
    }
    if (samples == 0) {
        throw InvalidArgument("memory sample count M must be positive");
    }
    if (!(lambda >= 0.0)) {
        throw InvalidArgument("ridge penalty must be non-negative");
    }
    if (!cache_) {
        cache_ = std::make_shared<RegressionCache>(spec_);
    } else if (!(cache_->spec() == *spec_)) {
        throw InvalidArgument("regression cache was built for a different basis");
    }
}

void MemoryState::restore(Tensor coeffs, std::uint64_t update_count) {
    if (coeffs.rows() != coeffs_.rows() || coeffs.cols() != coeffs_.cols()) {
        throw ShapeError("restored coefficients " + shape_string(coeffs.shape()) + " do not match memory " +
                         shape_string(coeffs_.shape()));
    }
    coeffs_ = std::move(coeffs);
    update_count_ = update_count;
}

std::vector<double> evaluate(const MemoryState& mem, double t) {
    const auto psi = eval_psi(mem.spec(), t);
    const Tensor& b = mem.coeffs();
    std::vector<double> out(b.cols(), 0.0);
    for (std::size_t j = 0; j < b.rows(); ++j) {
        const double w = psi[j];
        const auto row = b.row(j);
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += w * row[c];
        }
    }
    return out;
}

Tensor evaluate_many(const MemoryState& mem, std::span<const double> positions) {
    return kernels::matmul_tn(design_matrix(mem.spec(), positions), mem.coeffs());
}

std::vector<double> expected_basis(double mean, double variance, const BasisSpec& spec) {
    if (!(variance > 0.0)) {
        throw InvalidArgument("attention variance must be positive, got " + std::to_string(variance));
    }
    std::vector<double> out(spec.size());
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const double s = variance + spec.widths[j] * spec.widths[j];
        const double d = mean - spec.centers[j];
        out[j] = std::exp(-0.5 * d * d / s) / std::sqrt(2.0 * std::numbers::pi * s);
    }
    return out;
}

Var expected_basis(const Var& mean, const Var& variance, const BasisSpec& spec) {
    const std::size_t l = mean.value().size();
    const std::size_t n = spec.size();
    if (variance.value().size() != l) {
        throw ShapeError("expected_basis: mean and variance lengths differ");
    }
    Tensor out = Tensor::matrix(l, n);
    for (std::size_t i = 0; i < l; ++i) {
        const auto row = expected_basis(mean.value()[i], variance.value()[i], spec);
        std::copy(row.begin(), row.end(), out.ptr() + i * n);
    }
    return make_node(std::move(out), {mean, variance},
                     [l, n, spec](const detail::Node& self, std::span<Tensor* const> g) {
                         const Tensor& mu = self.parents[0]->value;
                         const Tensor& var = self.parents[1]->value;
                         for (std::size_t i = 0; i < l; ++i) {
                             double dmu = 0.0;
                             double dvar = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                                 const double s = var[i] + spec.widths[j] * spec.widths[j];
                                 const double d = mu[i] - spec.centers[j];
                                 const double ge = self.grad(i, j) * self.value(i, j);
                                 dmu -= ge * d / s;
                                 dvar += ge * (0.5 * d * d / (s * s) - 0.5 / s);
                             }
                             if (g[0]) {
                                 (*g[0])[i] += dmu;
                             }
                             if (g[1]) {
                                 (*g[1])[i] += dvar;
                             }
                         }
                     });
}

double gaussian_interval_mass(double mean, double variance, double a, double b) {
    if (!(variance > 0.0)) {
        throw InvalidArgument("variance must be positive, got " + std::to_string(variance));
    }
    if (a > b) {
        throw InvalidArgument("interval lower bound " + std::to_string(a) + " exceeds upper bound " +
                              std::to_string(b));
    }
    const double scale = std::sqrt(2.0 * variance);
    const double za = (a - mean) / scale;
    const double zb = (b - mean) / scale;
    // erfc keeps precision when both ends sit in the same tail
    if (za > 0.0) {
        return 0.5 * (std::erfc(za) - std::erfc(zb));
    }
    if (zb < 0.0) {
        return 0.5 * (std::erfc(-zb) - std::erfc(-za));
    }
    return 0.5 * (std::erf(zb) - std::erf(za));
}

std::vector<double> linspace_locations(std::size_t samples) {
    std::vector<double> t(samples);
    for (std::size_t m = 0; m < samples; ++m) {
        t[m] = samples == 1 ? 0.5 : static_cast<double>(m) / static_cast<double>(samples - 1);
    }
    return t;
}

StickySample sticky_locations(std::span<const AttentionRecord> records, std::size_t bins, std::size_t samples,
                              Rng& rng) {
    if (bins == 0 || samples == 0) {
        throw InvalidArgument("sticky sampling needs at least one bin and one sample");
    }
    if (records.empty() || std::all_of(records.begin(), records.end(), [](const auto& r) { return r.empty(); })) {
        throw InvalidArgument("sticky sampling needs the previous step's attention records");
    }
    StickySample out;
    out.bin_probs.assign(bins, 0.0);
    for (const auto& rec : records) {
        for (std::size_t k = 0; k < rec.mean.size(); ++k) {
            for (std::size_t j = 0; j < bins; ++j) {
                const double lo = static_cast<double>(j) / static_cast<double>(bins);
                const double hi = static_cast<double>(j + 1) / static_cast<double>(bins);
                out.bin_probs[j] += gaussian_interval_mass(rec.mean[k], rec.variance[k], lo, hi);
            }
        }
    }
    double total = 0.0;
    for (double p : out.bin_probs) {
        total += p;
    }
    if (!(total > std::numeric_limits<double>::min()) || !std::isfinite(total)) {
        out.fallback = true;
        out.bin_probs.assign(bins, 1.0 / static_cast<double>(bins));
        out.positions = linspace_locations(samples);
        return out;
    }
    std::vector<double> cdf(bins);
    double acc = 0.0;
    for (std::size_t j = 0; j < bins; ++j) {
        out.bin_probs[j] /= total;
        acc += out.bin_probs[j];
        cdf[j] = acc;
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    out.positions.resize(samples);
    for (std::size_t m = 0; m < samples; ++m) {
        const double u = unit(rng) * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t bin = static_cast<std::size_t>(it - cdf.begin());
        bin = std::min(bin, bins - 1);
        // skip zero-probability bins that upper_bound can land on at the boundary
        while (out.bin_probs[bin] <= 0.0 && bin > 0) {
            --bin;
        }
        out.positions[m] = (static_cast<double>(bin) + unit(rng)) / static_cast<double>(bins);
    }
    std::sort(out.positions.begin(), out.positions.end());
    return out;
}

std::vector<double> update_positions(std::size_t samples, std::size_t new_rows, double tau) {
    std::vector<double> t;
    t.reserve(samples + new_rows);
    for (std::size_t m = 0; m < samples; ++m) {
        t.push_back(samples == 1 ? 0.5 * tau : tau * static_cast<double>(m) / static_cast<double>(samples - 1));
    }
    for (std::size_t i = 1; i <= new_rows; ++i) {
        t.push_back(tau + (1.0 - tau) * static_cast<double>(i) / static_cast<double>(new_rows));
    }
    return t;
}

MemoryState update(const MemoryState& mem, const Tensor& x_new, UpdateMode mode,
                   std::span<const AttentionRecord> records, std::size_t bins, Rng& rng) {
    if (x_new.cols() != mem.embed() || x_new.rank() != 2) {
        throw ShapeError("memory update: new rows have width " + std::to_string(x_new.cols()) +
                         ", memory width is " + std::to_string(mem.embed()));
    }
    const std::size_t l = x_new.rows();
    if (l == 0) {
        throw InvalidArgument("memory update needs at least one new row");
    }
    MemoryState next = mem;
    if (!mem.initialized()) {
        const auto op = mem.cache().get(unit_positions(l), mem.lambda());
        next.coeffs_ = fit_signal(x_new, *op);
    } else {
        std::vector<double> locations;
        if (mode == UpdateMode::sticky) {
            locations = sticky_locations(records, bins, mem.samples(), rng).positions;
        } else {
            locations = linspace_locations(mem.samples());
        }
        const Tensor past = evaluate_many(mem, locations);
        Tensor joined = Tensor::matrix(past.rows() + l, mem.embed());
        std::copy(past.data().begin(), past.data().end(), joined.ptr());
        std::copy(x_new.data().begin(), x_new.data().end(), joined.ptr() + past.size());
        const auto op = mem.cache().get(update_positions(mem.samples(), l, mem.tau()), mem.lambda());
        next.coeffs_ = fit_signal(joined, *op);
    }
    ++next.update_count_;
    return next;
}

LtmOutput ltm_attend(const MemoryState& mem, std::span<const Var> queries, const LtmParams& params) {
    if (!mem.initialized()) {
        throw StateError("long-term memory read before any update");
    }
    const std::size_t heads = params.heads.size();
    if (queries.size() != heads || heads == 0) {
        throw ShapeError("ltm_attend: " + std::to_string(queries.size()) + " query blocks for " +
                         std::to_string(heads) + " heads");
    }
    if (params.affine.size() != 1 && params.affine.size() != heads) {
        throw ShapeError("ltm_attend: affine maps must be shared or one per head");
    }
    const Var coeffs = Var::constant(mem.coeffs());
    const std::size_t l = queries.front().rows();
    LtmOutput out;
    out.record.heads = heads;
    out.record.queries = l;
    out.record.mean.reserve(heads * l);
    out.record.variance.reserve(heads * l);
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const auto& hp = params.heads[h];
        const std::size_t d = hp.key.cols();
        if (hp.key.rows() != mem.embed() || queries[h].cols() != d || queries[h].rows() != l) {
            throw ShapeError("ltm_attend: head " + std::to_string(h) + " query " + shape_string(queries[h].shape()) +
                             " does not match key projection " + shape_string(hp.key.shape()));
        }
        const auto& aff = params.affine_for(h);
        const Var keys = ad::matmul(coeffs, hp.key);      // N×d
        const Var values = ad::matmul(coeffs, hp.value);  // N×d
        const Var scores = ad::scale(ad::matmul_nt(queries[h], keys), 1.0 / std::sqrt(static_cast<double>(d)));
        const Var mean = ad::sigmoid(ad::add_row(ad::matmul(scores, aff.mean_w), aff.mean_b));
        const Var variance = ad::softplus(ad::add_row(ad::matmul(scores, aff.var_w), aff.var_b));
        const Var weights = expected_basis(mean, variance, mem.spec());  // L×N
        head_out.push_back(ad::matmul(weights, values));
        for (std::size_t i = 0; i < l; ++i) {
            out.record.mean.push_back(mean.value()[i]);
            out.record.variance.push_back(variance.value()[i]);
        }
        out.mean.push_back(mean);
        out.variance.push_back(variance);
    }
    out.z = ad::matmul(ad::concat_cols(head_out), params.out);
    return out;
}

}  // namespace infmem
