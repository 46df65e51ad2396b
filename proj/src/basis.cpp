#include "infmem/basis.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "infmem/errors.hpp"
#include "infmem/linalg.hpp"

namespace infmem {

BasisSpec make_basis(std::size_t count, std::span<const double> widths) {
    if (count == 0) {
        throw InvalidArgument("basis count must be at least 1");
    }
    if (widths.empty()) {
        throw InvalidArgument("at least one basis width is required");
    }
    for (double w : widths) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw InvalidArgument("basis width must be positive, got " + std::to_string(w));
        }
    }
    BasisSpec spec;
    spec.centers.resize(count);
    spec.widths.resize(count);
    for (std::size_t j = 0; j < count; ++j) {
        spec.centers[j] = count == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(count - 1);
        spec.widths[j] = widths[j % widths.size()];
    }
    return spec;
}

void validate(const BasisSpec& spec) {
    if (spec.centers.empty() || spec.centers.size() != spec.widths.size()) {
        throw InvalidArgument("basis spec needs matching, non-empty centers and widths");
    }
    for (std::size_t j = 0; j < spec.size(); ++j) {
        if (spec.centers[j] < 0.0 || spec.centers[j] > 1.0 || (j > 0 && spec.centers[j] < spec.centers[j - 1])) {
            throw InvalidArgument("basis centers must be ascending within [0,1]");
        }
        if (!(spec.widths[j] > 0.0)) {
            throw InvalidArgument("basis widths must be positive");
        }
    }
}

std::vector<double> eval_psi(const BasisSpec& spec, double t) {
    std::vector<double> psi(spec.size());
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const double s = spec.widths[j];
        const double z = (t - spec.centers[j]) / s;
        psi[j] = std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
    }
    return psi;
}

Tensor design_matrix(const BasisSpec& spec, std::span<const double> positions) {
    if (positions.empty()) {
        throw InvalidArgument("design matrix needs at least one position");
    }
    const std::size_t n = spec.size();
    const std::size_t l = positions.size();
    Tensor f = Tensor::matrix(n, l);
    for (std::size_t i = 0; i < l; ++i) {
        const auto psi = eval_psi(spec, positions[i]);
        for (std::size_t j = 0; j < n; ++j) {
            f(j, i) = psi[j];
        }
    }
    return f;
}

std::vector<double> unit_positions(std::size_t count) {
    std::vector<double> t(count);
    for (std::size_t i = 0; i < count; ++i) {
        t[i] = static_cast<double>(i + 1) / static_cast<double>(count);
    }
    return t;
}

RegressionOperator regression_operator(Tensor design, double lambda, std::vector<double> positions) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidArgument("ridge penalty must be non-negative, got " + std::to_string(lambda));
    }
    const std::size_t n = design.rows();
    Tensor gram = kernels::matmul_nt(design, design);
    for (std::size_t j = 0; j < n; ++j) {
        gram(j, j) += lambda;
    }
    RegressionOperator op;
    try {
        // at λ = 0 a pivot that collapses relative to its diagonal means FFᵀ is numerically singular
        op.fit = solve_spd(gram, design, lambda > 0.0 ? 0.0 : 1e-12);
    } catch (const NotPositiveDefinite& e) {
        throw NotPositiveDefinite(e.pivot(), 0.0,
                                  "ridge system FFᵀ+λI is singular at λ=" + std::to_string(lambda) +
                                      "; use a positive ridge penalty");
    }
    op.design = std::move(design);
    op.lambda = lambda;
    op.positions = std::move(positions);
    return op;
}

RegressionOperator regression_operator(const BasisSpec& spec, std::span<const double> positions, double lambda) {
    return regression_operator(design_matrix(spec, positions), lambda,
                               std::vector<double>(positions.begin(), positions.end()));
}

Tensor fit_signal(const Tensor& x, const RegressionOperator& op) {
    if (x.rows() != op.length()) {
        throw ShapeError("fit_signal: " + std::to_string(x.rows()) + " rows for an operator over " +
                         std::to_string(op.length()) + " positions");
    }
    return kernels::matmul(op.fit, x);
}

Var fit_signal(const Var& x, const RegressionOperator& op) {
    if (x.rows() != op.length()) {
        throw ShapeError("fit_signal: " + std::to_string(x.rows()) + " rows for an operator over " +
                         std::to_string(op.length()) + " positions");
    }
    return ad::matmul(Var::constant(op.fit), x);
}

std::shared_ptr<const RegressionOperator> RegressionCache::get(const std::vector<double>& positions, double lambda) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(positions, lambda);
    if (auto it = ops_.find(key); it != ops_.end()) {
        return it->second;
    }
    auto op = std::make_shared<const RegressionOperator>(regression_operator(*spec_, positions, lambda));
    ops_.emplace(std::move(key), op);
    return op;
}

std::size_t RegressionCache::entries() const {
    std::lock_guard lock(mutex_);
    return ops_.size();
}

}  // namespace infmem
