#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "infmem/autodiff.hpp"
#include "infmem/tensor.hpp"

namespace infmem {

// N Gaussian radial basis functions over [0,1].
struct BasisSpec {
    std::vector<double> centers;  // ascending, within [0,1]
    std::vector<double> widths;   // standard deviations, > 0

    [[nodiscard]] std::size_t size() const noexcept { return centers.size(); }
    friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

// Centers linearly spaced over [0,1] (a single center sits at 0.5). Widths are dealt out
// round-robin in list order, so when N is not a multiple of the set size the earlier widths
// receive one extra function each.
BasisSpec make_basis(std::size_t count, std::span<const double> widths);
void validate(const BasisSpec& spec);

// ψ(t) ∈ R^N.
std::vector<double> eval_psi(const BasisSpec& spec, double t);

// F ∈ R^{N×L}; column i is ψ(positions[i]).
Tensor design_matrix(const BasisSpec& spec, std::span<const double> positions);

// t_i = i/L for i = 1..L.
std::vector<double> unit_positions(std::size_t count);

// Precomputed ridge fit B = Gᵀ X with G = Fᵀ(FFᵀ + λI)⁻¹.
struct RegressionOperator {
    Tensor design;  // F, N×L
    Tensor fit;     // Gᵀ = (FFᵀ + λI)⁻¹F, N×L
    double lambda = 0.0;
    std::vector<double> positions;

    [[nodiscard]] std::size_t basis_count() const noexcept { return design.rows(); }
    [[nodiscard]] std::size_t length() const noexcept { return design.cols(); }
    [[nodiscard]] Tensor g() const { return fit.transposed(); }
};

RegressionOperator regression_operator(Tensor design, double lambda, std::vector<double> positions = {});
RegressionOperator regression_operator(const BasisSpec& spec, std::span<const double> positions, double lambda);

// B = Gᵀ X for X ∈ R^{L×e}.
Tensor fit_signal(const Tensor& x, const RegressionOperator& op);
// Differentiable in X; G is a constant.
Var fit_signal(const Var& x, const RegressionOperator& op);

// Regression operators for one basis, keyed by (positions, λ). Safe for concurrent use.
class RegressionCache {
public:
    explicit RegressionCache(std::shared_ptr<const BasisSpec> spec) : spec_(std::move(spec)) {}

    std::shared_ptr<const RegressionOperator> get(const std::vector<double>& positions, double lambda);
    [[nodiscard]] const BasisSpec& spec() const noexcept { return *spec_; }
    [[nodiscard]] std::size_t entries() const;

private:
    std::shared_ptr<const BasisSpec> spec_;
    mutable std::mutex mutex_;
    std::map<std::pair<std::vector<double>, double>, std::shared_ptr<const RegressionOperator>> ops_;
};

}  // namespace infmem
