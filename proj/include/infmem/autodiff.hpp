#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "infmem/tensor.hpp"

namespace infmem {

class Var;

namespace detail {

struct Node;

// Receives the node being differentiated (its value and grad are filled in) and one
// gradient buffer per parent; a null entry means that parent does not track gradients.
using BackwardFn = std::function<void(const Node& self, std::span<Tensor* const> parent_grads)>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
};

}  // namespace detail

// Handle to a value in a reverse-mode graph. Copies share the node.
class Var {
public:
    Var() = default;

    static Var leaf(Tensor value, bool requires_grad = true);
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    [[nodiscard]] bool defined() const noexcept { return static_cast<bool>(node_); }
    [[nodiscard]] const Tensor& value() const { return node_->value; }
    // Only meaningful for leaves (parameter updates, test perturbation).
    [[nodiscard]] Tensor& mutable_value() { return node_->value; }
    [[nodiscard]] const Tensor& grad() const { return node_->grad; }
    [[nodiscard]] bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
    [[nodiscard]] std::size_t rows() const { return node_->value.rows(); }
    [[nodiscard]] std::size_t cols() const { return node_->value.cols(); }

    void zero_grad();

    [[nodiscard]] const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

private:
    explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend Var make_node(Tensor value, std::vector<Var> parents, detail::BackwardFn backward);

    std::shared_ptr<detail::Node> node_;
};

// Builds an interior node. If no parent tracks gradients the node is a constant and
// `backward` is dropped, so forward-only passes allocate no graph.
Var make_node(Tensor value, std::vector<Var> parents, detail::BackwardFn backward);

// While alive, new nodes on this thread record no graph (forward-only evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

[[nodiscard]] bool grad_enabled() noexcept;

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
// Throws ShapeError when loss is not a single element.
void backward(const Var& loss);

enum class UnaryOp { sigmoid, softplus, exp, log, erf, tanh, gelu, square, neg };

UnaryOp parse_unary_op(std::string_view id);
std::string_view unary_op_name(UnaryOp op);
double apply_unary(UnaryOp op, double x);

namespace ad {

Var stop_gradient(const Var& a);

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a·bᵀ

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a[m×n] + row[1×n], broadcast over the leading dimension.
Var add_row(const Var& a, const Var& row);
// a[m×n] ⊙ row[1×n], broadcast over the leading dimension.
Var mul_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var unary(UnaryOp op, const Var& a);
// Elementwise op selected by name ("sigmoid", "softplus", ...); unknown ids throw InvalidArgument.
Var elementwise(std::string_view op_id, const Var& a);
inline Var sigmoid(const Var& a) { return unary(UnaryOp::sigmoid, a); }
inline Var softplus(const Var& a) { return unary(UnaryOp::softplus, a); }
inline Var exp(const Var& a) { return unary(UnaryOp::exp, a); }
inline Var log(const Var& a) { return unary(UnaryOp::log, a); }
inline Var erf(const Var& a) { return unary(UnaryOp::erf, a); }
inline Var gelu(const Var& a) { return unary(UnaryOp::gelu, a); }
inline Var square(const Var& a) { return unary(UnaryOp::square, a); }

// Row-wise softmax of (logits + mask); mask entries are 0 or -inf and carry no gradient.
Var softmax_rows(const Var& logits, const Tensor* mask = nullptr);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
// out[i] = a[i - k] (zero where out of range).
Var shift_rows(const Var& a, long k);
Var gather_rows(const Var& table, std::span<const int> indices);

Var sum(const Var& a);
Var mean(const Var& a);

// Sum over rows i with targets[i] >= 0 of -log softmax(logits[i])[targets[i]].
Var cross_entropy_sum(const Var& logits, std::span<const int> targets);

}  // namespace ad

}  // namespace infmem
