#include "infmem/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_set>

#include "infmem/errors.hpp"

namespace infmem {

using detail::Node;

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
    t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    t_grad_enabled = previous_;
}

bool grad_enabled() noexcept {
    return t_grad_enabled;
}

Var Var::leaf(Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->is_leaf = true;
    return Var(std::move(node));
}

void Var::zero_grad() {
    if (node_) {
        node_->grad = Tensor();
    }
}

Var make_node(Tensor value, std::vector<Var> parents, detail::BackwardFn backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->is_leaf = false;
    const bool tracked = t_grad_enabled && std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
    if (tracked) {
        node->requires_grad = true;
        node->backward = std::move(backward);
        node->parents.reserve(parents.size());
        for (auto& p : parents) {
            node->parents.push_back(p.node_);
        }
    }
    return Var(std::move(node));
}

namespace {

Tensor& ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
        n.grad = Tensor(n.value.shape(), 0.0);
    }
    return n.grad;
}

}  // namespace

void backward(const Var& loss) {
    if (!loss.defined() || loss.value().size() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
        return;
    }
    // Iterative post-order DFS; reversing gives a topological order from the loss.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (!n->is_leaf) {
            n->grad = Tensor();
        }
    }
    ensure_grad(*loss.node())[0] += 1.0;

    std::vector<Tensor*> parent_grads;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->is_leaf || !n->backward || n->grad.size() == 0) {
            continue;
        }
        parent_grads.clear();
        for (const auto& p : n->parents) {
            parent_grads.push_back(p->requires_grad ? &ensure_grad(*p) : nullptr);
        }
        n->backward(*n, parent_grads);
        n->grad = Tensor();
    }
}

UnaryOp parse_unary_op(std::string_view id) {
    static constexpr std::pair<std::string_view, UnaryOp> table[] = {
        {"sigmoid", UnaryOp::sigmoid}, {"softplus", UnaryOp::softplus}, {"exp", UnaryOp::exp},
        {"log", UnaryOp::log},         {"erf", UnaryOp::erf},           {"tanh", UnaryOp::tanh},
        {"gelu", UnaryOp::gelu},       {"square", UnaryOp::square},     {"neg", UnaryOp::neg},
    };
    for (const auto& [name, op] : table) {
        if (name == id) {
            return op;
        }
    }
    throw InvalidArgument("unknown elementwise op '" + std::string(id) + "'");
}

std::string_view unary_op_name(UnaryOp op) {
    switch (op) {
        case UnaryOp::sigmoid: return "sigmoid";
        case UnaryOp::softplus: return "softplus";
        case UnaryOp::exp: return "exp";
        case UnaryOp::log: return "log";
        case UnaryOp::erf: return "erf";
        case UnaryOp::tanh: return "tanh";
        case UnaryOp::gelu: return "gelu";
        case UnaryOp::square: return "square";
        case UnaryOp::neg: return "neg";
    }
    return "?";
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) {
    if (x > 30.0) {
        return x;
    }
    if (x < -30.0) {
        return std::exp(x);
    }
    return std::log1p(std::exp(x));
}

// Derivative given input x and output y.
double unary_derivative(UnaryOp op, double x, double y) {
    switch (op) {
        case UnaryOp::sigmoid: return y * (1.0 - y);
        case UnaryOp::softplus: return sigmoid_scalar(x);
        case UnaryOp::exp: return y;
        case UnaryOp::log: return 1.0 / x;
        case UnaryOp::erf: return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
        case UnaryOp::tanh: return 1.0 - y * y;
        case UnaryOp::gelu: {
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        }
        case UnaryOp::square: return 2.0 * x;
        case UnaryOp::neg: return -1.0;
    }
    return 0.0;
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
    if (a.value().size() != b.value().size() || a.rows() != b.rows()) {
        throw ShapeError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
    }
}

}  // namespace

double apply_unary(UnaryOp op, double x) {
    switch (op) {
        case UnaryOp::sigmoid: return sigmoid_scalar(x);
        case UnaryOp::softplus: return softplus_scalar(x);
        case UnaryOp::exp: return std::exp(x);
        case UnaryOp::log: return std::log(x);
        case UnaryOp::erf: return std::erf(x);
        case UnaryOp::tanh: return std::tanh(x);
        case UnaryOp::gelu: return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
        case UnaryOp::square: return x * x;
        case UnaryOp::neg: return -x;
    }
    return x;
}

namespace ad {

Var stop_gradient(const Var& a) {
    return Var::constant(a.value());
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = kernels::matmul(a.value(), b.value());
    return make_node(std::move(out), {a, b}, [](const Node& self, std::span<Tensor* const> g) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (g[0]) {
            kernels::gemm(self.grad, false, bv, true, *g[0], true);
        }
        if (g[1]) {
            kernels::gemm(av, true, self.grad, false, *g[1], true);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    Tensor out = kernels::matmul_nt(a.value(), b.value());
    return make_node(std::move(out), {a, b}, [](const Node& self, std::span<Tensor* const> g) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (g[0]) {
            kernels::gemm(self.grad, false, bv, false, *g[0], true);
        }
        if (g[1]) {
            kernels::gemm(self.grad, true, av, false, *g[1], true);
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    out += b.value();
    return make_node(std::move(out), {a, b}, [](const Node& self, std::span<Tensor* const> g) {
        for (Tensor* gi : g) {
            if (gi) {
                *gi += self.grad;
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b.value()[i];
    }
    return make_node(std::move(out), {a, b}, [](const Node& self, std::span<Tensor* const> g) {
        if (g[0]) {
            *g[0] += self.grad;
        }
        if (g[1]) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g[1])[i] -= self.grad[i];
            }
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b.value()[i];
    }
    return make_node(std::move(out), {a, b}, [](const Node& self, std::span<Tensor* const> g) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (g[0]) {
                (*g[0])[i] += self.grad[i] * bv[i];
            }
            if (g[1]) {
                (*g[1])[i] += self.grad[i] * av[i];
            }
        }
    });
}

Var add_row(const Var& a, const Var& row) {
    const std::size_t n = a.cols();
    if (row.value().size() != n) {
        throw ShapeError("add_row: row " + shape_string(row.shape()) + " does not broadcast over " +
                         shape_string(a.shape()));
    }
    Tensor out = a.value();
    const std::size_t m = out.rows();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) += row.value()[j];
        }
    }
    return make_node(std::move(out), {a, row}, [m, n](const Node& self, std::span<Tensor* const> g) {
        if (g[0]) {
            *g[0] += self.grad;
        }
        if (g[1]) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*g[1])[j] += self.grad[i * n + j];
                }
            }
        }
    });
}

Var mul_row(const Var& a, const Var& row) {
    const std::size_t n = a.cols();
    if (row.value().size() != n) {
        throw ShapeError("mul_row: row " + shape_string(row.shape()) + " does not broadcast over " +
                         shape_string(a.shape()));
    }
    Tensor out = a.value();
    const std::size_t m = out.rows();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) *= row.value()[j];
        }
    }
    return make_node(std::move(out), {a, row}, [m, n](const Node& self, std::span<Tensor* const> g) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& rv = self.parents[1]->value;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double up = self.grad[i * n + j];
                if (g[0]) {
                    (*g[0])[i * n + j] += up * rv[j];
                }
                if (g[1]) {
                    (*g[1])[j] += up * av[i * n + j];
                }
            }
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    out *= s;
    return make_node(std::move(out), {a}, [s](const Node& self, std::span<Tensor* const> g) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            (*g[0])[i] += s * self.grad[i];
        }
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.data()) {
        v += s;
    }
    return make_node(std::move(out), {a}, [](const Node& self, std::span<Tensor* const> g) {
        *g[0] += self.grad;
    });
}

Var unary(UnaryOp op, const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data()) {
        v = apply_unary(op, v);
    }
    return make_node(std::move(out), {a}, [op](const Node& self, std::span<Tensor* const> g) {
        const Tensor& x = self.parents[0]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            (*g[0])[i] += self.grad[i] * unary_derivative(op, x[i], self.value[i]);
        }
    });
}

Var elementwise(std::string_view op_id, const Var& a) {
    return unary(parse_unary_op(op_id), a);
}

Var softmax_rows(const Var& logits, const Tensor* mask) {
    const Tensor& x = logits.value();
    const std::size_t m = x.rows();
    const std::size_t n = x.cols();
    if (mask && (mask->rows() != m || mask->cols() != n)) {
        throw ShapeError("softmax mask " + shape_string(mask->shape()) + " vs logits " + shape_string(x.shape()));
    }
    Tensor out = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            const double v = x(i, j) + (mask ? (*mask)(i, j) : 0.0);
            out(i, j) = v;
            mx = std::max(mx, v);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::isinf(out(i, j)) ? 0.0 : std::exp(out(i, j) - mx);
            out(i, j) = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) /= z;
        }
    }
    return make_node(std::move(out), {logits}, [m, n](const Node& self, std::span<Tensor* const> g) {
        const Tensor& y = self.value;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += self.grad(i, j) * y(i, j);
            }
            for (std::size_t j = 0; j < n; ++j) {
                (*g[0])(i, j) += y(i, j) * (self.grad(i, j) - dot);
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows();
    const std::size_t n = xv.cols();
    if (gain.value().size() != n || bias.value().size() != n) {
        throw ShapeError("layer_norm parameters do not match width " + std::to_string(n));
    }
    // normalized values and inverse std per row, kept for backward
    auto xhat = std::make_shared<Tensor>(Tensor::matrix(m, n));
    auto inv_std = std::make_shared<std::vector<double>>(m);
    Tensor out = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += xv(i, j);
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xv(i, j) - mu) * is;
            (*xhat)(i, j) = h;
            out(i, j) = h * gain.value()[j] + bias.value()[j];
        }
    }
    return make_node(std::move(out), {x, gain, bias},
                     [m, n, xhat, inv_std](const Node& self, std::span<Tensor* const> g) {
                         const Tensor& gv = self.parents[1]->value;
                         for (std::size_t i = 0; i < m; ++i) {
                             double sum_dh = 0.0;
                             double sum_dh_h = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                                 const double dy = self.grad(i, j);
                                 const double h = (*xhat)(i, j);
                                 if (g[1]) {
                                     (*g[1])[j] += dy * h;
                                 }
                                 if (g[2]) {
                                     (*g[2])[j] += dy;
                                 }
                                 const double dh = dy * gv[j];
                                 sum_dh += dh;
                                 sum_dh_h += dh * h;
                             }
                             if (!g[0]) {
                                 continue;
                             }
                             const double inv_n = 1.0 / static_cast<double>(n);
                             for (std::size_t j = 0; j < n; ++j) {
                                 const double dh = self.grad(i, j) * gv[j];
                                 const double h = (*xhat)(i, j);
                                 (*g[0])(i, j) += (*inv_std)[i] * (dh - inv_n * sum_dh - h * inv_n * sum_dh_h);
                             }
                         }
                     });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_rows of nothing");
    }
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) {
            throw ShapeError("concat_rows: column counts differ");
        }
        m += p.value().size() / n;
    }
    Tensor out = Tensor::matrix(m, n);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.ptr() + off);
        off += p.value().size();
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return make_node(std::move(out), std::move(parents), [](const Node& self, std::span<Tensor* const> g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const std::size_t len = self.parents[k]->value.size();
            if (g[k]) {
                for (std::size_t i = 0; i < len; ++i) {
                    (*g[k])[i] += self.grad[off + i];
                }
            }
            off += len;
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols of nothing");
    }
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) {
            throw ShapeError("concat_cols: row counts differ");
        }
        n += p.cols();
    }
    Tensor out = Tensor::matrix(m, n);
    std::size_t c0 = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(p.value().ptr() + i * w, w, out.ptr() + i * n + c0);
        }
        c0 += w;
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return make_node(std::move(out), std::move(parents), [m, n](const Node& self, std::span<Tensor* const> g) {
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const std::size_t w = self.parents[k]->value.cols();
            if (g[k]) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        (*g[k])[i * w + j] += self.grad[i * n + c0 + j];
                    }
                }
            }
            c0 += w;
        }
    });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
    const std::size_t n = a.cols();
    if (begin + count > a.rows()) {
        throw ShapeError("slice_rows out of range");
    }
    Tensor out = Tensor::matrix(count, n);
    std::copy_n(a.value().ptr() + begin * n, count * n, out.ptr());
    return make_node(std::move(out), {a}, [begin, n](const Node& self, std::span<Tensor* const> g) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            (*g[0])[begin * n + i] += self.grad[i];
        }
    });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (begin + count > n) {
        throw ShapeError("slice_cols out of range");
    }
    Tensor out = Tensor::matrix(m, count);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.value().ptr() + i * n + begin, count, out.ptr() + i * count);
    }
    return make_node(std::move(out), {a}, [m, n, begin, count](const Node& self, std::span<Tensor* const> g) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < count; ++j) {
                (*g[0])[i * n + begin + j] += self.grad[i * count + j];
            }
        }
    });
}

Var shift_rows(const Var& a, long k) {
    const long m = static_cast<long>(a.rows());
    const std::size_t n = a.cols();
    Tensor out = Tensor::matrix(static_cast<std::size_t>(m), n);
    for (long i = 0; i < m; ++i) {
        const long src = i - k;
        if (src >= 0 && src < m) {
            std::copy_n(a.value().ptr() + src * static_cast<long>(n), n, out.ptr() + i * static_cast<long>(n));
        }
    }
    return make_node(std::move(out), {a}, [m, n, k](const Node& self, std::span<Tensor* const> g) {
        for (long i = 0; i < m; ++i) {
            const long src = i - k;
            if (src >= 0 && src < m) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*g[0])[static_cast<std::size_t>(src) * n + j] += self.grad[static_cast<std::size_t>(i) * n + j];
                }
            }
        }
    });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
    const std::size_t n = table.cols();
    const std::size_t rows = table.rows();
    Tensor out = Tensor::matrix(indices.size(), n);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= rows) {
            throw InvalidArgument("gather_rows index " + std::to_string(indices[i]) + " out of range " +
                                  std::to_string(rows));
        }
        std::copy_n(table.value().ptr() + static_cast<std::size_t>(indices[i]) * n, n, out.ptr() + i * n);
    }
    std::vector<int> idx(indices.begin(), indices.end());
    return make_node(std::move(out), {table}, [idx = std::move(idx), n](const Node& self, std::span<Tensor* const> g) {
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                (*g[0])[static_cast<std::size_t>(idx[i]) * n + j] += self.grad[i * n + j];
            }
        }
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v;
    }
    return make_node(Tensor::scalar(s), {a}, [](const Node& self, std::span<Tensor* const> g) {
        const double d = self.grad[0];
        for (double& v : g[0]->data()) {
            v += d;
        }
    });
}

Var mean(const Var& a) {
    const std::size_t count = a.value().size();
    return scale(sum(a), count ? 1.0 / static_cast<double>(count) : 0.0);
}

Var cross_entropy_sum(const Var& logits, std::span<const int> targets) {
    const Tensor& x = logits.value();
    const std::size_t m = x.rows();
    const std::size_t n = x.cols();
    if (targets.size() != m) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(m) +
                         " rows");
    }
    auto probs = std::make_shared<Tensor>(Tensor::matrix(m, n));
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] < 0) {
            continue;
        }
        if (static_cast<std::size_t>(targets[i]) >= n) {
            throw InvalidArgument("cross_entropy target " + std::to_string(targets[i]) + " out of range");
        }
        double mx = x(i, 0);
        for (std::size_t j = 1; j < n; ++j) {
            mx = std::max(mx, x(i, j));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            z += std::exp(x(i, j) - mx);
        }
        const double log_z = mx + std::log(z);
        total += log_z - x(i, static_cast<std::size_t>(targets[i]));
        for (std::size_t j = 0; j < n; ++j) {
            (*probs)(i, j) = std::exp(x(i, j) - log_z);
        }
    }
    std::vector<int> t(targets.begin(), targets.end());
    return make_node(Tensor::scalar(total), {logits},
                     [probs, t = std::move(t), n](const Node& self, std::span<Tensor* const> g) {
                         const double d = self.grad[0];
                         for (std::size_t i = 0; i < t.size(); ++i) {
                             if (t[i] < 0) {
                                 continue;
                             }
                             for (std::size_t j = 0; j < n; ++j) {
                                 (*g[0])[i * n + j] += d * (*probs)(i, j);
                             }
                             (*g[0])[i * n + static_cast<std::size_t>(t[i])] -= d;
                         }
                     });
}

}  // namespace ad

}  // namespace infmem
