#include "infmem/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "infmem/errors.hpp"

namespace infmem {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged initializer for tensor");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        t(i, i) = 1.0;
    }
    return t;
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
    const std::size_t r = rows();
    const std::size_t c = cols();
    Tensor out = matrix(c, r);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out(j, i) = (*this)(i, j);
        }
    }
    return out;
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.size() != size()) {
        throw ShapeError("+= between " + shape_string(shape_) + " and " + shape_string(other.shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) {
        v *= s;
    }
    return *this;
}

namespace kernels {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

ConstMap as_matrix(const Tensor& t) {
    return {t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

}  // namespace

void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& c, bool accumulate) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t ka = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (ka != kb) {
        throw ShapeError("matmul inner dimensions differ: " + shape_string(a.shape()) + (trans_a ? "ᵀ" : "") +
                         " · " + shape_string(b.shape()) + (trans_b ? "ᵀ" : ""));
    }
    if (!accumulate || c.rows() != m || c.cols() != n || c.rank() != 2) {
        if (accumulate && c.size() != 0) {
            throw ShapeError("gemm accumulate target has wrong shape " + shape_string(c.shape()));
        }
        c = Tensor::matrix(m, n);
    }
    Map out(c.ptr(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    const auto am = as_matrix(a);
    const auto bm = as_matrix(b);
    if (!trans_a && !trans_b) {
        out.noalias() += am * bm;
    } else if (trans_a && !trans_b) {
        out.noalias() += am.transpose() * bm;
    } else if (!trans_a && trans_b) {
        out.noalias() += am * bm.transpose();
    } else {
        out.noalias() += am.transpose() * bm.transpose();
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor c;
    gemm(a, false, b, false, c);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    Tensor c;
    gemm(a, true, b, false, c);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    Tensor c;
    gemm(a, false, b, true, c);
    return c;
}

double frobenius_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw ShapeError("max_abs_diff between " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace kernels

}  // namespace infmem
