#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace infmem {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense float64 array, row-major. Most operations treat it as a matrix;
// rank-0/1 tensors are viewed as a single row.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
    static Tensor identity(std::size_t n);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] std::size_t rows() const noexcept {
        return shape_.size() < 2 ? 1 : data_.size() / shape_.back();
    }
    [[nodiscard]] std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] double* ptr() noexcept { return data_.data(); }
    [[nodiscard]] const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols(), cols()};
    }

    [[nodiscard]] double item() const;
    [[nodiscard]] Tensor reshaped(Shape shape) const;
    [[nodiscard]] Tensor transposed() const;

    void fill(double v);
    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Plain (untracked) kernels shared by the autodiff ops and the memory code.
namespace kernels {

// c = op(a) * op(b), optionally accumulating into c.
void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& c, bool accumulate = false);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // aᵀ·b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a·bᵀ

double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace kernels

}  // namespace infmem
