#include "infmem/linalg.hpp"

#include <cmath>

#include "infmem/errors.hpp"

namespace infmem {

Tensor cholesky(const Tensor& a, double rel_tol) {
    const std::size_t n = a.rows();
    if (a.rank() != 2 || a.cols() != n) {
        throw ShapeError("cholesky expects a square matrix, got " + shape_string(a.shape()));
    }
    Tensor l = Tensor::matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        const double* lj = l.ptr() + j * n;
        for (std::size_t k = 0; k < j; ++k) {
            d -= lj[k] * lj[k];
        }
        if (!(d > rel_tol * a(j, j)) || !(d > 0.0) || !std::isfinite(d)) {
            throw NotPositiveDefinite(j, d);
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const double* li = l.ptr() + i * n;
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                s -= li[k] * lj[k];
            }
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Tensor solve_spd(const Tensor& a, const Tensor& y, double rel_tol) {
    const std::size_t n = a.rows();
    if (y.rows() != n || (y.rank() == 2 && y.shape()[0] != n)) {
        throw ShapeError("solve_spd: right-hand side " + shape_string(y.shape()) + " does not match " +
                         shape_string(a.shape()));
    }
    const Tensor l = cholesky(a, rel_tol);
    const std::size_t m = y.cols();
    Tensor x = Tensor::matrix(n, m);
    std::copy(y.data().begin(), y.data().end(), x.ptr());
    // forward: L·Z = Y
    for (std::size_t i = 0; i < n; ++i) {
        double* xi = x.ptr() + i * m;
        for (std::size_t k = 0; k < i; ++k) {
            const double lik = l(i, k);
            const double* xk = x.ptr() + k * m;
            for (std::size_t c = 0; c < m; ++c) {
                xi[c] -= lik * xk[c];
            }
        }
        const double inv = 1.0 / l(i, i);
        for (std::size_t c = 0; c < m; ++c) {
            xi[c] *= inv;
        }
    }
    // backward: Lᵀ·X = Z
    for (std::size_t ii = n; ii-- > 0;) {
        double* xi = x.ptr() + ii * m;
        for (std::size_t k = ii + 1; k < n; ++k) {
            const double lki = l(k, ii);
            const double* xk = x.ptr() + k * m;
            for (std::size_t c = 0; c < m; ++c) {
                xi[c] -= lki * xk[c];
            }
        }
        const double inv = 1.0 / l(ii, ii);
        for (std::size_t c = 0; c < m; ++c) {
            xi[c] *= inv;
        }
    }
    return x;
}

}  // namespace infmem
