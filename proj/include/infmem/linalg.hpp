#pragma once

#include "infmem/tensor.hpp"

namespace infmem {

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
// Throws NotPositiveDefinite naming the first pivot that is not strictly positive, or not
// above rel_tol times the original diagonal entry.
Tensor cholesky(const Tensor& a, double rel_tol = 0.0);

// Solves A·X = Y for SPD A via Cholesky and two triangular solves. Y is n×m.
Tensor solve_spd(const Tensor& a, const Tensor& y, double rel_tol = 0.0);

}  // namespace infmem
