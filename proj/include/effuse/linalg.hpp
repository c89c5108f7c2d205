#pragma once

#include "effuse/tensor.hpp"

namespace effuse {

// Solves A X = B for symmetric positive definite A [n x n] via Cholesky;
// B is [n x m]. Throws a numeric error when A is not positive definite.
Tensor spd_solve(const Tensor& a, const Tensor& b);

// X^T X and X^T Y building blocks for normal equations.
Tensor gram(const Tensor& x);                      // [d x d]
Tensor cross_gram(const Tensor& x, const Tensor& y);  // [dx x dy]

}  // namespace effuse
