#pragma once

#include <cstdint>

#include "couple/errors.hpp"
#include "couple/numerics/tensor.hpp"

namespace couple::numerics {

// Raised when the matrix maps the iterate to (numerically) zero.
class DegenerateIterate : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct PowerIterate {
  double sigma = 0.0;
  // Unit vector u of the final (u, v = A u) pair; sigma = |A u|.
  Tensor direction;
};

// Power iteration on a square symmetric matrix starting from a seeded random
// unit vector: repeat {u <- A v; v <- A u} iters times, sigma = |v| / |u|.
PowerIterate power_iterate(const Tensor& a, int iters, std::uint64_t seed);

double spectral_norm_estimate(const Tensor& a, int iters, std::uint64_t seed);

}  // namespace couple::numerics
