#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "couple/numerics/tensor.hpp"

namespace couple::numerics {

struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  // Zero moments shaped like params.
  static AdamState for_params(std::span<const Tensor> params, double lr);
};

// Bias-corrected Adam update, applied in place:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads);

}  // namespace couple::numerics
