#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfn/tensor.hpp"

namespace gfn::diff {

/// Adam optimizer state; moment tensors are sized on the first step and must
/// shape-match the parameters afterwards.
struct AdamState {
  double learning_rate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  explicit AdamState(double lr) : learning_rate(lr) {}
};

/// One bias-corrected Adam update over a flat parameter list.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace gfn::diff
