#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rfmia/tensor.hpp"

namespace rfmia {

struct OptimizerState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  explicit OptimizerState(double learning_rate = 1e-3) : lr(learning_rate) {}
};

/// One bias-corrected Adam update over `params`, then zeroes their grads.
/// Throws StateError if any parameter has no gradient.
void adam_step(OptimizerState& opt, std::span<Tensor> params);

}  // namespace rfmia
