#include "rfmia/adam.hpp"

#include <cmath>

#include "rfmia/errors.hpp"

namespace rfmia {

void adam_step(OptimizerState& opt, std::span<Tensor> params) {
  if (!(opt.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw StateError("adam: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  if (opt.first_moment.empty()) {
    for (const Tensor& p : params) {
      opt.first_moment.emplace_back(p.size(), 0.0);
      opt.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (opt.first_moment.size() != params.size()) {
    throw StateError("adam: optimizer state tracks " + std::to_string(opt.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }

  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto g = params[i].mutable_grad();
    auto& m = opt.first_moment[i];
    auto& v = opt.second_moment[i];
    if (m.size() != w.size()) throw StateError("adam: moment buffer shape mismatch");
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      w[j] -= opt.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt.eps);
      g[j] = 0.0;
    }
  }
}

}  // namespace rfmia
