#pragma once

#include "zest/numerics/param.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace zest::num {

struct AdamOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for a fixed parameter list.
template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;
  AdamOptions options;
};

/// Bias-corrected Adam step over `params` using their gradient buffers.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, OptimizerState<T>& state) {
  if (!(state.options.learning_rate > 0)) throw std::invalid_argument("adam: learning rate must be > 0");
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam: optimizer state does not match parameter list");
  }
  ++state.step;
  const double b1 = state.options.beta1;
  const double b2 = state.options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = state.options.learning_rate;
  const double eps = state.options.epsilon;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    if (!m.same_shape(p.value)) throw ShapeError("adam: moment shape mismatch for " + p.name);
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + eps);
      p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) - update);
    }
  }
}

}  // namespace zest::num
