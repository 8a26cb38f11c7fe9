#pragma once

#include "zest/numerics/rng.hpp"
#include "zest/numerics/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace zest::num {

/// A trainable tensor with a gradient buffer of identical shape.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
};

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->grad.zero();
}

/// Uniform Xavier/Glorot init for a fan_in x fan_out weight.
template <typename T>
void xavier_uniform(Tensor<T>& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (T& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
void normal_init(Tensor<T>& w, Rng& rng, double stddev) {
  for (T& v : w.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

/// Copies values between parameter lists of matching names and shapes
/// (possibly different scalar types).
template <typename Dst, typename Src>
void copy_values(const std::vector<Parameter<Dst>*>& dst, const std::vector<const Parameter<Src>*>& src) {
  if (dst.size() != src.size()) throw ShapeError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || !(dst[i]->value.shape() == src[i]->value.shape())) {
      throw ShapeError("copy_values: mismatch at " + dst[i]->name);
    }
    for (std::size_t j = 0; j < dst[i]->value.size(); ++j) {
      dst[i]->value[j] = static_cast<Dst>(src[i]->value[j]);
    }
  }
}

}  // namespace zest::num
