#pragma once

#include "zest/numerics/ops.hpp"
#include "zest/numerics/param.hpp"

#include <cmath>
#include <vector>

namespace zest::num {

/// Projection weights of one multi-head self-attention layer.
template <typename T>
struct AttentionWeights {
  Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;

  AttentionWeights(const std::string& prefix, std::size_t width)
      : wq(prefix + ".wq", width, width),
        bq(prefix + ".bq", 1, width),
        wk(prefix + ".wk", width, width),
        bk(prefix + ".bk", 1, width),
        wv(prefix + ".wv", width, width),
        bv(prefix + ".bv", 1, width),
        wo(prefix + ".wo", width, width),
        bo(prefix + ".bo", 1, width) {}

  std::vector<Parameter<T>*> parameters() { return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}; }
  std::vector<const Parameter<T>*> parameters() const {
    return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo};
  }
};

template <typename T>
struct AttentionCache {
  Tensor<T> input;
  Tensor<T> q, k, v;
  std::vector<Tensor<T>> weights;  // per head, rows x rows, row-stochastic
  Tensor<T> heads_out;             // concatenated head outputs, rows x width
};

/// Scaled dot-product self-attention with `heads` heads over the rows of x.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionWeights<T>& w, std::size_t heads,
                               AttentionCache<T>* cache = nullptr) {
  const std::size_t width = x.cols();
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("multi_head_attention: width " + std::to_string(width) +
                     " not divisible by heads " + std::to_string(heads));
  }
  const std::size_t rows = x.rows();
  const std::size_t head_dim = width / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));

  Tensor<T> q = linear(x, w.wq.value, w.bq.value);
  Tensor<T> k = linear(x, w.wk.value, w.bk.value);
  Tensor<T> v = linear(x, w.wv.value, w.bv.value);
  Tensor<T> heads_out(rows, width);
  std::vector<Tensor<T>> attn;
  if (cache) attn.reserve(heads);

  const auto qe = as_eigen(q);
  const auto ke = as_eigen(k);
  const auto ve = as_eigen(v);
  auto oe = as_eigen(heads_out);
  Tensor<T> scores(rows, rows);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h * head_dim);
    const auto hd = static_cast<Eigen::Index>(head_dim);
    as_eigen(scores).noalias() = scale * (qe.middleCols(c0, hd) * ke.middleCols(c0, hd).transpose());
    Tensor<T> a = softmax_rows(scores);
    oe.middleCols(c0, hd).noalias() = as_eigen(a) * ve.middleCols(c0, hd);
    if (cache) attn.push_back(std::move(a));
  }
  Tensor<T> out = linear(heads_out, w.wo.value, w.bo.value);
  check_finite("multi_head_attention", out);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(attn);
    cache->heads_out = std::move(heads_out);
  }
  return out;
}

/// Returns d(loss)/dx and accumulates into the weight gradients.
template <typename T>
Tensor<T> multi_head_attention_backward(const AttentionCache<T>& cache, AttentionWeights<T>& w,
                                        const Tensor<T>& dout) {
  const std::size_t rows = cache.input.rows();
  const std::size_t width = cache.input.cols();
  const std::size_t heads = cache.weights.size();
  const std::size_t head_dim = width / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));

  Tensor<T> dheads = linear_backward(cache.heads_out, w.wo.value, dout, w.wo.grad, w.bo.grad);
  Tensor<T> dq(rows, width), dk(rows, width), dv(rows, width);
  const auto qe = as_eigen(cache.q);
  const auto ke = as_eigen(cache.k);
  const auto ve = as_eigen(cache.v);
  const auto dhe = as_eigen(dheads);
  Tensor<T> da(rows, rows);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h * head_dim);
    const auto hd = static_cast<Eigen::Index>(head_dim);
    const Tensor<T>& a = cache.weights[h];
    as_eigen(da).noalias() = dhe.middleCols(c0, hd) * ve.middleCols(c0, hd).transpose();
    as_eigen(dv).middleCols(c0, hd).noalias() = as_eigen(a).transpose() * dhe.middleCols(c0, hd);
    Tensor<T> ds = softmax_rows_backward(a, da);
    as_eigen(dq).middleCols(c0, hd).noalias() = scale * (as_eigen(ds) * ke.middleCols(c0, hd));
    as_eigen(dk).middleCols(c0, hd).noalias() =
        scale * (as_eigen(ds).transpose() * qe.middleCols(c0, hd));
  }
  Tensor<T> dx = linear_backward(cache.input, w.wq.value, dq, w.wq.grad, w.bq.grad);
  add_inplace(dx, linear_backward(cache.input, w.wk.value, dk, w.wk.grad, w.bk.grad));
  add_inplace(dx, linear_backward(cache.input, w.wv.value, dv, w.wv.grad, w.bv.grad));
  return dx;
}

}  // namespace zest::num
