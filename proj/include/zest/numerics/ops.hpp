#pragma once

// Forward and backward rules for the fixed set of primitives the models use.
//
// Conventions: forward functions return a new tensor and fail on non-finite
// output. Backward functions return the gradient w.r.t. the data input and
// *accumulate* (+=) into parameter-gradient outputs, which the caller owns.

#include "zest/numerics/tensor.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>

namespace zest::num {

namespace detail {
inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}
}  // namespace detail

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul",
                  shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor<T> c(a.rows(), b.cols());
  as_eigen(c).noalias() = as_eigen(a) * as_eigen(b);
  check_finite("matmul", c);
  return c;
}

/// dA += dC B^T, dB += A^T dC. Either output may be null.
template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc, Tensor<T>* da,
                     Tensor<T>* db) {
  if (da) as_eigen(*da).noalias() += as_eigen(dc) * as_eigen(b).transpose();
  if (db) as_eigen(*db).noalias() += as_eigen(a).transpose() * as_eigen(dc);
}

// ---------------------------------------------------------------- add

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.same_shape(b), "add",
                  shape_string(a.shape()) + " + " + shape_string(b.shape()));
  Tensor<T> c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  check_finite("add", c);
  return c;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.same_shape(b), "add",
                  shape_string(a.shape()) + " + " + shape_string(b.shape()));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// ---------------------------------------------------------------- linear

/// y = x W + b, with x: r x in, W: in x out, b: 1 x out (broadcast over rows).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::require(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "linear",
                  shape_string(x.shape()) + " * " + shape_string(w.shape()) + " + " +
                      shape_string(b.shape()));
  Tensor<T> y(x.rows(), w.cols());
  auto ye = as_eigen(y);
  ye.noalias() = as_eigen(x) * as_eigen(w);
  ye.rowwise() += as_eigen(b).row(0);
  check_finite("linear", y);
  return y;
}

/// Returns dx; accumulates dW and db.
template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>& dw,
                          Tensor<T>& db) {
  Tensor<T> dx(x.rows(), x.cols());
  as_eigen(dx).noalias() = as_eigen(dy) * as_eigen(w).transpose();
  as_eigen(dw).noalias() += as_eigen(x).transpose() * as_eigen(dy);
  as_eigen(db).row(0) += as_eigen(dy).colwise().sum();
  return dx;
}

// ---------------------------------------------------------------- softmax

/// Row-wise softmax, max-shifted.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  Tensor<T> y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    T mx = in[0];
    for (T v : in) mx = std::max(mx, v);
    T sum = 0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    const T inv = T(1) / sum;
    for (T& v : out) v *= inv;
  }
  check_finite("softmax", y);
  return y;
}

/// dx_j = y_j (dy_j - sum_k dy_k y_k), per row.
template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto dyr = dy.row(r);
    T dot = 0;
    for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * dyr[c];
    auto dxr = dx.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) dxr[c] = yr[c] * (dyr[c] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------- layer norm

template <typename T>
struct LayerNormCache {
  Tensor<T> normalized;     // (x - mean) / std, before gain/bias
  std::vector<T> inv_std;   // per row
};

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalization with learnable gain and bias (both 1 x cols).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     LayerNormCache<T>* cache = nullptr) {
  detail::require(gain.size() == x.cols() && bias.size() == x.cols(), "layer_norm",
                  "gain/bias width " + std::to_string(gain.size()) + " vs input width " +
                      std::to_string(x.cols()));
  const std::size_t cols = x.cols();
  Tensor<T> y(x.rows(), cols);
  Tensor<T> normalized(x.rows(), cols);
  std::vector<T> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    T mean = 0;
    for (T v : in) mean += v;
    mean /= static_cast<T>(cols);
    T var = 0;
    for (T v : in) var += (v - mean) * (v - mean);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv_std[r] = is;
    auto nr = normalized.row(r);
    auto out = y.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      nr[c] = (in[c] - mean) * is;
      out[c] = nr[c] * gain[c] + bias[c];
    }
  }
  check_finite("layer_norm", y);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm_backward(const LayerNormCache<T>& cache, const Tensor<T>& gain,
                              const Tensor<T>& dy, Tensor<T>& dgain, Tensor<T>& dbias) {
  const Tensor<T>& xh = cache.normalized;
  const std::size_t cols = xh.cols();
  const T inv_cols = T(1) / static_cast<T>(cols);
  Tensor<T> dx(xh.rows(), cols);
  std::vector<T> dxh(cols);
  for (std::size_t r = 0; r < xh.rows(); ++r) {
    auto xr = xh.row(r);
    auto dyr = dy.row(r);
    T sum_dxh = 0;
    T sum_dxh_xh = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      dgain[c] += dyr[c] * xr[c];
      dbias[c] += dyr[c];
      dxh[c] = dyr[c] * gain[c];
      sum_dxh += dxh[c];
      sum_dxh_xh += dxh[c] * xr[c];
    }
    auto dxr = dx.row(r);
    const T is = cache.inv_std[r];
    for (std::size_t c = 0; c < cols; ++c) {
      dxr[c] = is * (dxh[c] - inv_cols * sum_dxh - xr[c] * inv_cols * sum_dxh_xh);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- gelu

template <typename T>
inline constexpr T kInvSqrt2 = T(0.70710678118654752440084436210484903928L);

/// Exact GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.values()) v = T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2<T>));
  check_finite("gelu", y);
  return y;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * kInvSqrt2<T>;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2<T>));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
    dx[i] = dy[i] * (cdf + v * pdf);
  }
  return dx;
}

// ---------------------------------------------------------------- pooling / concat

/// Mean over rows -> 1 x cols.
template <typename T>
Tensor<T> mean_pool(const Tensor<T>& x) {
  detail::require(x.rows() > 0, "mean_pool", "empty input");
  Tensor<T> y(1, x.cols());
  as_eigen(y).row(0) = as_eigen(x).colwise().mean();
  check_finite("mean_pool", y);
  return y;
}

template <typename T>
Tensor<T> mean_pool_backward(std::size_t rows, const Tensor<T>& dy) {
  Tensor<T> dx(rows, dy.cols());
  const T scale = T(1) / static_cast<T>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < dy.cols(); ++c) dx(r, c) = dy[c] * scale;
  }
  return dx;
}

/// Stacks `a` on top of `b`.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.cols() == b.cols(), "concat_rows",
                  shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> y(a.rows() + b.rows(), a.cols());
  std::copy(a.values().begin(), a.values().end(), y.data());
  std::copy(b.values().begin(), b.values().end(), y.data() + a.size());
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_rows_backward(const Tensor<T>& dy, std::size_t top_rows) {
  const std::size_t cols = dy.cols();
  std::vector<T> top(dy.data(), dy.data() + top_rows * cols);
  std::vector<T> bottom(dy.data() + top_rows * cols, dy.data() + dy.size());
  return {Tensor<T>::from_data({top_rows, cols}, std::move(top)),
          Tensor<T>::from_data({dy.rows() - top_rows, cols}, std::move(bottom))};
}

/// Places `a` left of `b` (column concatenation); used for conditioning inputs.
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rows() == b.rows(), "concat_cols",
                  shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> y(a.rows(), a.cols() + b.cols());
  as_eigen(y).leftCols(a.cols()) = as_eigen(a);
  as_eigen(y).rightCols(b.cols()) = as_eigen(b);
  return y;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  Tensor<T> y(x.rows(), count);
  as_eigen(y) = as_eigen(x).middleCols(begin, count);
  return y;
}

// ---------------------------------------------------------------- losses

/// Mean cross-entropy over the rows of `logits`; optionally writes
/// d(loss)/d(logits) into `dlogits`.
template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* dlogits = nullptr) {
  detail::require(labels.size() == logits.rows(), "cross_entropy", "label count mismatch");
  const Tensor<T> p = softmax_rows(logits);
  const std::size_t batch = logits.rows();
  T loss = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    const int y = labels[r];
    detail::require(y >= 0 && static_cast<std::size_t>(y) < logits.cols(), "cross_entropy",
                    "label " + std::to_string(y) + " out of range");
    // log-sum-exp form keeps the large-margin limit exact
    auto row = logits.row(r);
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T s = 0;
    for (T v : row) s += std::exp(v - mx);
    loss += (std::log(s) + mx) - row[static_cast<std::size_t>(y)];
  }
  loss /= static_cast<T>(batch);
  if (!std::isfinite(loss)) throw NumericError("non-finite output in cross_entropy");
  if (dlogits) {
    *dlogits = p;
    const T inv = T(1) / static_cast<T>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      (*dlogits)(r, static_cast<std::size_t>(labels[r])) -= T(1);
      for (T& v : dlogits->row(r)) v *= inv;
    }
  }
  return loss;
}

/// Sum of absolute errors per row, averaged over rows.
template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* dpred = nullptr) {
  detail::require(pred.same_shape(target), "l1_loss",
                  shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  const T inv = T(1) / static_cast<T>(pred.rows());
  T loss = 0;
  if (dpred) *dpred = Tensor<T>(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    loss += std::abs(d);
    if (dpred) (*dpred)[i] = (d > 0 ? inv : (d < 0 ? -inv : T(0)));
  }
  loss *= inv;
  if (!std::isfinite(loss)) throw NumericError("non-finite output in l1_loss");
  return loss;
}

/// Sum of squared errors per row, averaged over rows.
template <typename T>
T l2_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* dpred = nullptr) {
  detail::require(pred.same_shape(target), "l2_loss",
                  shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  const T inv = T(1) / static_cast<T>(pred.rows());
  T loss = 0;
  if (dpred) *dpred = Tensor<T>(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    loss += d * d;
    if (dpred) (*dpred)[i] = T(2) * d * inv;
  }
  loss *= inv;
  if (!std::isfinite(loss)) throw NumericError("non-finite output in l2_loss");
  return loss;
}

}  // namespace zest::num
