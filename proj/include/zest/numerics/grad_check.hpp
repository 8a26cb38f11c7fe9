#pragma once

#include "zest/numerics/param.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zest::num {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares analytic gradients against central finite differences.
///
/// `loss` must be deterministic. When called with `true` it must also
/// accumulate d(loss)/d(param) into every parameter's grad buffer; the
/// buffers are zeroed before that call. The error per element is
/// |g_a - g_fd| / max(1, |g_a|, |g_fd|).
inline GradCheckResult grad_check(const std::function<double(bool)>& loss,
                                  const std::vector<Parameter<double>*>& params, double eps = 1e-5) {
  if (eps < 1e-6 || eps > 1e-3) throw std::invalid_argument("grad_check: eps must be in [1e-6, 1e-3]");
  zero_grads(params);
  loss(true);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<double>& p = *params[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double saved = p.value[j];
      p.value[j] = saved + eps;
      const double up = loss(false);
      p.value[j] = saved - eps;
      const double down = loss(false);
      p.value[j] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double ga = analytic[i][j];
      const double err = std::abs(ga - fd) / std::max({1.0, std::abs(ga), std::abs(fd)});
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = j;
      }
    }
  }
  return result;
}

}  // namespace zest::num
