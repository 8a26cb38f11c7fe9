#include "zest/baselines/cluster.hpp"

#include "zest/numerics/rng.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace zest::base {

namespace {

double sq_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

}  // namespace

int nearest_center(const Tensor<float>& centers, std::span<const float> x, const std::vector<bool>* allowed) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    if (allowed && !(*allowed)[c]) continue;
    const double d = sq_distance(centers.row(c), x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (best < 0) throw std::invalid_argument("nearest_center: no eligible center");
  return best;
}

namespace {

ClusterResult lloyd(const Tensor<float>& points, std::size_t k, const KMeansOptions& options, std::uint64_t stream) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  ClusterResult r;
  if (options.initial_centers) {
    r.centers = *options.initial_centers;
  } else {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    num::Rng rng = num::Rng::derive(options.seed, 0x6b6d65616e73ULL + stream);
    rng.shuffle(std::span<std::size_t>(idx));
    r.centers = Tensor<float>(k, d);
    for (std::size_t c = 0; c < k; ++c) std::copy(points.row(idx[c]).begin(), points.row(idx[c]).end(), r.centers.row(c).begin());
  }

  r.assignments.assign(n, -1);
  std::vector<double> dist(n, 0.0);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(options.max_iter, 1); ++iter) {
    bool changed = false;
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest_center(r.centers, points.row(i));
      changed |= c != r.assignments[i];
      r.assignments[i] = c;
      dist[i] = sq_distance(r.centers.row(static_cast<std::size_t>(c)), points.row(i));
      inertia += dist[i];
    }
    r.inertia = inertia;
    r.inertia_history.push_back(inertia);
    r.iterations = iter + 1;
    if (!changed) {
      r.converged = true;
      break;
    }

    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.assignments[i]);
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c][j] += points(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) r.centers(c, j) = static_cast<float>(sums[c][j] / static_cast<double>(counts[c]));
    }
    // Distances against the updated centers decide which point is farthest.
    for (std::size_t i = 0; i < n; ++i) dist[i] = sq_distance(r.centers.row(static_cast<std::size_t>(r.assignments[i])), points.row(i));
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      std::copy(points.row(far).begin(), points.row(far).end(), r.centers.row(c).begin());
      dist[far] = 0;
    }
  }
  return r;
}

}  // namespace

ClusterResult kmeans(const Tensor<float>& points, std::size_t k, const KMeansOptions& options) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > points.rows()) {
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds the number of points (" +
                                std::to_string(points.rows()) + ")");
  }
  if (options.initial_centers) {
    const auto& c = *options.initial_centers;
    if (c.rows() != k || c.cols() != points.cols()) {
      throw std::invalid_argument("kmeans: seeded init must supply exactly k centers");
    }
    return lloyd(points, k, options, 0);
  }
  ClusterResult best = lloyd(points, k, options, 0);
  for (std::size_t run = 1; run < std::max<std::size_t>(options.restarts, 1); ++run) {
    auto r = lloyd(points, k, options, run);
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost[0].size();
  if (n > m) throw std::invalid_argument("hungarian: more rows than columns");
  for (const auto& row : cost) {
    if (row.size() != m) throw std::invalid_argument("hungarian: ragged cost matrix");
  }
  // Shortest augmenting path with potentials; 1-based with column 0 as a sentinel.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(m + 1, 0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

ClusterMapping cluster_accuracy(std::span<const int> assignments, std::span<const int> labels,
                                std::optional<std::size_t> num_clusters) {
  if (assignments.size() != labels.size()) {
    throw std::invalid_argument("cluster_accuracy: " + std::to_string(assignments.size()) + " assignments for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (assignments.empty()) throw std::invalid_argument("cluster_accuracy: no samples");
  std::size_t k = num_clusters.value_or(0);
  for (int a : assignments) {
    if (a < 0) throw std::invalid_argument("cluster_accuracy: negative cluster index");
    if (!num_clusters) k = std::max(k, static_cast<std::size_t>(a) + 1);
    else if (static_cast<std::size_t>(a) >= k) throw std::invalid_argument("cluster_accuracy: cluster index out of range");
  }
  std::map<int, std::size_t> label_index;
  for (int l : labels) label_index.emplace(l, 0);
  std::vector<int> label_values;
  for (auto& [l, idx] : label_index) {
    idx = label_values.size();
    label_values.push_back(l);
  }
  const std::size_t size = std::max(k, label_values.size());
  std::vector<std::vector<double>> counts(size, std::vector<double>(size, 0.0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    counts[static_cast<std::size_t>(assignments[i])][label_index.at(labels[i])] += 1.0;
  }
  std::vector<std::vector<double>> cost(size, std::vector<double>(size));
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) cost[r][c] = -counts[r][c];
  }
  const auto match = hungarian(cost);
  ClusterMapping out;
  out.cluster_to_label.assign(k, -1);
  double correct = 0;
  for (std::size_t r = 0; r < k; ++r) {
    const auto c = static_cast<std::size_t>(match[r]);
    if (c < label_values.size()) {
      out.cluster_to_label[r] = label_values[c];
      correct += counts[r][c];
    }
  }
  out.accuracy = correct / static_cast<double>(labels.size());
  return out;
}

}  // namespace zest::base
