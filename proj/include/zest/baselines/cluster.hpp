#pragma once

#include "zest/numerics/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace zest::base {

using num::Tensor;

struct ClusterResult {
  std::vector<int> assignments;
  Tensor<float> centers;               // k x d
  double inertia = 0;                  // after the final assignment
  std::vector<double> inertia_history; // one entry per assignment step
  std::size_t iterations = 0;          // assignment steps performed
  bool converged = false;
};

struct KMeansOptions {
  std::size_t max_iter = 100;
  std::uint64_t seed = 1;
  /// Random initializations tried; the run with the lowest final inertia
  /// is kept. Ignored with explicit initial centers.
  std::size_t restarts = 10;
  /// When set, Lloyd starts from these centers (k x d) instead of k
  /// distinct random points.
  std::optional<Tensor<float>> initial_centers;
};

/// Lloyd iterations until the assignment stops changing or max_iter.
/// A cluster that loses all its points is re-seeded at the point farthest
/// from its current center.
ClusterResult kmeans(const Tensor<float>& points, std::size_t k, const KMeansOptions& options = {});

/// Index of the nearest center (lowest index on ties), optionally
/// restricted to centers with allowed[c] set.
int nearest_center(const Tensor<float>& centers, std::span<const float> x, const std::vector<bool>* allowed = nullptr);

/// Minimum-cost assignment for an n x m cost matrix with n <= m; returns
/// the column chosen for each row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

struct ClusterMapping {
  std::vector<int> cluster_to_label;  // -1 when a cluster is left unmatched
  double accuracy = 0;
};

/// Best one-to-one cluster -> label mapping by Hungarian assignment on the
/// contingency table, and the accuracy under it. `num_clusters` defaults to
/// max(assignment)+1; labels may be any integers.
ClusterMapping cluster_accuracy(std::span<const int> assignments, std::span<const int> labels,
                                std::optional<std::size_t> num_clusters = std::nullopt);

}  // namespace zest::base
