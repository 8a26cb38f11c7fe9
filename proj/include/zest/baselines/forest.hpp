#pragma once

#include "zest/numerics/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace zest::base {

struct ForestConfig {
  std::size_t trees = 50;
  std::size_t max_depth = 10;
  std::size_t min_samples_split = 2;
  bool bootstrap = true;
  std::size_t max_features = 0;  // 0: max(1, round(sqrt(d)))
  std::uint64_t seed = 1;
};

/// CART classification tree with Gini impurity. Labels are 0..num_classes-1.
class DecisionTree {
 public:
  void fit(const num::Tensor<float>& x, std::span<const int> y, std::span<const std::size_t> rows,
           std::size_t num_classes, const ForestConfig& config, std::uint64_t seed);
  int predict(std::span<const float> x) const;
  std::size_t depth() const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1 for a leaf
    float threshold = 0;
    std::size_t left = 0, right = 0;
    int label = 0;
  };
  std::vector<Node> nodes_;
};

class RandomForest {
 public:
  void fit(const num::Tensor<float>& x, std::span<const int> y, std::size_t num_classes, const ForestConfig& config);
  /// Vote count per class.
  std::vector<std::size_t> votes(std::span<const float> x) const;
  /// Majority vote, lowest label on ties.
  int predict(std::span<const float> x) const;
  const std::vector<DecisionTree>& trees() const { return trees_; }
  std::size_t num_classes() const { return num_classes_; }

 private:
  std::vector<DecisionTree> trees_;
  std::size_t num_classes_ = 0;
};

}  // namespace zest::base
