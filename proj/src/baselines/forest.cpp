#include "zest/baselines/forest.hpp"

#include "zest/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace zest::base {

namespace {

double gini(std::span<const std::size_t> counts, std::size_t total) {
  if (total == 0) return 0;
  double s = 0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    s += p * p;
  }
  return 1.0 - s;
}

int majority(std::span<const std::size_t> counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace

void DecisionTree::fit(const num::Tensor<float>& x, std::span<const int> y, std::span<const std::size_t> rows,
                       std::size_t num_classes, const ForestConfig& config, std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("decision tree: no training rows");
  const std::size_t d = x.cols();
  const std::size_t mtry = config.max_features
                               ? std::min(config.max_features, d)
                               : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d)))));
  num::Rng rng(seed);
  nodes_.clear();
  std::vector<std::size_t> features(d);
  std::iota(features.begin(), features.end(), std::size_t{0});

  std::function<std::size_t(std::vector<std::size_t>, std::size_t)> build =
      [&](std::vector<std::size_t> idx, std::size_t depth) -> std::size_t {
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i : idx) ++counts[static_cast<std::size_t>(y[i])];
    const std::size_t node = nodes_.size();
    nodes_.push_back({-1, 0, 0, 0, majority(counts)});
    const double parent = gini(counts, idx.size());
    if (depth >= config.max_depth || idx.size() < config.min_samples_split || parent == 0.0) return node;

    rng.shuffle(std::span<std::size_t>(features));
    double best_score = parent;
    int best_feature = -1;
    float best_threshold = 0;
    std::vector<std::pair<float, int>> column(idx.size());
    for (std::size_t f = 0; f < mtry; ++f) {
      const std::size_t feat = features[f];
      for (std::size_t k = 0; k < idx.size(); ++k) column[k] = {x(idx[k], feat), y[idx[k]]};
      std::sort(column.begin(), column.end());
      std::vector<std::size_t> left(num_classes, 0), right = counts;
      for (std::size_t k = 0; k + 1 < column.size(); ++k) {
        const auto label = static_cast<std::size_t>(column[k].second);
        ++left[label];
        --right[label];
        if (column[k].first == column[k + 1].first) continue;
        const std::size_t nl = k + 1, nr = column.size() - nl;
        const double score = (static_cast<double>(nl) * gini(left, nl) + static_cast<double>(nr) * gini(right, nr)) /
                             static_cast<double>(column.size());
        // Equal scores go to the lower feature, then the lower threshold, so
        // the split does not depend on the order features were drawn in.
        const bool better = score < best_score - 1e-12 ||
                            (best_feature >= 0 && score <= best_score + 1e-12 && static_cast<int>(feat) < best_feature);
        if (better) {
          best_score = score;
          best_feature = static_cast<int>(feat);
          best_threshold = column[k].first + (column[k + 1].first - column[k].first) * 0.5f;
          if (!(best_threshold < column[k + 1].first)) best_threshold = column[k].first;
        }
      }
    }
    if (best_feature < 0) return node;
    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) (x(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? li : ri).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const std::size_t l = build(std::move(li), depth + 1);
    const std::size_t r = build(std::move(ri), depth + 1);
    nodes_[node].feature = best_feature;
    nodes_[node].threshold = best_threshold;
    nodes_[node].left = l;
    nodes_[node].right = r;
    return node;
  };
  build(std::vector<std::size_t>(rows.begin(), rows.end()), 0);
}

int DecisionTree::predict(std::span<const float> x) const {
  std::size_t n = 0;
  while (nodes_[n].feature >= 0) {
    n = x[static_cast<std::size_t>(nodes_[n].feature)] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
  }
  return nodes_[n].label;
}

std::size_t DecisionTree::depth() const {
  std::function<std::size_t(std::size_t)> walk = [&](std::size_t n) -> std::size_t {
    if (nodes_[n].feature < 0) return 0;
    return 1 + std::max(walk(nodes_[n].left), walk(nodes_[n].right));
  };
  return nodes_.empty() ? 0 : walk(0);
}

void RandomForest::fit(const num::Tensor<float>& x, std::span<const int> y, std::size_t num_classes,
                       const ForestConfig& config) {
  if (x.rows() != y.size() || x.rows() == 0) throw std::invalid_argument("random forest: need one label per row");
  if (config.trees == 0) throw std::invalid_argument("random forest: need at least one tree");
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw std::invalid_argument("random forest: label " + std::to_string(label) + " out of range");
    }
  }
  num_classes_ = num_classes;
  trees_.assign(config.trees, DecisionTree{});
  const std::size_t n = x.rows();
  for (std::size_t t = 0; t < config.trees; ++t) {
    num::Rng rng = num::Rng::derive(config.seed, 0x74726565ULL + t);
    std::vector<std::size_t> rows(n);
    if (config.bootstrap) {
      for (auto& r : rows) r = rng.below(n);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    trees_[t].fit(x, y, rows, num_classes, config, rng.next());
  }
}

std::vector<std::size_t> RandomForest::votes(std::span<const float> x) const {
  std::vector<std::size_t> v(num_classes_, 0);
  for (const auto& t : trees_) ++v[static_cast<std::size_t>(t.predict(x))];
  return v;
}

int RandomForest::predict(std::span<const float> x) const { return majority(votes(x)); }

}  // namespace zest::base
