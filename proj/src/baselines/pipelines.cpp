#include "zest/baselines/pipelines.hpp"

#include <algorithm>
#include <stdexcept>

namespace zest::base {

std::vector<std::string> baseline_names() { return {"vae-k", "seqcr", "seqcs", "deft"}; }

namespace {

bool is_unseen(const BaselineData& data, int label) {
  return std::find(data.unseen.begin(), data.unseen.end(), label) != data.unseen.end();
}

/// Names each cluster after the device whose prototype (attribute vector,
/// or its analog in the compressed space) is matched to the cluster center
/// by a minimum-distance assignment. No labels of unseen devices are used.
ClusterMapping map_clusters(const BaselineData& data, const ClusterResult& clustering, const Tensor<float>& prototypes) {
  const std::size_t k = data.classes.size();
  std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) {
      double s = 0;
      for (std::size_t j = 0; j < prototypes.cols(); ++j) {
        const double diff = static_cast<double>(clustering.centers(c, j)) - prototypes(d, j);
        s += diff * diff;
      }
      cost[c][d] = s;
    }
  }
  const auto match = hungarian(cost);
  ClusterMapping m;
  m.cluster_to_label.resize(k);
  for (std::size_t c = 0; c < k; ++c) m.cluster_to_label[c] = data.classes[static_cast<std::size_t>(match[c])];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.fit_labels.size(); ++i) {
    hits += m.cluster_to_label[static_cast<std::size_t>(clustering.assignments[i])] == data.fit_labels[i];
  }
  m.accuracy = data.fit_labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(data.fit_labels.size());
  return m;
}

/// Turns per-test-point cluster choices into the two reports.
/// `assign(i, allowed)` returns the cluster of test row i, restricted to the
/// allowed clusters when non-null.
template <typename Assign>
BaselineOutcome score(const std::string& name, const BaselineData& data, ClusterResult clustering,
                      const Tensor<float>& prototypes, Assign assign) {
  const std::size_t k = data.classes.size();
  BaselineOutcome out;
  out.mapping = map_clusters(data, clustering, prototypes);
  out.clustering = std::move(clustering);

  std::vector<int> predicted(data.test_labels.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    predicted[i] = out.mapping.cluster_to_label[static_cast<std::size_t>(assign(i, nullptr))];
  }
  out.gzsl = clf::make_report(name, clf::Setting::kGzsl, data.classes, data.class_names, data.test_labels, predicted,
                              data.unseen);

  std::vector<bool> allowed(k, false);
  bool any = false;
  for (std::size_t c = 0; c < k; ++c) {
    allowed[c] = is_unseen(data, out.mapping.cluster_to_label[c]);
    any |= allowed[c];
  }
  std::vector<int> truth, zsl_predicted;
  for (std::size_t i = 0; i < data.test_labels.size(); ++i) {
    if (!is_unseen(data, data.test_labels[i])) continue;
    truth.push_back(data.test_labels[i]);
    zsl_predicted.push_back(any ? out.mapping.cluster_to_label[static_cast<std::size_t>(assign(i, &allowed))] : -1);
  }
  std::vector<std::string> unseen_names;
  for (int u : data.unseen) {
    const auto it = std::find(data.classes.begin(), data.classes.end(), u);
    unseen_names.push_back(data.class_names[static_cast<std::size_t>(it - data.classes.begin())]);
  }
  out.zsl = clf::make_report(name, clf::Setting::kZsl, data.unseen, unseen_names, truth, zsl_predicted);
  const std::string note = "clusters named by matching centers to device attribute vectors";
  out.gzsl.note = out.zsl.note = note;
  return out;
}

void check(const BaselineData& data) {
  const std::size_t k = data.classes.size();
  if (k < 2) throw std::invalid_argument("baselines: need at least 2 devices");
  if (data.attributes.rows() != k) {
    throw std::invalid_argument("baselines: missing attribute vector for seeding (" +
                                std::to_string(data.attributes.rows()) + " of " + std::to_string(k) + ")");
  }
  if (data.fit_lambda.rows() != data.fit_labels.size() || data.fit_l.rows() != data.fit_labels.size()) {
    throw std::invalid_argument("baselines: fit pool rows do not match labels");
  }
  if (data.test_lambda.rows() != data.test_labels.size() || data.test_l.rows() != data.test_labels.size()) {
    throw std::invalid_argument("baselines: test rows do not match labels");
  }
}

}  // namespace

std::pair<Tensor<float>, Tensor<float>> vae_compress(const BaselineData& data, const BaselineConfig& config) {
  cvae::CvaeConfig vc = config.vae;
  vc.input_dim = data.fit_l.cols();
  vc.cond_dim = 0;
  vc.z_dim = data.attributes.cols();
  vc.seed = config.seed;
  const Tensor<float> none_fit(data.fit_l.rows(), 0);
  const auto trained = cvae::train_cvae_rows(data.fit_l, none_fit, vc);
  const Tensor<float> none_test(data.test_l.rows(), 0);
  return {trained.model.encode_mean(data.fit_l, none_fit), trained.model.encode_mean(data.test_l, none_test)};
}

BaselineOutcome run_baseline(const std::string& name, const BaselineData& data, const BaselineConfig& config) {
  check(data);
  const std::size_t k = data.classes.size();
  KMeansOptions km;
  km.max_iter = config.kmeans_max_iter;
  km.restarts = config.kmeans_restarts;
  km.seed = config.seed;

  if (name == "vae-k") {
    const auto [fit, test] = vae_compress(data, config);
    // Device prototypes in the compressed space: per-device mean of the
    // compressed non-test rows, the analog of the attribute vectors.
    Tensor<float> prototypes(k, fit.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < data.fit_labels.size(); ++i) {
      const auto it = std::find(data.classes.begin(), data.classes.end(), data.fit_labels[i]);
      const auto d = static_cast<std::size_t>(it - data.classes.begin());
      ++counts[d];
      for (std::size_t j = 0; j < fit.cols(); ++j) prototypes(d, j) += fit(i, j);
    }
    for (std::size_t d = 0; d < k; ++d) {
      if (counts[d] == 0) throw std::invalid_argument("vae-k: device " + data.class_names[d] + " has no non-test rows");
      for (std::size_t j = 0; j < fit.cols(); ++j) prototypes(d, j) /= static_cast<float>(counts[d]);
    }
    ClusterResult c = kmeans(fit, k, km);
    const Tensor<float> centers = c.centers;
    return score(name, data, std::move(c), prototypes, [&](std::size_t i, const std::vector<bool>* allowed) {
      return nearest_center(centers, test.row(i), allowed);
    });
  }
  if (name == "seqcr" || name == "seqcs" || name == "deft") {
    if (name != "seqcr") km.initial_centers = data.attributes;
    ClusterResult c = kmeans(data.fit_lambda, k, km);
    const Tensor<float> centers = c.centers;
    if (name != "deft") {
      return score(name, data, std::move(c), data.attributes, [&](std::size_t i, const std::vector<bool>* allowed) {
        return nearest_center(centers, data.test_lambda.row(i), allowed);
      });
    }
    RandomForest forest;
    ForestConfig fc = config.forest;
    fc.seed = config.seed;
    forest.fit(data.fit_lambda, c.assignments, k, fc);
    return score(name, data, std::move(c), data.attributes, [&](std::size_t i, const std::vector<bool>* allowed) {
      const auto v = forest.votes(data.test_lambda.row(i));
      int best = -1;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (allowed && !(*allowed)[j]) continue;
        if (best < 0 || v[j] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
      }
      return best;
    });
  }
  throw std::invalid_argument("unknown baseline '" + name + "' (expected vae-k, seqcr, seqcs or deft)");
}

}  // namespace zest::base
