#include "zest/classifier/svm.hpp"

#include "zest/numerics/rng.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace zest::clf {

void SvmConfig::validate() const {
  if (!(c > 0)) throw std::invalid_argument("svm: C must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("svm: learning rate must be positive");
  if (epochs == 0) throw std::invalid_argument("svm: epochs must be positive");
}

nlohmann::json SvmConfig::to_json() const {
  return {{"c", c}, {"epochs", epochs}, {"learning_rate", learning_rate}, {"seed", seed}};
}

SvmConfig SvmConfig::from_json(const nlohmann::json& j) {
  SvmConfig s;
  s.c = j.at("c");
  s.epochs = j.at("epochs");
  s.learning_rate = j.at("learning_rate");
  s.seed = j.at("seed");
  return s;
}

namespace {

double dot(std::span<const double> w, std::span<const float> x) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * static_cast<double>(x[i]);
  return s;
}

/// Exact minimizer over b of the mean hinge for fixed w. The hinge of
/// sample i has its kink at b = y_i - w.x_i; sweep the kinks in order and
/// stop where the slope turns non-negative.
double best_bias(const num::Tensor<float>& x, std::span<const int> y, std::span<const double> w) {
  std::vector<std::pair<double, int>> kinks(x.rows());
  double slope = 0;  // at b -> -inf every positive sample is active
  for (std::size_t i = 0; i < x.rows(); ++i) {
    kinks[i] = {y[i] - dot(w, x.row(i)), y[i]};
    if (y[i] > 0) slope -= 1;
  }
  std::sort(kinks.begin(), kinks.end());
  for (const auto& [at, label] : kinks) {
    // Passing a kink deactivates a positive or activates a negative sample.
    slope += 1;
    if (slope >= 0) return at;
  }
  return kinks.empty() ? 0.0 : kinks.back().first;
}

}  // namespace

double hinge_objective(const num::Tensor<float>& x, std::span<const int> y, std::span<const double> w, double b,
                       double c) {
  const double n = static_cast<double>(x.rows());
  double reg = 0;
  for (double v : w) reg += v * v;
  double hinge = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    hinge += std::max(0.0, 1.0 - y[i] * (dot(w, x.row(i)) + b));
  }
  return reg / (2.0 * c) + hinge / n;
}

BinarySvm train_binary_svm(const num::Tensor<float>& x, std::span<const int> y, const SvmConfig& config,
                           std::uint64_t seed) {
  config.validate();
  if (x.rows() == 0 || x.rows() != y.size()) throw std::invalid_argument("svm: need one target per row");
  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();
  const double lambda = 1.0 / config.c;
  std::vector<double> w(dim, 0.0);
  double b = 0;
  BinarySvm best{w, b, hinge_objective(x, y, w, b, config.c)};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::Rng rng(seed);
  double t = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const double lr = config.learning_rate / (1.0 + config.learning_rate * lambda * t++);
      const auto row = x.row(i);
      const double margin = y[i] * (dot(w, row) + b);
      for (double& v : w) v -= lr * lambda * v;
      if (margin < 1.0) {
        for (std::size_t d = 0; d < dim; ++d) w[d] += lr * y[i] * static_cast<double>(row[d]);
        b += lr * y[i];
      }
    }
    // The unregularized bias moves slowly under a decaying step; solve for it.
    b = best_bias(x, y, w);
    const double obj = hinge_objective(x, y, w, b, config.c);
    if (obj < best.objective) best = {w, b, obj};
  }
  return best;
}

std::vector<double> SvmModel::scores(std::span<const float> x) const {
  std::vector<double> s(machines.size());
  for (std::size_t c = 0; c < machines.size(); ++c) s[c] = dot(machines[c].w, x) + machines[c].b;
  return s;
}

int SvmModel::predict(std::span<const float> x) const {
  const auto s = scores(x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < s.size(); ++c) {
    if (s[c] > s[best]) best = c;
  }
  return classes[best];
}

std::vector<int> SvmModel::predict(const num::Tensor<float>& rows) const {
  std::vector<int> out(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) out[r] = predict(rows.row(r));
  return out;
}

nlohmann::json SvmModel::to_json() const {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& b : machines) m.push_back({{"w", b.w}, {"b", b.b}, {"objective", b.objective}});
  return {{"kind", "svm"}, {"classes", classes}, {"machines", m}, {"config", config.to_json()}};
}

SvmModel SvmModel::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "svm") throw std::runtime_error("not an SVM model");
  SvmModel s;
  s.classes = j.at("classes").get<std::vector<int>>();
  for (const auto& m : j.at("machines")) {
    s.machines.push_back({m.at("w").get<std::vector<double>>(), m.at("b").get<double>(), m.at("objective").get<double>()});
  }
  s.config = SvmConfig::from_json(j.at("config"));
  if (s.classes.size() != s.machines.size()) throw std::runtime_error("SVM model: class/machine count mismatch");
  return s;
}

SvmModel train_svm(const num::Tensor<float>& x, std::span<const int> labels, const SvmConfig& config) {
  config.validate();
  if (x.rows() != labels.size()) throw std::invalid_argument("svm: need one label per row");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw std::invalid_argument("svm: need at least 2 classes, got " + std::to_string(distinct.size()));
  SvmModel model;
  model.config = config;
  model.classes.assign(distinct.begin(), distinct.end());
  std::vector<int> y(labels.size());
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == model.classes[c] ? 1 : -1;
    const std::uint64_t seed = num::mix_seed(config.seed ^ num::mix_seed(static_cast<std::uint64_t>(model.classes[c])));
    model.machines.push_back(train_binary_svm(x, y, config, seed));
  }
  return model;
}

void save_svm(const std::filesystem::path& path, const SvmModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << model.to_json().dump(1) << '\n';
}

SvmModel load_svm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return SvmModel::from_json(nlohmann::json::parse(in));
}

EvalReport evaluate(Setting setting, const SvmModel& model, const num::Tensor<float>& test_latents,
                    std::span<const int> test_labels, std::span<const std::string> class_names,
                    std::span<const int> unseen_classes) {
  if (test_latents.rows() != test_labels.size()) throw std::invalid_argument("evaluate: need one label per row");
  const auto predicted = model.predict(test_latents);
  return make_report("zest", setting, model.classes, class_names, test_labels, predicted, unseen_classes);
}

}  // namespace zest::clf
