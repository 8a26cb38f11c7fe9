#pragma once

#include "zest/classifier/report.hpp"
#include "zest/numerics/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace zest::clf {

struct SvmConfig {
  double c = 1.0;
  std::size_t epochs = 100;
  double learning_rate = 0.01;  // per update t: lr / (1 + lr t / C)
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SvmConfig from_json(const nlohmann::json& j);
};

/// Binary objective for targets y in {-1, +1}:
///   |w|^2 / (2 C) + (1/n) sum_i max(0, 1 - y_i (w.x_i + b))
/// The data term is a mean, so repeating every sample leaves it unchanged.
double hinge_objective(const num::Tensor<float>& x, std::span<const int> y, std::span<const double> w, double b,
                       double c);

struct BinarySvm {
  std::vector<double> w;
  double b = 0;
  double objective = 0;
};

/// Per-sample subgradient descent on the objective above; returns the
/// end-of-epoch iterate with the lowest objective. The bias is re-solved
/// exactly after every epoch.
BinarySvm train_binary_svm(const num::Tensor<float>& x, std::span<const int> y, const SvmConfig& config,
                           std::uint64_t seed);

/// One-vs-rest linear SVM over an explicit label set.
struct SvmModel {
  std::vector<int> classes;  // global class ids
  std::vector<BinarySvm> machines;
  SvmConfig config;

  std::vector<double> scores(std::span<const float> x) const;
  /// argmax of scores, lowest class position on ties.
  int predict(std::span<const float> x) const;
  std::vector<int> predict(const num::Tensor<float>& rows) const;

  nlohmann::json to_json() const;
  static SvmModel from_json(const nlohmann::json& j);
};

/// Trains one machine per distinct label. Throws for fewer than 2 classes.
SvmModel train_svm(const num::Tensor<float>& x, std::span<const int> labels, const SvmConfig& config);

void save_svm(const std::filesystem::path& path, const SvmModel& model);
SvmModel load_svm(const std::filesystem::path& path);

/// Scores real test latents. Every test label must be one of the model's
/// classes, otherwise std::invalid_argument.
EvalReport evaluate(Setting setting, const SvmModel& model, const num::Tensor<float>& test_latents,
                    std::span<const int> test_labels, std::span<const std::string> class_names,
                    std::span<const int> unseen_classes = {});

}  // namespace zest::clf
