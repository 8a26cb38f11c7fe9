#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>

namespace zest::sane {

/// Hyperparameters of the self-attention feature extractor and its trainer.
struct SaneConfig {
  std::size_t seq_len = 200;     // n, packets per sequence
  std::size_t features = 8;      // f, raw features per packet
  std::size_t d_model = 64;
  std::size_t encoders = 2;      // e
  std::size_t heads = 8;         // h
  std::size_t d_mlp = 256;
  std::size_t latent_dim = 20;   // M, width of l
  std::size_t attr_dim = 3;      // N, width of lambda and of attribute vectors
  std::size_t num_classes = 2;   // |S|
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double learning_rate = 5e-4;
  std::uint64_t seed = 1;
  // false: the residual layout of the reference algorithm (pre-norm).
  // true: textbook post-norm encoder, for comparison.
  bool standard_residual = false;

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  nlohmann::json to_json() const;
  static SaneConfig from_json(const nlohmann::json& j);

  friend bool operator==(const SaneConfig&, const SaneConfig&) = default;
};

}  // namespace zest::sane
