#pragma once

#include "zest/attributes/attributes.hpp"
#include "zest/numerics/param.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace zest::cvae {

using num::Parameter;
using num::Tensor;

enum class ReconLoss { kL1, kL2 };

std::string to_string(ReconLoss loss);
ReconLoss recon_loss_from_string(const std::string& name);

struct CvaeConfig {
  std::size_t input_dim = 20;  // M
  std::size_t cond_dim = 3;    // N; 0 gives an unconditional VAE
  std::size_t z_dim = 8;
  std::size_t hidden = 32;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  ReconLoss recon = ReconLoss::kL1;

  void validate() const;
  nlohmann::json to_json() const;
  static CvaeConfig from_json(const nlohmann::json& j);
  bool operator==(const CvaeConfig&) const = default;
};

struct LossParts {
  double total = 0;
  double recon = 0;
  double kl = 0;
};

/// Encoder [l, a] -> hidden -> (mu, log sigma^2); decoder [z, a] -> hidden -> l_hat.
template <typename T>
class BasicCvae {
 public:
  explicit BasicCvae(CvaeConfig config);

  void initialize(num::Rng& rng);
  const CvaeConfig& config() const noexcept { return config_; }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::vector<const Parameter<T>*> decoder_parameters() const;

  /// Batch loss for inputs b (B x M), conditions a (B x cond) and
  /// reparameterization noise eps (B x z). Gradients of the total are
  /// accumulated into the parameters when `with_grad` is set.
  LossParts loss(const Tensor<T>& b, const Tensor<T>& a, const Tensor<T>& eps, bool with_grad);

  /// Posterior means (B x z).
  Tensor<T> encode_mean(const Tensor<T>& b, const Tensor<T>& a) const;
  /// Decoder output (B x M) for latent codes z (B x z).
  Tensor<T> decode(const Tensor<T>& z, const Tensor<T>& a) const;

  template <typename U>
  BasicCvae<U> cast() const {
    BasicCvae<U> out(config_);
    num::copy_values(out.parameters(), parameters());
    return out;
  }

 private:
  void encoder_forward(const Tensor<T>& b, const Tensor<T>& a, Tensor<T>& in, Tensor<T>& pre, Tensor<T>& mu,
                       Tensor<T>& logvar) const;

  CvaeConfig config_;
  Parameter<T> enc_w_, enc_b_, mu_w_, mu_b_, logvar_w_, logvar_b_;
  Parameter<T> dec_w_, dec_b_, out_w_, out_b_;
};

extern template class BasicCvae<float>;
extern template class BasicCvae<double>;
using Cvae = BasicCvae<float>;

/// Analytic KL(N(mu, sigma^2) || N(0, 1)) summed over dims, averaged over rows.
template <typename T>
double kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar) {
  double total = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu[i], lv = logvar[i];
    total += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
  }
  return total / static_cast<double>(mu.rows());
}

/// cvae_loss with noise drawn from `rng`.
LossParts cvae_loss(Cvae& model, const Tensor<float>& b, const Tensor<float>& a, num::Rng& rng, bool with_grad);

struct CvaeTrainResult {
  Cvae model;
  std::vector<LossParts> epoch_losses;  // mean over batches, one per epoch
  std::size_t batches = 0;              // training batches seen (epoch 0 excluded)
  double min_batch_kl = 0;              // smallest KL term over those batches
};

/// Trains on seen-device latents only. `attributes` must hold an entry for
/// every device that has a latent set.
CvaeTrainResult train_cvae(std::span<const attr::LatentSet> seen,
                           const std::map<std::string, attr::AttributeVector>& attributes, const CvaeConfig& config);

/// Same training loop on an explicit (rows x M) matrix with per-row conditions.
CvaeTrainResult train_cvae_rows(const Tensor<float>& rows, const Tensor<float>& conditions, const CvaeConfig& config);

struct PseudoDataset {
  Tensor<float> samples;    // (classes * k) x M
  std::vector<int> labels;  // class index per row, class-major
  std::vector<std::string> classes;
  std::size_t per_class = 0;
  std::uint64_t seed = 0;
};

/// Decodes k noise draws per class conditioned on that class's attribute.
/// Each class uses its own derived generator, so classes are independent.
PseudoDataset generate_pseudo(const Cvae& decoder, std::span<const attr::AttributeVector> class_attributes,
                              std::size_t per_class, std::uint64_t seed);

std::string save_cvae(const std::filesystem::path& stem, const Cvae& model);
Cvae load_cvae(const std::filesystem::path& stem);
/// Checksum of the decoder weights alone.
std::string decoder_checksum(const Cvae& model);

/// `label,l_0..l_{M-1}` plus `<path>.manifest.json` with k, seed, decoder checksum, class names.
void write_pseudo_csv(const std::filesystem::path& path, const PseudoDataset& pseudo,
                      const std::string& decoder_sha256);
PseudoDataset read_pseudo_csv(const std::filesystem::path& path);

}  // namespace zest::cvae
