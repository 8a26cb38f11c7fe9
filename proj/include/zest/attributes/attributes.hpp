#pragma once

#include "zest/ingest/dataset.hpp"
#include "zest/sane/model.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace zest::attr {

using num::Tensor;

/// The three feature extractors obtained from a trained model. All of them
/// share the model's weights; none can reach the classifier head except
/// through `logits()`, which exists only to check the reconstruction.
class Extractors {
 public:
  explicit Extractors(std::shared_ptr<const sane::SaneModel> model) : model_(std::move(model)) {}

  /// C_l: pooled encoding followed by NL_l (1 x M).
  Tensor<float> latent(const Tensor<float>& x) const;
  /// C_lambda: C_l followed by NL_lambda (1 x N).
  Tensor<float> attribute(const Tensor<float>& x) const;
  /// C: the model without its head, returning both latents.
  std::pair<Tensor<float>, Tensor<float>> features(const Tensor<float>& x) const;

  Tensor<float> nl_lambda(const Tensor<float>& latent) const { return model_->attribute_from_latent(latent); }
  Tensor<float> head(const Tensor<float>& attribute) const { return model_->logits_from_attribute(attribute); }

  std::size_t latent_dim() const { return model_->config().latent_dim; }
  std::size_t attr_dim() const { return model_->config().attr_dim; }
  const sane::SaneModel& model() const { return *model_; }

 private:
  std::shared_ptr<const sane::SaneModel> model_;
};

/// Drops the classifier head, NL_lambda and NL_l in turn. Throws for a
/// model that has never been trained.
Extractors strip(std::shared_ptr<const sane::SaneModel> model);

struct LatentSet {
  std::string device_id;
  Tensor<float> latents;     // m x M
  Tensor<float> attributes;  // m x N
  std::size_t count() const { return latents.rows(); }
};

struct AttributeVector {
  std::string device_id;
  std::vector<float> values;  // N
};

struct ExtractOptions {
  std::size_t threads = 1;
};

/// One (l, lambda) row per data point, in input order.
LatentSet extract_latents(const Extractors& extractors, std::span<const ingest::DataPoint> points,
                          const std::string& device_id, const ExtractOptions& options = {});

/// Per-device mean of the lambda rows (accumulated in double).
std::map<std::string, AttributeVector> compute_attributes(std::span<const LatentSet> sets);

/// `device_id,a_0,...,a_{N-1}`, devices in the given order.
void write_attributes_csv(const std::filesystem::path& path, std::span<const AttributeVector> attributes);
std::vector<AttributeVector> read_attributes_csv(const std::filesystem::path& path);

std::string save_latents(const std::filesystem::path& stem, std::span<const LatentSet> sets);
std::vector<LatentSet> load_latents(const std::filesystem::path& stem);

}  // namespace zest::attr
