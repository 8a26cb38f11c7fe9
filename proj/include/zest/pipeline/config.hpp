#pragma once

#include "zest/baselines/pipelines.hpp"
#include "zest/classifier/svm.hpp"
#include "zest/cvae/cvae.hpp"
#include "zest/sane/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace zest::pipeline {

/// Everything a run depends on. Loaded from a `key = value` file; command
/// line flags and `--set key=value` override it.
struct ExperimentConfig {
  // Data source: a packet CSV, a profile file, or a named preset (in that
  // order of precedence).
  std::string csv;
  std::string profiles;
  std::string preset = "separable-12";
  std::uint64_t synth_seed = 7;

  sane::SaneConfig sane;     // num_classes is set from the partition
  cvae::CvaeConfig cvae;     // input/cond widths follow sane.latent_dim/attr_dim
  clf::SvmConfig svm;
  base::BaselineConfig baseline;
  std::size_t pseudo_per_class = 500;

  std::size_t num_unseen = 2;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::string> baselines{"vae-k", "seqcr", "seqcs", "deft"};

  std::filesystem::path output = "zest-out";
  std::size_t threads = 1;

  /// Sets one key; throws std::invalid_argument naming the key on failure.
  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;
  /// Renders every key as `key = value` lines, loadable by load_config.
  std::string to_text() const;
  nlohmann::json to_json() const;
  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace zest::pipeline
