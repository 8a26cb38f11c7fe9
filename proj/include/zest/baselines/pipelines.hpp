#pragma once

#include "zest/baselines/cluster.hpp"
#include "zest/baselines/forest.hpp"
#include "zest/classifier/report.hpp"
#include "zest/cvae/cvae.hpp"

#include <string>
#include <vector>

namespace zest::base {

/// SANE features of every device in Gamma, already split. The fit pool is
/// the non-test data of all devices; it is clustered without labels. Its
/// labels only group rows by device (as attribute extraction does) to build
/// the VAE-K prototypes and to report fit-pool mapping accuracy.
struct BaselineData {
  std::vector<int> classes;  // global ids of all devices, attribute row order
  std::vector<std::string> class_names;
  std::vector<int> unseen;
  Tensor<float> attributes;  // |Gamma| x N

  Tensor<float> fit_l, fit_lambda;
  std::vector<int> fit_labels;
  Tensor<float> test_l, test_lambda;
  std::vector<int> test_labels;
};

struct BaselineConfig {
  std::size_t kmeans_max_iter = 100;
  std::size_t kmeans_restarts = 10;  // random-init runs only
  ForestConfig forest;
  cvae::CvaeConfig vae;  // input/cond/z widths are overwritten per run
  std::uint64_t seed = 1;
};

std::vector<std::string> baseline_names();  // vae-k, seqcr, seqcs, deft

struct BaselineOutcome {
  clf::EvalReport gzsl;
  clf::EvalReport zsl;
  ClusterResult clustering;
  ClusterMapping mapping;
};

/// GZSL scores every test point of Gamma; ZSL scores unseen test points and
/// only lets them reach clusters mapped to unseen devices.
BaselineOutcome run_baseline(const std::string& name, const BaselineData& data, const BaselineConfig& config);

/// Unconditional VAE on L compressing to N dims; returns posterior means
/// for the fit pool and test rows. `epochs == 0` leaves it untrained.
std::pair<Tensor<float>, Tensor<float>> vae_compress(const BaselineData& data, const BaselineConfig& config);

}  // namespace zest::base
