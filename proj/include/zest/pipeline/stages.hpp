#pragma once

#include "zest/attributes/attributes.hpp"
#include "zest/classifier/report.hpp"
#include "zest/ingest/dataset.hpp"
#include "zest/pipeline/config.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace zest::pipeline {

/// A stage failed or its upstream artifacts are missing or stale.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class LockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exclusive `.zest.lock` in an output directory, released on destruction.
/// With a positive `wait_seconds`, polls until the lock frees up.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir, double wait_seconds = 0);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
};

using Log = std::function<void(const std::string&)>;

/// Directory layout of one experiment:
///   <root>/data/          synth + ingest outputs
///   <root>/seed-<s>/      per-partition stage outputs
///   <root>/report.*       aggregated reports
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root, Log log = {});
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path data_dir() const { return root_ / "data"; }
  std::filesystem::path run_dir(std::uint64_t seed) const { return root_ / ("seed-" + std::to_string(seed)); }
  void log(const std::string& line) const {
    if (log_) log_(line);
  }

 private:
  std::filesystem::path root_;
  Log log_;
};

/// Per-stage manifest `<dir>/<stage>.manifest.json`: the config subset the
/// stage depends on, checksums of its inputs, checksums of its outputs,
/// and the wall time of the run that produced them (not part of the key).
struct Manifest {
  std::string stage;
  nlohmann::json key;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  double seconds = 0;
};

std::filesystem::path manifest_file(const std::filesystem::path& dir, const std::string& stage);

/// Loads an upstream manifest and re-checks its output checksums. Throws
/// StageError(`stage`) telling the user to re-run it when anything is off.
Manifest require_stage(const std::filesystem::path& dir, const std::string& stage);

// ---------------------------------------------------------------- splits

/// Partition plus 60/20/20 split of every device, normalized with
/// statistics fitted on the seen devices' training split. Deterministic in
/// (dataset, num_unseen, seed).
struct PreparedSplit {
  ingest::DevicePartition partition;
  std::vector<int> seen, unseen;  // sorted global class ids
  std::vector<std::string> devices;
  ingest::Normalizer normalizer;
  std::vector<ingest::DataPoint> train, val, test;  // global labels
};

PreparedSplit prepare_split(const ingest::Dataset& raw, std::size_t num_unseen, std::uint64_t seed);

/// Latents of every device for each split, indexed [split][class id].
struct RunLatents {
  static constexpr std::array<const char*, 3> kSplits{"train", "val", "test"};
  std::vector<std::string> devices;
  std::array<std::vector<attr::LatentSet>, 3> sets;
};

std::string save_run_latents(const std::filesystem::path& stem, const RunLatents& latents);
RunLatents load_run_latents(const std::filesystem::path& stem);

/// Seen devices: training split. Unseen devices: training + validation
/// split (their unlabeled non-test traffic).
std::vector<attr::AttributeVector> attributes_for(const RunLatents& latents, const std::vector<int>& seen);

/// Child seed for a partition.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t partition_seed);

// ---------------------------------------------------------------- stages
// Each returns true when the stage was satisfied from cache.

bool stage_synth(const ExperimentConfig& cfg, const Workspace& ws);
bool stage_ingest(const ExperimentConfig& cfg, const Workspace& ws);
bool stage_train_sane(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed);
bool stage_extract_attrs(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed);
bool stage_train_cvae(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed);
bool stage_gen_pseudo(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed);
bool stage_train_clf(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed);
std::vector<clf::EvalReport> stage_eval(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed);
std::vector<clf::EvalReport> stage_baseline(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed,
                                            const std::string& name);

/// Stage names in execution order.
std::vector<std::string> stage_names();

struct PipelineResult {
  std::vector<clf::EvalReport> reports;
  std::vector<clf::SummaryRow> summary;
};

/// All stages for every partition seed plus the configured baselines; writes
/// report.csv, report.txt, runs.csv and reports.jsonl under the output dir.
PipelineResult run_pipeline(const ExperimentConfig& cfg, Log log = {});

/// Maps sweep shorthands (encoders, heads, attr-dim, unseen) to config keys;
/// any other name must be a config key itself.
std::string sweep_key(const std::string& param);

struct SweepResult {
  std::string param;
  std::vector<std::string> values;
  std::vector<PipelineResult> runs;
};

/// One pipeline per value under <output>/sweep-<param>/<value>; writes
/// <output>/sweep-<param>/sweep.csv and sweep.txt.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<std::string>& values,
                      Log log = {});

}  // namespace zest::pipeline
