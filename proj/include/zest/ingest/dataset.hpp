#pragma once

#include "zest/ingest/features.hpp"
#include "zest/ingest/packet.hpp"
#include "zest/numerics/tensor.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace zest::ingest {

/// One sample: an n x f feature sequence with an optional device class.
struct DataPoint {
  num::Tensor<float> features;
  std::optional<int> label;
  std::string device_id;
};

/// Consecutive non-overlapping windows of exactly n rows; a trailing
/// remainder shorter than n is dropped.
std::vector<DataPoint> segment(const num::Tensor<float>& rows, std::size_t n, std::optional<int> label,
                               const std::string& device_id);

/// Per-feature min-max scaling fitted on training data. Heavy-tailed
/// features go through log1p first. Outputs are clamped to [0, 1]; a
/// constant feature maps to 0.
class Normalizer {
 public:
  Normalizer() = default;
  /// `log1p_columns` selects the columns transformed with log1p.
  explicit Normalizer(std::vector<bool> log1p_columns);

  /// Standard layout: log1p on inter-arrival time and packet size.
  static Normalizer for_packet_features();

  void fit(std::span<const DataPoint> train);
  void fit_rows(const num::Tensor<float>& rows);

  float apply_value(std::size_t column, float value) const;
  void apply(num::Tensor<float>& rows) const;
  void apply(std::vector<DataPoint>& points) const;

  bool fitted() const noexcept { return !min_.empty(); }
  std::span<const double> min() const noexcept { return min_; }
  std::span<const double> max() const noexcept { return max_; }
  const std::vector<bool>& log1p_columns() const noexcept { return log1p_; }

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);

 private:
  double transform(std::size_t column, double value) const;
  void accumulate(std::span<const float> row);

  std::vector<bool> log1p_;
  std::vector<double> min_;
  std::vector<double> max_;
};

/// Seen (S) and unseen (U) class indices; a disjoint cover of all classes.
struct DevicePartition {
  std::set<int> seen;
  std::set<int> unseen;
  std::uint64_t seed = 0;
};

/// Randomly picks `num_unseen` of `num_devices` classes as unseen.
DevicePartition make_partition(std::size_t num_devices, std::size_t num_unseen, std::uint64_t seed);

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct DataSplit {
  std::vector<DataPoint> train, val, test;
};

/// Shuffles each class independently and cuts it by `ratios`
/// (train = floor(r_train * m), val = floor(r_val * m), test = rest).
DataSplit train_val_test_split(std::span<const DataPoint> points, SplitRatios ratios, std::uint64_t seed);

/// A labeled dataset for one trace: class k corresponds to devices[k].
struct Dataset {
  std::size_t seq_len = 0;
  std::size_t features = kFeatureCount;
  std::vector<std::string> devices;
  std::vector<DataPoint> points;
  std::optional<Normalizer> normalizer;  // set once the points are normalized
};

/// Groups by device (class index = rank of device id), featurizes and
/// segments. Points are raw (not normalized).
Dataset build_dataset(const std::vector<PacketRecord>& records, std::size_t seq_len);

/// Writes `<stem>.json` manifest (n, f, class mapping, labels, normalizer)
/// and `<stem>.bin` payload.
std::string save_dataset(const std::filesystem::path& stem, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& stem);

}  // namespace zest::ingest
