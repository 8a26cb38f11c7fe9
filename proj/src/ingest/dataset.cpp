#include "zest/ingest/dataset.hpp"

#include "zest/numerics/archive.hpp"
#include "zest/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace zest::ingest {

std::vector<DataPoint> segment(const num::Tensor<float>& rows, std::size_t n, std::optional<int> label,
                               const std::string& device_id) {
  if (n == 0) throw std::invalid_argument("segment: sequence length must be >= 1");
  const std::size_t cols = rows.cols();
  std::vector<DataPoint> out;
  for (std::size_t start = 0; start + n <= rows.rows(); start += n) {
    std::vector<float> window(rows.data() + start * cols, rows.data() + (start + n) * cols);
    out.push_back({num::Tensor<float>::from_data({n, cols}, std::move(window)), label, device_id});
  }
  return out;
}

// ---------------------------------------------------------------- Normalizer

Normalizer::Normalizer(std::vector<bool> log1p_columns) : log1p_(std::move(log1p_columns)) {}

Normalizer Normalizer::for_packet_features() {
  std::vector<bool> cols(kFeatureCount, false);
  cols[kInterArrival] = true;
  cols[kPacketSize] = true;
  return Normalizer(std::move(cols));
}

double Normalizer::transform(std::size_t column, double value) const {
  return log1p_[column] ? std::log1p(std::max(value, 0.0)) : value;
}

void Normalizer::accumulate(std::span<const float> row) {
  for (std::size_t c = 0; c < row.size(); ++c) {
    const double v = transform(c, row[c]);
    min_[c] = std::min(min_[c], v);
    max_[c] = std::max(max_[c], v);
  }
}

void Normalizer::fit_rows(const num::Tensor<float>& rows) {
  if (log1p_.empty()) log1p_.assign(rows.cols(), false);
  if (log1p_.size() != rows.cols()) throw num::ShapeError("normalizer: column count mismatch");
  if (min_.empty()) {
    min_.assign(rows.cols(), std::numeric_limits<double>::infinity());
    max_.assign(rows.cols(), -std::numeric_limits<double>::infinity());
  }
  for (std::size_t r = 0; r < rows.rows(); ++r) accumulate(rows.row(r));
}

void Normalizer::fit(std::span<const DataPoint> train) {
  if (train.empty()) throw std::invalid_argument("normalizer: cannot fit on an empty set");
  min_.clear();
  max_.clear();
  for (const auto& p : train) fit_rows(p.features);
}

float Normalizer::apply_value(std::size_t column, float value) const {
  const double lo = min_[column];
  const double hi = max_[column];
  if (!(hi > lo)) return 0.0f;
  const double scaled = (transform(column, value) - lo) / (hi - lo);
  return static_cast<float>(std::clamp(scaled, 0.0, 1.0));
}

void Normalizer::apply(num::Tensor<float>& rows) const {
  if (!fitted()) throw std::logic_error("normalizer: apply before fit");
  if (rows.cols() != min_.size()) throw num::ShapeError("normalizer: column count mismatch");
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto row = rows.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = apply_value(c, row[c]);
  }
}

void Normalizer::apply(std::vector<DataPoint>& points) const {
  for (auto& p : points) apply(p.features);
}

nlohmann::json Normalizer::to_json() const {
  return {{"min", min_}, {"max", max_}, {"log1p", log1p_}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer n(j.at("log1p").get<std::vector<bool>>());
  n.min_ = j.at("min").get<std::vector<double>>();
  n.max_ = j.at("max").get<std::vector<double>>();
  return n;
}

// ---------------------------------------------------------------- partition / split

DevicePartition make_partition(std::size_t num_devices, std::size_t num_unseen, std::uint64_t seed) {
  if (num_unseen < 1 || num_unseen >= num_devices) {
    throw std::invalid_argument("make_partition: need 1 <= num_unseen < |devices| (got " +
                                std::to_string(num_unseen) + " of " + std::to_string(num_devices) + ")");
  }
  std::vector<int> order(num_devices);
  std::iota(order.begin(), order.end(), 0);
  num::Rng rng = num::Rng::derive(seed, 0x7061727469ULL);
  rng.shuffle(std::span<int>(order));
  DevicePartition p;
  p.seed = seed;
  p.unseen.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(num_unseen));
  p.seen.insert(order.begin() + static_cast<std::ptrdiff_t>(num_unseen), order.end());
  return p;
}

DataSplit train_val_test_split(std::span<const DataPoint> points, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("train_val_test_split: ratios must be non-negative and sum to 1");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].label) throw std::invalid_argument("train_val_test_split: unlabeled data point");
    by_class[*points[i].label].push_back(i);
  }
  DataSplit split;
  for (auto& [label, idx] : by_class) {
    num::Rng rng = num::Rng::derive(seed, static_cast<std::uint64_t>(label) + 0x73706c6974ULL);
    rng.shuffle(std::span<std::size_t>(idx));
    const auto m = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * m + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * m + 1e-9));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& bucket = k < n_train ? split.train : (k < n_train + n_val ? split.val : split.test);
      bucket.push_back(points[idx[k]]);
    }
  }
  return split;
}

// ---------------------------------------------------------------- dataset

Dataset build_dataset(const std::vector<PacketRecord>& records, std::size_t seq_len) {
  Dataset ds;
  ds.seq_len = seq_len;
  const auto groups = group_by_device(records);
  int label = 0;
  for (const auto& [device, packets] : groups) {
    ds.devices.push_back(device);
    auto points = segment(featurize(packets), seq_len, label, device);
    std::move(points.begin(), points.end(), std::back_inserter(ds.points));
    ++label;
  }
  return ds;
}

std::string save_dataset(const std::filesystem::path& stem, const Dataset& dataset) {
  num::TensorArchive archive;
  std::vector<int> labels;
  std::vector<float> flat;
  flat.reserve(dataset.points.size() * dataset.seq_len * dataset.features);
  for (const auto& p : dataset.points) {
    labels.push_back(p.label.value_or(-1));
    flat.insert(flat.end(), p.features.values().begin(), p.features.values().end());
  }
  archive.config = {{"kind", "dataset"},
                    {"seq_len", dataset.seq_len},
                    {"features", dataset.features},
                    {"devices", dataset.devices},
                    {"labels", labels}};
  if (dataset.normalizer) archive.config["normalizer"] = dataset.normalizer->to_json();
  archive.add("features", num::Tensor<float>::from_data(
                              {dataset.points.size(), dataset.seq_len, dataset.features}, std::move(flat)));
  return num::save_archive(stem, archive);
}

Dataset load_dataset(const std::filesystem::path& stem) {
  const num::TensorArchive archive = num::load_archive(stem);
  if (archive.config.value("kind", "") != "dataset") {
    throw IngestError(stem.string() + " is not a dataset archive");
  }
  Dataset ds;
  ds.seq_len = archive.config.at("seq_len").get<std::size_t>();
  ds.features = archive.config.at("features").get<std::size_t>();
  ds.devices = archive.config.at("devices").get<std::vector<std::string>>();
  const auto labels = archive.config.at("labels").get<std::vector<int>>();
  if (archive.config.contains("normalizer")) ds.normalizer = Normalizer::from_json(archive.config.at("normalizer"));
  const auto& flat = archive.get("features");
  const std::size_t per = ds.seq_len * ds.features;
  if (flat.size() != labels.size() * per) throw IngestError("dataset payload does not match its manifest");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    DataPoint p;
    p.features = num::Tensor<float>::from_data(
        {ds.seq_len, ds.features}, std::vector<float>(flat.data() + i * per, flat.data() + (i + 1) * per));
    if (labels[i] >= 0) {
      p.label = labels[i];
      p.device_id = ds.devices.at(static_cast<std::size_t>(labels[i]));
    }
    ds.points.push_back(std::move(p));
  }
  return ds;
}

}  // namespace zest::ingest
