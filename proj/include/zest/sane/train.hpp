#pragma once

#include "zest/ingest/dataset.hpp"
#include "zest/sane/model.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace zest::sane {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
};

struct TrainOptions {
  bool freeze_positional = false;
  // Called after every epoch; may be empty.
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  SaneModel model;              // best-validation-accuracy checkpoint
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_acc = 0;
};

/// Supervised training on seen devices with Adam and per-epoch seeded
/// shuffling. Labels must cover exactly 0..num_classes-1. Returns the
/// epoch with the best validation accuracy (earliest on ties); with an
/// empty validation set, training accuracy is used instead.
TrainResult train_sane(std::span<const ingest::DataPoint> train, std::span<const ingest::DataPoint> val,
                       const SaneConfig& config, const TrainOptions& options = {});

struct SupervisedReport {
  double accuracy = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t total = 0;
};

/// Accuracy and confusion matrix over labeled points.
SupervisedReport evaluate_supervised(const SaneModel& model, std::span<const ingest::DataPoint> test);

std::vector<int> predict_classes(const SaneModel& model, std::span<const ingest::DataPoint> points);

/// `epoch,train_loss,train_acc,val_acc`
void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

std::string save_sane(const std::filesystem::path& stem, const SaneModel& model);
SaneModel load_sane(const std::filesystem::path& stem);

}  // namespace zest::sane
