#include "zest/sane/train.hpp"

#include "zest/numerics/adam.hpp"
#include "zest/numerics/archive.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

namespace zest::sane {

namespace {

void require_labels(std::span<const ingest::DataPoint> points, std::size_t num_classes, const char* what) {
  for (const auto& p : points) {
    if (!p.label || *p.label < 0 || static_cast<std::size_t>(*p.label) >= num_classes) {
      throw std::invalid_argument(std::string("sane: ") + what + " label outside 0.." +
                                  std::to_string(num_classes - 1));
    }
  }
}

double accuracy_of(const SaneModel& model, std::span<const ingest::DataPoint> points) {
  if (points.empty()) return 0.0;
  const auto predicted = predict_classes(model, points);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < points.size(); ++i) correct += predicted[i] == *points[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(points.size());
}

}  // namespace

TrainResult train_sane(std::span<const ingest::DataPoint> train, std::span<const ingest::DataPoint> val,
                       const SaneConfig& config, const TrainOptions& options) {
  config.validate();
  require_labels(train, config.num_classes, "training");
  require_labels(val, config.num_classes, "validation");
  std::vector<std::size_t> per_class(config.num_classes, 0);
  for (const auto& p : train) ++per_class[static_cast<std::size_t>(*p.label)];
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] == 0) throw std::invalid_argument("sane: class " + std::to_string(c) + " has no training data");
  }

  SaneModel model(config);
  num::Rng init_rng = num::Rng::derive(config.seed, 0x696e6974ULL);
  model.initialize(init_rng);
  model.freeze_positional = options.freeze_positional;
  if (options.freeze_positional) {
    for (auto* p : model.parameters()) {
      if (p->name == "pos") p->value.zero();
    }
  }
  const auto params = model.parameters();
  num::OptimizerState<float> opt;
  opt.options.learning_rate = config.learning_rate;

  TrainResult result{model, {}, 0, -1.0};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const num::Tensor<float>*> batch_x;
  std::vector<int> batch_y;
  std::vector<int> predicted;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    num::Rng rng = num::Rng::derive(config.seed, 0x65706f6368ULL + epoch);
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_x.push_back(&train[order[i]].features);
        batch_y.push_back(*train[order[i]].label);
      }
      num::zero_grads(params);
      const float loss = model.batch_loss(batch_x, batch_y, true, &predicted);
      num::adam_step(params, opt);
      loss_sum += static_cast<double>(loss) * static_cast<double>(batch_x.size());
      for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch_y[i] ? 1 : 0;
    }
    model.trained_epochs = epoch;
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train.size());
    entry.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    entry.val_acc = val.empty() ? entry.train_acc : accuracy_of(model, val);
    result.log.push_back(entry);
    if (entry.val_acc > result.best_val_acc) {
      result.best_val_acc = entry.val_acc;
      result.best_epoch = epoch;
      result.model = model;
    }
    if (options.on_epoch) options.on_epoch(entry);
  }
  if (config.epochs == 0) result.best_val_acc = 0;
  return result;
}

std::vector<int> predict_classes(const SaneModel& model, std::span<const ingest::DataPoint> points) {
  std::vector<int> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(argmax_row(model.forward(p.features).logits));
  return out;
}

SupervisedReport evaluate_supervised(const SaneModel& model, std::span<const ingest::DataPoint> test) {
  if (test.empty()) throw std::invalid_argument("evaluate_supervised: empty test set");
  const std::size_t classes = model.config().num_classes;
  require_labels(test, classes, "test");
  SupervisedReport report;
  report.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  const auto predicted = predict_classes(model, test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int truth = *test[i].label;
    ++report.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted[i])];
    correct += truth == predicted[i] ? 1 : 0;
  }
  report.total = test.size();
  report.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return report;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_acc\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss, e.train_acc, e.val_acc);
    out << buf;
  }
}

std::string save_sane(const std::filesystem::path& stem, const SaneModel& model) {
  num::TensorArchive archive;
  archive.config = {{"kind", "sane"}, {"sane", model.config().to_json()},
                    {"trained_epochs", model.trained_epochs}, {"freeze_positional", model.freeze_positional}};
  for (const auto* p : model.parameters()) archive.add(p->name, p->value);
  return num::save_archive(stem, archive);
}

SaneModel load_sane(const std::filesystem::path& stem) {
  const num::TensorArchive archive = num::load_archive(stem);
  if (archive.config.value("kind", "") != "sane") throw std::runtime_error(stem.string() + " is not a SANE checkpoint");
  SaneModel model(SaneConfig::from_json(archive.config.at("sane")));
  for (auto* p : model.parameters()) {
    const auto& t = archive.get(p->name);
    if (t.shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint tensor " + p->name + " has shape " + num::shape_string(t.shape()) +
                               ", expected " + num::shape_string(p->value.shape()));
    }
    p->value = t;
  }
  model.trained_epochs = archive.config.value("trained_epochs", std::size_t{0});
  model.freeze_positional = archive.config.value("freeze_positional", false);
  return model;
}

}  // namespace zest::sane
