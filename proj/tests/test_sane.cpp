#include "helpers.hpp"

#include "zest/numerics/grad_check.hpp"
#include "zest/sane/train.hpp"
#include "zest/synth/profile.hpp"

#include <doctest.h>

#include <algorithm>

using namespace zest;
using num::Tensor;

namespace {

sane::SaneConfig tiny_config() {
  sane::SaneConfig c;
  c.seq_len = 4;
  c.d_model = 8;
  c.encoders = 1;
  c.heads = 2;
  c.d_mlp = 12;
  c.latent_dim = 5;
  c.attr_dim = 3;
  c.num_classes = 3;
  return c;
}

sane::SaneConfig small_config(std::size_t classes) {
  sane::SaneConfig c;
  c.seq_len = 20;
  c.d_model = 16;
  c.heads = 2;
  c.d_mlp = 32;
  c.num_classes = classes;
  c.batch_size = 16;
  c.learning_rate = 2e-3;
  return c;
}

/// A few devices of a preset, shrunk to a quick training set and normalized.
ingest::DataSplit small_split(const std::string& preset, std::vector<std::size_t> pick, std::size_t sessions,
                              std::size_t seq_len, std::uint64_t seed) {
  const auto all = synth::preset(preset);
  std::vector<synth::DeviceProfile> chosen;
  for (auto i : pick) {
    chosen.push_back(all[i]);
    chosen.back().sessions = sessions;
  }
  const auto ds = ingest::build_dataset(synth::generate(chosen, seed), seq_len);
  auto split = ingest::train_val_test_split(ds.points, {}, seed);
  auto norm = ingest::Normalizer::for_packet_features();
  norm.fit(split.train);
  norm.apply(split.train);
  norm.apply(split.val);
  norm.apply(split.test);
  return split;
}

}  // namespace

TEST_CASE("full SANE loss matches finite differences") {
  for (const bool post_norm : {false, true}) {
    CAPTURE(post_norm);
    auto cfg = tiny_config();
    cfg.standard_residual = post_norm;
    sane::BasicSaneModel<double> model(cfg);
    num::Rng rng(11);
    model.initialize(rng);
    // Larger-than-default SLA/positional values make their gradients visible.
    for (auto* p : model.parameters()) {
      if (p->name == "sla" || p->name == "pos") test::randomize(*p, rng, 0.5);
    }
    const auto x0 = test::random_tensor<double>(rng, 4, 8);
    const auto x1 = test::random_tensor<double>(rng, 4, 8);
    const std::vector<const Tensor<double>*> xs{&x0, &x1};
    const std::vector<int> labels{2, 0};
    const auto r = num::grad_check([&](bool g) { return model.batch_loss(xs, labels, g); }, model.parameters());
    CHECK(r.checked > 500);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter, "[", r.worst_index, "]");
  }
}

TEST_CASE("SANE gradients hold across random instances") {
  num::Rng rng(12);
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    auto cfg = tiny_config();
    cfg.seq_len = 2 + rng.below(3);
    sane::BasicSaneModel<double> model(cfg);
    model.initialize(rng);
    std::vector<Tensor<double>> data;
    std::vector<int> labels;
    for (int s = 0; s < 3; ++s) {
      data.push_back(test::random_tensor<double>(rng, cfg.seq_len, 8));
      labels.push_back(static_cast<int>(rng.below(3)));
    }
    std::vector<const Tensor<double>*> xs;
    for (const auto& d : data) xs.push_back(&d);
    worst = std::max(worst,
                     num::grad_check([&](bool g) { return model.batch_loss(xs, labels, g); }, model.parameters())
                         .max_relative_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("with positional embedding zeroed, packet order does not matter") {
  auto cfg = small_config(3);
  sane::SaneModel model(cfg);
  num::Rng rng(13);
  model.initialize(rng);
  for (auto* p : model.parameters()) {
    if (p->name == "pos") p->value.zero();
  }
  const auto x = test::random_tensor<float>(rng, cfg.seq_len, 8);
  std::vector<std::size_t> order(cfg.seq_len);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(std::span(order));
    Tensor<float> y(cfg.seq_len, 8);
    for (std::size_t r = 0; r < order.size(); ++r) std::copy(x.row(order[r]).begin(), x.row(order[r]).end(), y.row(r).begin());
    const auto a = model.encode(x), b = model.encode(y);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);
  }
  // And with a learned positional embedding it does.
  for (auto* p : model.parameters()) {
    if (p->name == "pos") test::randomize(*p, rng, 1.0);
  }
  Tensor<float> rev(cfg.seq_len, 8);
  for (std::size_t r = 0; r < cfg.seq_len; ++r) std::copy(x.row(r).begin(), x.row(r).end(), rev.row(cfg.seq_len - 1 - r).begin());
  const auto a = model.encode(x), b = model.encode(rev);
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, static_cast<double>(std::abs(a[i] - b[i])));
  CHECK(diff > 1e-4);
}

TEST_CASE("frozen positional embedding stays zero through training") {
  const auto split = small_split("separable-12", {0, 5}, 2, 20, 3);
  auto cfg = small_config(2);
  cfg.epochs = 2;
  sane::TrainOptions opts;
  opts.freeze_positional = true;
  const auto result = sane::train_sane(split.train, split.val, cfg, opts);
  for (const auto* p : result.model.parameters()) {
    if (p->name == "pos") {
      for (float v : p->value.values()) CHECK(v == 0.0f);
    }
  }
}

TEST_CASE("training on three well-separated devices reaches high accuracy") {
  auto split = small_split("separable-12", {0, 5, 10}, 6, 20, 21);
  auto cfg = small_config(3);
  cfg.epochs = 20;
  const auto result = sane::train_sane(split.train, split.val, cfg);
  CHECK(result.log.size() == 20);
  CHECK(result.best_val_acc >= 0.95);
  const auto report = sane::evaluate_supervised(result.model, split.test);
  CHECK(report.accuracy >= 0.95);
  std::size_t rows = 0;
  for (const auto& r : report.confusion) {
    for (auto v : r) rows += v;
  }
  CHECK(rows == split.test.size());
}

TEST_CASE("same config and seed give an identical training run") {
  const auto split = small_split("separable-12", {1, 6}, 2, 20, 5);
  auto cfg = small_config(2);
  cfg.epochs = 3;
  const auto a = sane::train_sane(split.train, split.val, cfg);
  const auto b = sane::train_sane(split.train, split.val, cfg);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].train_loss == b.log[i].train_loss);
  for (std::size_t i = 0; i < a.model.parameters().size(); ++i) {
    CHECK(a.model.parameters()[i]->value == b.model.parameters()[i]->value);
  }
}

TEST_CASE("a second encoder does not hurt on average") {
  // Four overlapping devices, three seeds, one- versus two-block encoders.
  double mean1 = 0, mean2 = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto split = small_split("hard-12", {0, 1, 4, 5}, 8, 20, 40 + seed);
    for (const std::size_t e : {1, 2}) {
      auto cfg = small_config(4);
      cfg.encoders = e;
      cfg.epochs = 15;
      cfg.seed = seed;
      const auto result = sane::train_sane(split.train, split.val, cfg);
      (e == 1 ? mean1 : mean2) += sane::evaluate_supervised(result.model, split.test).accuracy / 3.0;
    }
  }
  MESSAGE("e=1: ", mean1, "  e=2: ", mean2);
  CHECK(mean2 >= mean1);
}

TEST_CASE("training rejects a class with no samples") {
  const auto split = small_split("separable-12", {0, 5}, 2, 20, 3);
  auto cfg = small_config(3);
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(sane::train_sane(split.train, split.val, cfg), doctest::Contains("class 2"),
                       std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact and preserves logits") {
  test::TempDir dir("sane");
  const auto split = small_split("separable-12", {2, 7}, 2, 20, 8);
  auto cfg = small_config(2);
  cfg.epochs = 1;
  const auto trained = sane::train_sane(split.train, split.val, cfg).model;
  const auto sha1 = sane::save_sane(dir / "m", trained);
  const auto loaded = sane::load_sane(dir / "m");
  CHECK(loaded.config() == trained.config());
  CHECK(loaded.trained_epochs == trained.trained_epochs);
  for (std::size_t i = 0; i < trained.parameters().size(); ++i) {
    CHECK(loaded.parameters()[i]->value == trained.parameters()[i]->value);
  }
  for (const auto& p : split.test) CHECK(loaded.forward(p.features).logits == trained.forward(p.features).logits);
  CHECK(sane::save_sane(dir / "m2", loaded) == sha1);
}

TEST_CASE("supervised evaluation counts") {
  const auto split = small_split("separable-12", {0, 5, 10}, 1, 20, 2);
  auto cfg = small_config(3);
  sane::SaneModel model(cfg);
  num::Rng rng(1);
  model.initialize(rng);
  const auto preds = sane::predict_classes(model, split.test);
  const auto report = sane::evaluate_supervised(model, split.test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == *split.test[i].label;
  CHECK(report.accuracy == doctest::Approx(static_cast<double>(hits) / static_cast<double>(preds.size())));
  CHECK_THROWS(sane::evaluate_supervised(model, {}));
}
