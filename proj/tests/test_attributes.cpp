#include "helpers.hpp"

#include "zest/attributes/attributes.hpp"
#include "zest/sane/train.hpp"
#include "zest/synth/profile.hpp"

#include <doctest.h>

#include <cmath>

using namespace zest;
using num::Tensor;

namespace {

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

std::shared_ptr<const sane::SaneModel> random_model(std::uint64_t seed) {
  auto m = std::make_shared<sane::SaneModel>(small_config(3));
  num::Rng rng(seed);
  m->initialize(rng);
  m->trained_epochs = 1;
  return m;
}

std::vector<ingest::DataPoint> random_points(num::Rng& rng, std::size_t n, int label) {
  std::vector<ingest::DataPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> x(20, 8);
    for (float& v : x.values()) v = static_cast<float>(rng.uniform());
    pts.push_back({x, label, "dev"});
  }
  return pts;
}

}  // namespace

TEST_CASE("strip requires a trained model and is idempotent") {
  auto untrained = std::make_shared<sane::SaneModel>(small_config(3));
  CHECK_THROWS(attr::strip(untrained));
  CHECK_THROWS(attr::strip(nullptr));
  const auto model = random_model(1);
  const auto a = attr::strip(model), b = attr::strip(model);
  num::Rng rng(2);
  const auto x = random_points(rng, 1, 0)[0].features;
  CHECK(a.latent(x) == b.latent(x));
  CHECK(a.attribute(x) == b.attribute(x));
}

TEST_CASE("extractors compose into the classifier") {
  const auto model = random_model(3);
  const auto ex = attr::strip(model);
  num::Rng rng(4);
  for (const auto& p : random_points(rng, 5, 0)) {
    const auto [l, lambda] = ex.features(p.features);
    CHECK(l.cols() == 20);
    CHECK(lambda.cols() == 3);
    CHECK(ex.nl_lambda(l) == lambda);
    CHECK(ex.head(lambda) == model->forward(p.features).logits);
  }
}

TEST_CASE("latent extraction: single point, duplicates, threading") {
  const auto ex = attr::strip(random_model(5));
  num::Rng rng(6);
  auto pts = random_points(rng, 9, 1);
  const auto one = attr::extract_latents(ex, std::span(pts).first(1), "dev");
  CHECK(one.count() == 1);
  CHECK(one.attributes.rows() == 1);

  pts.push_back(pts[2]);
  const auto serial = attr::extract_latents(ex, pts, "dev");
  CHECK(serial.count() == 10);
  for (std::size_t j = 0; j < 20; ++j) CHECK(serial.latents(9, j) == serial.latents(2, j));

  attr::ExtractOptions opts;
  opts.threads = 3;
  const auto parallel = attr::extract_latents(ex, pts, "dev", opts);
  for (std::size_t i = 0; i < serial.latents.size(); ++i) CHECK(std::abs(serial.latents[i] - parallel.latents[i]) <= 1e-6);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto l = ex.latent(pts[i].features);
    for (std::size_t j = 0; j < l.cols(); ++j) CHECK(std::abs(l(0, j) - serial.latents(i, j)) <= 1e-6);
  }
  CHECK_THROWS_WITH(attr::extract_latents(ex, {}, "cam-7"), doctest::Contains("cam-7"));
}

TEST_CASE("attribute vector is the per-device mean") {
  attr::LatentSet s{"a", Tensor<float>(2, 4), Tensor<float>(2, 3)};
  s.attributes(0, 0) = 1;
  s.attributes(1, 1) = 1;
  attr::LatentSet constant{"b", Tensor<float>(3, 4), Tensor<float>(3, 3, 0.25f)};
  const std::vector<attr::LatentSet> sets{s, constant};
  const auto attrs = attr::compute_attributes(sets);
  CHECK(attrs.at("a").values == std::vector<float>{0.5f, 0.5f, 0.0f});
  CHECK(attrs.at("b").values == std::vector<float>{0.25f, 0.25f, 0.25f});

  const std::vector<attr::LatentSet> dup{s, s};
  CHECK_THROWS(attr::compute_attributes(dup));
  const std::vector<attr::LatentSet> empty{{"e", Tensor<float>(0, 4), Tensor<float>(0, 3)}};
  CHECK_THROWS_WITH(attr::compute_attributes(empty), doctest::Contains("e"));
}

TEST_CASE("attribute csv and latent archive round trips") {
  test::TempDir dir("attrs");
  const std::vector<attr::AttributeVector> attrs{{"x", {0.1f, -2.5f, 1e-7f}}, {"y", {3.0f, 0.0f, 1.0f / 3.0f}}};
  attr::write_attributes_csv(dir / "a.csv", attrs);
  const auto back = attr::read_attributes_csv(dir / "a.csv");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].device_id == attrs[i].device_id);
    CHECK(back[i].values == attrs[i].values);
  }
  num::Rng rng(8);
  const std::vector<attr::LatentSet> sets{{"p", test::random_tensor<float>(rng, 4, 20), test::random_tensor<float>(rng, 4, 3)},
                                          {"q", test::random_tensor<float>(rng, 2, 20), test::random_tensor<float>(rng, 2, 3)}};
  attr::save_latents(dir / "l", sets);
  const auto loaded = attr::load_latents(dir / "l");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].device_id == "q");
  CHECK(loaded[1].latents == sets[1].latents);
  CHECK(loaded[0].attributes == sets[0].attributes);
}

TEST_CASE("attributes of distinct devices are farther apart than their spread") {
  const auto all = synth::preset("separable-12");
  std::vector<synth::DeviceProfile> chosen{all[0], all[5], all[10]};
  for (auto& p : chosen) p.sessions = 6;
  const auto ds = ingest::build_dataset(synth::generate(chosen, 21), 20);
  auto split = ingest::train_val_test_split(ds.points, {}, 21);
  auto norm = ingest::Normalizer::for_packet_features();
  norm.fit(split.train);
  norm.apply(split.train);
  norm.apply(split.val);
  norm.apply(split.test);
  auto cfg = small_config(3);
  cfg.epochs = 10;
  const auto model = std::make_shared<const sane::SaneModel>(sane::train_sane(split.train, split.val, cfg).model);
  const auto ex = attr::strip(model);

  std::vector<attr::LatentSet> sets;
  for (int c = 0; c < 3; ++c) {
    std::vector<ingest::DataPoint> pts;
    for (const auto& p : split.test) {
      if (*p.label == c) pts.push_back(p);
    }
    sets.push_back(attr::extract_latents(ex, pts, ds.devices[static_cast<std::size_t>(c)]));
  }
  const auto attrs = attr::compute_attributes(sets);
  // Largest within-device standard deviation of lambda (Euclidean spread).
  double spread = 0;
  for (const auto& s : sets) {
    const auto& mean = attrs.at(s.device_id).values;
    double ss = 0;
    for (std::size_t i = 0; i < s.count(); ++i) {
      for (std::size_t j = 0; j < 3; ++j) ss += std::pow(s.attributes(i, j) - mean[j], 2);
    }
    spread = std::max(spread, std::sqrt(ss / static_cast<double>(s.count())));
  }
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      double d = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        d += std::pow(attrs.at(sets[a].device_id).values[j] - attrs.at(sets[b].device_id).values[j], 2);
      }
      CHECK(std::sqrt(d) > spread);
    }
  }
}
