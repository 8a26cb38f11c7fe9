#include "helpers.hpp"

#include "zest/cvae/cvae.hpp"
#include "zest/numerics/grad_check.hpp"

#include <doctest.h>

#include <fstream>

using namespace zest;
using num::Tensor;

namespace {

cvae::CvaeConfig tiny(std::size_t cond, cvae::ReconLoss recon) {
  cvae::CvaeConfig c;
  c.input_dim = 5;
  c.cond_dim = cond;
  c.z_dim = 3;
  c.hidden = 6;
  c.recon = recon;
  return c;
}

/// Rows drawn around one center per condition vector.
std::pair<Tensor<float>, Tensor<float>> clustered_rows(num::Rng& rng, std::size_t per, std::size_t classes) {
  Tensor<float> rows(per * classes, 5), cond(per * classes, 3);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = c * per + i;
      for (std::size_t j = 0; j < 5; ++j) rows(r, j) = static_cast<float>(static_cast<double>(c + j) * 0.3 + rng.normal(0, 0.05));
      for (std::size_t j = 0; j < 3; ++j) cond(r, j) = static_cast<float>(c == j);
    }
  }
  return {rows, cond};
}

}  // namespace

TEST_CASE("KL of identical Gaussians is zero and of a unit shift is one half") {
  CHECK(cvae::kl_divergence(Tensor<double>(1, 4, 0.0), Tensor<double>(1, 4, 0.0)) == 0.0);
  CHECK(cvae::kl_divergence(Tensor<double>(1, 1, 1.0), Tensor<double>(1, 1, 0.0)) == doctest::Approx(0.5));
}

TEST_CASE("CVAE loss matches finite differences") {
  num::Rng rng(31);
  double worst = 0;
  int instances = 0;
  for (const std::size_t cond : {3, 0}) {
    for (const auto recon : {cvae::ReconLoss::kL1, cvae::ReconLoss::kL2}) {
      for (int i = 0; i < 25; ++i, ++instances) {
        cvae::BasicCvae<double> model(tiny(cond, recon));
        model.initialize(rng);
        const std::size_t batch = 2 + rng.below(3);
        const auto b = test::random_tensor<double>(rng, batch, 5);
        const auto a = test::random_tensor<double>(rng, batch, cond);
        const auto eps = test::random_tensor<double>(rng, batch, 3);
        const auto r = num::grad_check([&](bool g) { return model.loss(b, a, eps, g).total; }, model.parameters());
        worst = std::max(worst, r.max_relative_error);
      }
    }
  }
  CHECK(instances == 100);
  CHECK(worst < 1e-4);
}

TEST_CASE("KL term is non-negative on every batch") {
  num::Rng rng(32);
  auto [rows, cond] = clustered_rows(rng, 40, 3);
  cvae::CvaeConfig cfg = tiny(3, cvae::ReconLoss::kL1);
  cfg.epochs = 30;
  cfg.batch_size = 16;
  const auto trained = cvae::train_cvae_rows(rows, cond, cfg);
  for (const auto& l : trained.epoch_losses) CHECK(l.kl >= 0.0);
  CHECK(trained.batches == 30 * 8);
  CHECK(trained.min_batch_kl >= 0.0);

  cvae::Cvae untrained(cfg);
  untrained.initialize(rng);
  for (cvae::Cvae* model : {&untrained, const_cast<cvae::Cvae*>(&trained.model)}) {
    for (std::size_t start = 0; start < rows.rows(); start += 16) {
      const std::size_t n = std::min<std::size_t>(16, rows.rows() - start);
      Tensor<float> b(n, 5), a(n, 3);
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(rows.row(start + i).begin(), rows.row(start + i).end(), b.row(i).begin());
        std::copy(cond.row(start + i).begin(), cond.row(start + i).end(), a.row(i).begin());
      }
      CHECK(cvae::cvae_loss(*model, b, a, rng, false).kl >= 0.0);
    }
  }
}

TEST_CASE("training lowers the loss and is deterministic") {
  num::Rng rng(33);
  auto [rows, cond] = clustered_rows(rng, 50, 3);
  cvae::CvaeConfig cfg = tiny(3, cvae::ReconLoss::kL1);
  cfg.epochs = 200;
  cfg.learning_rate = 3e-3;
  const auto a = cvae::train_cvae_rows(rows, cond, cfg);
  const auto b = cvae::train_cvae_rows(rows, cond, cfg);
  CHECK(a.epoch_losses.size() == 201);
  CHECK(a.epoch_losses.back().total < 0.5 * a.epoch_losses.front().total);
  CHECK(a.epoch_losses.back().total == b.epoch_losses.back().total);
}

TEST_CASE("decoder output follows the condition") {
  num::Rng rng(34);
  auto [rows, cond] = clustered_rows(rng, 80, 3);
  cvae::CvaeConfig cfg = tiny(3, cvae::ReconLoss::kL2);
  cfg.epochs = 150;
  cfg.learning_rate = 3e-3;
  const auto trained = cvae::train_cvae_rows(rows, cond, cfg);
  const std::vector<attr::AttributeVector> attrs{{"c0", {1, 0, 0}}, {"c1", {0, 1, 0}}, {"c2", {0, 0, 1}}};
  const auto pseudo = cvae::generate_pseudo(trained.model, attrs, 200, 5);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean0 = 0;
    for (std::size_t i = 0; i < 200; ++i) mean0 += pseudo.samples(c * 200 + i, 0) / 200.0;
    CHECK(mean0 == doctest::Approx(0.3 * static_cast<double>(c)).scale(1.0).epsilon(0.1));
  }
}

TEST_CASE("pseudo data is balanced and seeded") {
  cvae::CvaeConfig cfg;
  cvae::Cvae model(cfg);
  num::Rng rng(35);
  model.initialize(rng);
  std::vector<attr::AttributeVector> attrs;
  for (int c = 0; c < 12; ++c) attrs.push_back({"d" + std::to_string(c), {0.1f * c, 0.5f, -0.2f}});
  const auto p = cvae::generate_pseudo(model, attrs, 500, 9);
  CHECK(p.samples.rows() == 6000);
  CHECK(p.samples.cols() == 20);
  for (int c = 0; c < 12; ++c) CHECK(std::count(p.labels.begin(), p.labels.end(), c) == 500);
  const auto q = cvae::generate_pseudo(model, attrs, 500, 9);
  CHECK(p.samples == q.samples);
  const auto other = cvae::generate_pseudo(model, attrs, 500, 10);
  CHECK_FALSE(p.samples == other.samples);
  CHECK_THROWS(cvae::generate_pseudo(model, attrs, 0, 9));
}

TEST_CASE("checkpoint and pseudo csv round trips") {
  test::TempDir dir("cvae");
  num::Rng rng(36);
  auto [rows, cond] = clustered_rows(rng, 20, 3);
  cvae::CvaeConfig cfg = tiny(3, cvae::ReconLoss::kL1);
  cfg.epochs = 3;
  const auto model = cvae::train_cvae_rows(rows, cond, cfg).model;
  cvae::save_cvae(dir / "m", model);
  const auto back = cvae::load_cvae(dir / "m");
  CHECK(back.config() == model.config());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) CHECK(back.parameters()[i]->value == model.parameters()[i]->value);
  CHECK(cvae::decoder_checksum(back) == cvae::decoder_checksum(model));

  const std::vector<attr::AttributeVector> attrs{{"x", {1, 0, 0}}, {"y", {0, 1, 0}}};
  const auto pseudo = cvae::generate_pseudo(model, attrs, 7, 3);
  cvae::write_pseudo_csv(dir / "p.csv", pseudo, cvae::decoder_checksum(model));
  const auto read = cvae::read_pseudo_csv(dir / "p.csv");
  CHECK(read.samples == pseudo.samples);
  CHECK(read.labels == pseudo.labels);
  CHECK(read.classes == pseudo.classes);

  std::ofstream(dir / "p.csv", std::ios::app) << "0,1,2,3,4,5\n";
  CHECK_THROWS(cvae::read_pseudo_csv(dir / "p.csv"));
}

TEST_CASE("config validation") {
  cvae::CvaeConfig c;
  c.z_dim = 0;
  CHECK_THROWS(c.validate());
  CHECK(cvae::recon_loss_from_string("l2") == cvae::ReconLoss::kL2);
  CHECK_THROWS(cvae::recon_loss_from_string("huber"));
  const cvae::CvaeConfig d;
  CHECK(cvae::CvaeConfig::from_json(d.to_json()) == d);
}
