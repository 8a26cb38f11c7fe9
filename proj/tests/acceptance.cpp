// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [criteria...]
//
// Long experiments live under the work directory and reuse the pipeline's
// stage cache, so a criterion that shares runs with an earlier one is cheap.
// Runtimes are summed from the stage manifests, which record the wall time
// of the run that produced each artifact.

#include "zest/baselines/cluster.hpp"
#include "zest/classifier/svm.hpp"
#include "zest/cvae/cvae.hpp"
#include "zest/numerics/archive.hpp"
#include "zest/numerics/attention.hpp"
#include "zest/numerics/grad_check.hpp"
#include "zest/numerics/ops.hpp"
#include "zest/pipeline/stages.hpp"
#include "zest/sane/train.hpp"
#include "zest/synth/profile.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

using namespace zest;
namespace fs = std::filesystem;
namespace pl = zest::pipeline;
using num::Parameter;
using num::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <typename T>
Tensor<T> random_tensor(num::Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor<T> t(rows, cols);
  for (T& v : t.values()) v = static_cast<T>(rng.normal(0.0, scale));
  return t;
}

template <typename T>
void randomize(Parameter<T>& p, num::Rng& rng, double scale = 1.0) {
  for (T& v : p.value.values()) v = static_cast<T>(rng.normal(0.0, scale));
}

double project(const Tensor<double>& out, const Tensor<double>& r) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

std::size_t dim(num::Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

fs::path g_work;

void log_line(const std::string& l) { std::cerr << "  " << l << '\n'; }

// ---------------------------------------------------------------- experiments

pl::ExperimentConfig preset_config(const std::string& preset, std::size_t seeds, const fs::path& out) {
  pl::ExperimentConfig cfg;
  cfg.preset = preset;
  cfg.seeds.clear();
  for (std::uint64_t s = 1; s <= seeds; ++s) cfg.seeds.push_back(s);
  cfg.output = out;
  return cfg;
}

pl::PipelineResult pipeline(const pl::ExperimentConfig& cfg) {
  fs::create_directories(cfg.output);
  const pl::DirLock lock(cfg.output, 1e9);
  return pl::run_pipeline(cfg, log_line);
}

/// separable-12, 10 seen / 2 unseen, five partition seeds.
pl::ExperimentConfig separable_config() { return preset_config("separable-12", 5, g_work / "separable-12"); }

/// hard-12 at N = 3, three seeds. The attribute sweep's N = 3 point is the
/// same experiment, so it is run in that directory.
pl::ExperimentConfig hard_config() { return preset_config("hard-12", 3, g_work / "hard-12" / "sweep-attr-dim" / "3"); }

double recorded_seconds(const fs::path& root) {
  double total = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (!e.is_regular_file() || !name.ends_with(".manifest.json")) continue;
    std::ifstream in(e.path());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_object()) total += j.value("seconds", 0.0);
  }
  return total;
}

double mean_of(const std::vector<clf::SummaryRow>& rows, const std::string& method, clf::Setting setting) {
  for (const auto& r : rows) {
    if (r.method == method && r.setting == setting) return r.mean;
  }
  throw std::runtime_error("no summary row for " + method);
}

/// Normalized 60/20/20 split of every device in a preset.
ingest::DataSplit preset_split(const std::string& preset, std::uint64_t seed, std::vector<std::string>* devices) {
  const auto ds = ingest::build_dataset(synth::generate(synth::preset(preset), 7), 200);
  if (devices) *devices = ds.devices;
  auto split = ingest::train_val_test_split(ds.points, {}, seed);
  auto norm = ingest::Normalizer::for_packet_features();
  norm.fit(split.train);
  norm.apply(split.train);
  norm.apply(split.val);
  norm.apply(split.test);
  return split;
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const Stopwatch clock;
  std::map<std::string, double> worst;
  std::map<std::string, int> count;
  auto record = [&](const std::string& what, const num::GradCheckResult& r) {
    worst[what] = std::max(worst[what], r.max_relative_error);
    ++count[what];
  };
  num::Rng rng(1001);
  for (int i = 0; i < 100; ++i) {
    const std::size_t r = dim(rng, 1, 4), in = dim(rng, 1, 5), out = dim(rng, 1, 5);
    Parameter<double> x("x", r, in), w("w", in, out), b("b", 1, out);
    randomize(x, rng), randomize(w, rng), randomize(b, rng);
    const auto proj = random_tensor<double>(rng, r, out);
    record("linear", num::grad_check(
                         [&](bool g) {
                           const auto y = num::linear(x.value, w.value, b.value);
                           if (g) num::add_inplace(x.grad, num::linear_backward(x.value, w.value, proj, w.grad, b.grad));
                           return project(y, proj);
                         },
                         {&x, &w, &b}));
    record("matmul", num::grad_check(
                         [&](bool g) {
                           const auto y = num::matmul(x.value, w.value);
                           if (g) num::matmul_backward(x.value, w.value, proj, &x.grad, &w.grad);
                           return project(y, proj);
                         },
                         {&x, &w}));
  }
  for (int i = 0; i < 100; ++i) {
    const std::size_t r = dim(rng, 1, 4), c = dim(rng, 2, 6);
    Parameter<double> x("x", r, c), z("z", dim(rng, 1, 3), c), gain("gain", 1, c), bias("bias", 1, c);
    randomize(x, rng, 2.0), randomize(z, rng), randomize(gain, rng), randomize(bias, rng);
    const auto proj = random_tensor<double>(rng, r, c);
    const auto proj_pool = random_tensor<double>(rng, 1, c);
    const auto proj_cat = random_tensor<double>(rng, r + z.value.rows(), c);
    const auto target = random_tensor<double>(rng, r, c);
    std::vector<int> labels(r);
    for (auto& l : labels) l = static_cast<int>(rng.below(c));
    record("softmax", num::grad_check(
                          [&](bool g) {
                            const auto y = num::softmax_rows(x.value);
                            if (g) num::add_inplace(x.grad, num::softmax_rows_backward(y, proj));
                            return project(y, proj);
                          },
                          {&x}));
    record("gelu", num::grad_check(
                       [&](bool g) {
                         const auto y = num::gelu(x.value);
                         if (g) num::add_inplace(x.grad, num::gelu_backward(x.value, proj));
                         return project(y, proj);
                       },
                       {&x}));
    record("mean_pool", num::grad_check(
                            [&](bool g) {
                              const auto y = num::mean_pool(x.value);
                              if (g) num::add_inplace(x.grad, num::mean_pool_backward(x.value.rows(), proj_pool));
                              return project(y, proj_pool);
                            },
                            {&x}));
    record("concat", num::grad_check(
                         [&](bool g) {
                           const auto y = num::concat_rows(x.value, z.value);
                           if (g) {
                             auto [dx, dz] = num::concat_rows_backward(proj_cat, x.value.rows());
                             num::add_inplace(x.grad, dx);
                             num::add_inplace(z.grad, dz);
                           }
                           return project(y, proj_cat);
                         },
                         {&x, &z}));
    record("layer_norm", num::grad_check(
                             [&](bool g) {
                               num::LayerNormCache<double> cache;
                               const auto y = num::layer_norm(x.value, gain.value, bias.value, &cache);
                               if (g) num::add_inplace(x.grad, num::layer_norm_backward(cache, gain.value, proj, gain.grad, bias.grad));
                               return project(y, proj);
                             },
                             {&x, &gain, &bias}));
    auto loss = [&](const std::string& name, auto fn) {
      record(name, num::grad_check(
                       [&](bool g) {
                         Tensor<double> d;
                         const double l = fn(g ? &d : nullptr);
                         if (g) num::add_inplace(x.grad, d);
                         return l;
                       },
                       {&x}));
    };
    loss("cross_entropy", [&](Tensor<double>* d) { return num::cross_entropy(x.value, labels, d); });
    loss("l2", [&](Tensor<double>* d) { return num::l2_loss(x.value, target, d); });
    loss("l1", [&](Tensor<double>* d) { return num::l1_loss(x.value, target, d); });
  }
  for (int i = 0; i < 100; ++i) {
    const std::size_t heads = dim(rng, 1, 3), width = heads * dim(rng, 1, 3), rows = dim(rng, 1, 5);
    num::AttentionWeights<double> w("attn", width);
    for (auto* p : w.parameters()) randomize(*p, rng, 0.5);
    Parameter<double> x("x", rows, width);
    randomize(x, rng);
    const auto proj = random_tensor<double>(rng, rows, width);
    auto params = w.parameters();
    params.push_back(&x);
    record("attention", num::grad_check(
                            [&](bool g) {
                              num::AttentionCache<double> cache;
                              const auto y = num::multi_head_attention(x.value, w, heads, &cache);
                              if (g) num::add_inplace(x.grad, num::multi_head_attention_backward(cache, w, proj));
                              return project(y, proj);
                            },
                            params));
  }
  for (int i = 0; i < 100; ++i) {
    sane::SaneConfig cfg;
    cfg.seq_len = dim(rng, 2, 4);
    cfg.d_model = 8;
    cfg.encoders = 1 + rng.below(2);
    cfg.heads = 2;
    cfg.d_mlp = 12;
    cfg.latent_dim = 5;
    cfg.attr_dim = 3;
    cfg.num_classes = 3;
    cfg.standard_residual = i % 2 == 1;
    sane::BasicSaneModel<double> model(cfg);
    model.initialize(rng);
    for (auto* p : model.parameters()) {
      if (p->name == "sla" || p->name == "pos") randomize(*p, rng, 0.5);
    }
    std::vector<Tensor<double>> data;
    std::vector<int> labels;
    for (int s = 0; s < 2; ++s) {
      data.push_back(random_tensor<double>(rng, cfg.seq_len, 8));
      labels.push_back(static_cast<int>(rng.below(3)));
    }
    std::vector<const Tensor<double>*> xs;
    for (const auto& d : data) xs.push_back(&d);
    record("sane", num::grad_check([&](bool g) { return model.batch_loss(xs, labels, g); }, model.parameters()));
  }
  for (int i = 0; i < 100; ++i) {
    cvae::CvaeConfig cfg;
    cfg.input_dim = 5;
    cfg.cond_dim = i % 4 < 2 ? 3 : 0;
    cfg.z_dim = 3;
    cfg.hidden = 6;
    cfg.recon = i % 2 ? cvae::ReconLoss::kL2 : cvae::ReconLoss::kL1;
    cvae::BasicCvae<double> model(cfg);
    model.initialize(rng);
    const std::size_t batch = 2 + rng.below(3);
    const auto b = random_tensor<double>(rng, batch, 5);
    const auto a = random_tensor<double>(rng, batch, cfg.cond_dim);
    const auto eps = random_tensor<double>(rng, batch, 3);
    record("cvae", num::grad_check([&](bool g) { return model.loss(b, a, eps, g).total; }, model.parameters()));
  }
  const double seconds = clock.seconds();
  double max_err = 0;
  std::string worst_name;
  int fewest = 1 << 30;
  for (const auto& [name, err] : worst) {
    if (err >= max_err) max_err = err, worst_name = name;
    fewest = std::min(fewest, count[name]);
  }
  return {max_err < 1e-4 && fewest >= 100 && seconds < 120,
          std::to_string(worst.size()) + " checks x >=" + std::to_string(fewest) + " instances, max rel err " +
              fmt(max_err, 8) + " (" + worst_name + "), " + fmt(seconds, 1) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome structure() {
  num::Rng rng(2002);
  double row_err = 0;
  for (int i = 0; i < 50; ++i) {
    num::AttentionWeights<float> w("attn", 64);
    for (auto* p : w.parameters()) randomize(*p, rng, 0.3);
    num::AttentionCache<float> cache;
    num::multi_head_attention(random_tensor<float>(rng, 201, 64, 2.0), w, 8, &cache);
    for (const auto& a : cache.weights) {
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0;
        for (float v : a.row(r)) s += v;
        row_err = std::max(row_err, std::abs(s - 1.0));
      }
    }
  }

  // Default-sized SANE with the positional embedding zeroed.
  sane::SaneConfig scfg;
  scfg.num_classes = 10;
  sane::SaneModel model(scfg);
  model.initialize(rng);
  for (auto* p : model.parameters()) {
    if (p->name == "pos") p->value.zero();
  }
  double perm_err = 0;
  std::vector<std::size_t> order(scfg.seq_len);
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_tensor<float>(rng, scfg.seq_len, 8);
    rng.shuffle(std::span(order));
    Tensor<float> y(scfg.seq_len, 8);
    for (std::size_t r = 0; r < order.size(); ++r) std::copy(x.row(order[r]).begin(), x.row(order[r]).end(), y.row(r).begin());
    const auto a = model.forward(x), b = model.forward(y);
    for (std::size_t i = 0; i < a.latent.size(); ++i) perm_err = std::max(perm_err, static_cast<double>(std::abs(a.latent[i] - b.latent[i])));
    for (std::size_t i = 0; i < a.logits.size(); ++i) perm_err = std::max(perm_err, static_cast<double>(std::abs(a.logits[i] - b.logits[i])));
    for (std::size_t i = 0; i < a.attribute.size(); ++i) perm_err = std::max(perm_err, static_cast<double>(std::abs(a.attribute[i] - b.attribute[i])));
  }

  // KL on every training batch of a default CVAE on clustered rows.
  cvae::CvaeConfig ccfg;
  const std::size_t per = 64;
  Tensor<float> rows(per * ccfg.cond_dim, ccfg.input_dim), cond(per * ccfg.cond_dim, ccfg.cond_dim);
  for (std::size_t c = 0; c < ccfg.cond_dim; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t j = 0; j < ccfg.input_dim; ++j) rows(c * per + i, j) = static_cast<float>(rng.normal(static_cast<double>(c), 0.3));
      for (std::size_t j = 0; j < ccfg.cond_dim; ++j) cond(c * per + i, j) = static_cast<float>(c == j);
    }
  }
  const auto trained = cvae::train_cvae_rows(rows, cond, ccfg);

  // Pseudo data: a fresh 12-class draw, plus every pipeline run on disk.
  std::vector<attr::AttributeVector> attrs;
  for (int c = 0; c < 12; ++c) attrs.push_back({"d" + std::to_string(c), {0.1f * static_cast<float>(c), 0.5f, -0.2f}});
  std::vector<cvae::PseudoDataset> sets{cvae::generate_pseudo(trained.model, attrs, 500, 3)};
  if (fs::exists(g_work)) {
    for (const auto& e : fs::recursive_directory_iterator(g_work)) {
      if (e.path().filename() == "pseudo.csv") sets.push_back(cvae::read_pseudo_csv(e.path()));
    }
  }
  bool balanced = true;
  for (const auto& p : sets) {
    const std::size_t k = p.samples.rows() / std::max<std::size_t>(p.classes.size(), 1);
    for (std::size_t c = 0; c < p.classes.size(); ++c) {
      balanced &= static_cast<std::size_t>(std::count(p.labels.begin(), p.labels.end(), static_cast<int>(c))) == k;
    }
    balanced &= p.classes.size() == 12 && k * 12 == p.samples.rows();
  }

  const bool pass = row_err <= 1e-6 && perm_err <= 1e-5 && trained.min_batch_kl >= 0 && trained.batches > 0 && balanced;
  return {pass, "attention row err " + fmt(row_err, 9) + ", permutation err " + fmt(perm_err, 9) + ", min KL " +
                    fmt(trained.min_batch_kl, 6) + " over " + std::to_string(trained.batches) + " batches, " +
                    std::to_string(sets.size()) + " pseudo sets " + (balanced ? "balanced over 12 classes" : "UNBALANCED")};
}

// ---------------------------------------------------------------- 3

Outcome supervised() {
  const Stopwatch clock;
  std::vector<std::string> devices;
  const auto split = preset_split("separable-12", 1, &devices);
  sane::SaneConfig cfg;
  cfg.num_classes = devices.size();
  const auto result = sane::train_sane(split.train, split.val, cfg);
  const double acc = sane::evaluate_supervised(result.model, split.test).accuracy;
  const double seconds = clock.seconds();
  // Criterion 8 bounds this accuracy by the oracle too.
  fs::create_directories(g_work);
  std::ofstream(g_work / "supervised.json") << nlohmann::json{{"preset", "separable-12"}, {"accuracy", acc}} << '\n';
  return {acc >= 0.95 && seconds < 900, std::to_string(devices.size()) + " devices, " + std::to_string(split.test.size()) +
                                            " test sequences, accuracy " + fmt(acc) + ", " + fmt(seconds, 1) + " s"};
}

// ---------------------------------------------------------------- 4

Outcome end_to_end() {
  const auto cfg = separable_config();
  const auto r = pipeline(cfg);
  const double seconds = recorded_seconds(cfg.output);
  std::ostringstream d;
  bool pass = seconds < 2700;
  for (const auto setting : {clf::Setting::kZsl, clf::Setting::kGzsl}) {
    const double zest = mean_of(r.summary, "zest", setting);
    double best = -1;
    std::string best_name;
    for (const auto& b : cfg.baselines) {
      const double v = mean_of(r.summary, b, setting);
      if (v > best) best = v, best_name = b;
    }
    pass &= zest >= 0.80 && zest > best;
    d << clf::to_string(setting) << " zest " << fmt(zest) << " vs best " << best_name << ' ' << fmt(best) << "; ";
  }
  d << "stage time " << fmt(seconds / 60, 1) << " min";
  return {pass, d.str()};
}

// ---------------------------------------------------------------- 5

Outcome baseline_order() {
  const auto r = pipeline(hard_config());
  std::ostringstream d;
  bool pass = true;
  for (const auto setting : {clf::Setting::kZsl, clf::Setting::kGzsl}) {
    const double cr = mean_of(r.summary, "seqcr", setting), cs = mean_of(r.summary, "seqcs", setting),
                 deft = mean_of(r.summary, "deft", setting);
    pass &= cs >= cr && deft >= cs - 0.02;
    d << clf::to_string(setting) << " seqcr " << fmt(cr) << " seqcs " << fmt(cs) << " deft " << fmt(deft) << "; ";
  }
  auto s = d.str();
  return {pass, s.substr(0, s.size() - 2)};
}

// ---------------------------------------------------------------- 6

Outcome attr_sweep() {
  auto cfg = hard_config();
  cfg.output = g_work / "hard-12";
  const std::vector<std::string> values{"2", "3", "4", "5"};
  fs::create_directories(cfg.output);
  pl::SweepResult r;
  {
    const pl::DirLock lock(cfg.output, 1e9);
    r = pl::run_sweep(cfg, "attr-dim", values, log_line);
  }
  // Complete: every value has every method under both settings, and the
  // summary file lists them all.
  const fs::path csv = cfg.output / "sweep-attr-dim" / "sweep.csv";
  std::ifstream in(csv);
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) lines += !l.empty();
  const std::size_t expected = values.size() * (1 + cfg.baselines.size()) * 2;
  bool complete = r.runs.size() == values.size() && lines == expected + 1;
  for (const auto& run : r.runs) {
    for (const auto& m : std::vector<std::string>{"zest", "vae-k", "seqcr", "seqcs", "deft"}) {
      for (const auto s : {clf::Setting::kZsl, clf::Setting::kGzsl}) {
        complete &= std::any_of(run.summary.begin(), run.summary.end(),
                                [&](const auto& row) { return row.method == m && row.setting == s && row.runs == cfg.seeds.size(); });
      }
    }
  }
  std::ostringstream d;
  bool within = true;
  for (const auto setting : {clf::Setting::kZsl, clf::Setting::kGzsl}) {
    d << clf::to_string(setting) << " zest by N:";
    double best = -1, at3 = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double v = mean_of(r.runs[i].summary, "zest", setting);
      d << ' ' << values[i] << '=' << fmt(v, 3);
      best = std::max(best, v);
      if (values[i] == "3") at3 = v;
    }
    within &= at3 >= best - 0.03;
    d << "; ";
  }
  d << (complete ? "report complete" : "report INCOMPLETE");
  return {complete && within, d.str()};
}

// ---------------------------------------------------------------- 7

Outcome unseen_sweep() {
  std::ostringstream d;
  d << "ZSL by unseen count:";
  std::vector<double> zsl;
  for (std::size_t u = 1; u <= 4; ++u) {
    auto cfg = hard_config();
    if (u != cfg.num_unseen) {
      cfg.num_unseen = u;
      cfg.output = g_work / "hard-12" / ("unseen-" + std::to_string(u));
    }
    zsl.push_back(mean_of(pipeline(cfg).summary, "zest", clf::Setting::kZsl));
    d << ' ' << u << '=' << fmt(zsl.back());
  }
  bool pass = true;
  for (std::size_t i = 1; i < zsl.size(); ++i) pass &= zsl[i] <= zsl[i - 1] + 0.02;
  return {pass, d.str()};
}

// ---------------------------------------------------------------- 8

double brute_force_cost(const std::vector<std::vector<double>>& cost) {
  std::vector<int> perm(cost[0].size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0;
    for (std::size_t r = 0; r < cost.size(); ++r) s += cost[r][static_cast<std::size_t>(perm[r])];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double brute_force_accuracy(std::span<const int> assign, std::span<const int> labels, std::size_t k) {
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < assign.size(); ++i) hits += perm[static_cast<std::size_t>(assign[i])] == labels[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(assign.size());
}

/// Dense grid, then two finer grids around the best cell.
double grid_minimum(const Tensor<float>& x, std::span<const int> y, double c) {
  std::vector<double> best{0, 0, 0};
  double best_obj = clf::hinge_objective(x, y, std::vector<double>{0, 0}, 0, c);
  auto scan = [&](std::vector<double> center, double half, double step) {
    for (double w0 = center[0] - half; w0 <= center[0] + half; w0 += step) {
      for (double w1 = center[1] - half; w1 <= center[1] + half; w1 += step) {
        for (double b = center[2] - half; b <= center[2] + half; b += step) {
          const double o = clf::hinge_objective(x, y, std::vector<double>{w0, w1}, b, c);
          if (o < best_obj) best_obj = o, best = {w0, w1, b};
        }
      }
    }
  };
  scan({0, 0, 0}, 6.0, 0.1);
  scan(best, 0.2, 0.004);
  scan(best, 0.01, 0.0005);
  return best_obj;
}

/// Maximum-likelihood accuracy on a fresh draw with at least 2000 sequences.
double oracle(const std::string& preset, std::size_t* sequences) {
  auto profiles = synth::preset(preset);
  for (auto& p : profiles) p.sessions = 200;
  const auto ds = ingest::build_dataset(synth::generate(profiles, 8008), 200);
  *sequences = ds.points.size();
  return synth::bayes_oracle(profiles, ds.points, ds.devices);
}

Outcome oracles() {
  num::Rng rng(8008);
  std::ostringstream d;

  bool monotone = true;
  for (int t = 0; t < 30; ++t) {
    const auto pts = random_tensor<float>(rng, 60 + rng.below(60), 2 + rng.below(4), 2.0);
    base::KMeansOptions o;
    o.seed = static_cast<std::uint64_t>(t);
    o.restarts = 1;
    const auto r = base::kmeans(pts, 2 + rng.below(5), o);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) monotone &= r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12);
  }
  d << "k-means " << (monotone ? "monotone" : "NOT monotone") << "; ";

  bool hungarian = true;
  for (std::size_t k = 1; k <= 4; ++k) {
    for (int t = 0; t < 50; ++t) {
      std::vector<std::vector<double>> cost(k, std::vector<double>(k));
      for (auto& row : cost) {
        for (auto& v : row) v = static_cast<double>(rng.below(10));
      }
      const auto a = base::hungarian(cost);
      double s = 0;
      for (std::size_t r = 0; r < k; ++r) s += cost[r][static_cast<std::size_t>(a[r])];
      hungarian &= s == brute_force_cost(cost);
      std::vector<int> assign(40), labels(40);
      for (auto& v : assign) v = static_cast<int>(rng.below(k));
      for (auto& v : labels) v = static_cast<int>(rng.below(k));
      hungarian &= std::abs(base::cluster_accuracy(assign, labels, k).accuracy - brute_force_accuracy(assign, labels, k)) < 1e-12;
    }
  }
  d << "Hungarian " << (hungarian ? "matches" : "DIFFERS FROM") << " brute force for k<=4; ";

  double svm_ratio = 0;
  for (int t = 0; t < 3; ++t) {
    Tensor<float> x(16, 2);
    std::vector<int> y(16);
    for (std::size_t i = 0; i < 16; ++i) {
      const bool pos = i >= 8;
      x(i, 0) = static_cast<float>((pos ? 1.0 : 0.0) + rng.uniform(-0.9, 0.9));
      x(i, 1) = static_cast<float>((pos ? 0.8 : 0.0) + rng.uniform(-0.9, 0.9));
      y[i] = pos ? 1 : -1;
    }
    const auto svm = clf::train_binary_svm(x, y, {}, 11);
    svm_ratio = std::max(svm_ratio, svm.objective / grid_minimum(x, y, 1.0));
  }
  d << "SVM/grid objective " << fmt(svm_ratio) << "; ";

  // Every method's per-run accuracy on each preset against its oracle.
  bool bounded = true;
  for (const auto& [preset, cfg] : {std::pair{std::string("separable-12"), separable_config()},
                                    std::pair{std::string("hard-12"), hard_config()}}) {
    std::size_t n = 0;
    const double o = oracle(preset, &n);
    double top = 0;
    for (const auto& rep : pipeline(cfg).reports) top = std::max(top, rep.accuracy);
    if (preset == "separable-12" && fs::exists(g_work / "supervised.json")) {
      std::ifstream in(g_work / "supervised.json");
      top = std::max(top, nlohmann::json::parse(in).at("accuracy").get<double>());
    }
    bounded &= n >= 2000 && top <= o + 0.01;
    d << preset << " oracle " << fmt(o) << " on " << n << " sequences, best method run " << fmt(top) << "; ";
  }
  auto s = d.str();
  return {monotone && hungarian && svm_ratio <= 1.02 && bounded, s.substr(0, s.size() - 2)};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Four separable devices with short sessions and a small network.
pl::ExperimentConfig quick_config(const fs::path& out) {
  auto profiles = synth::preset("separable-12");
  profiles.resize(4);
  for (auto& p : profiles) {
    p.sessions = 10;
    p.packets_per_session = 100;
  }
  fs::create_directories(g_work / "determinism");
  synth::save_profiles(g_work / "determinism" / "profiles.txt", profiles);
  auto cfg = pl::parse_config("source.profiles = " + (g_work / "determinism" / "profiles.txt").string() +
                              "\nsane.seq_len = 20\nsane.d_model = 16\nsane.heads = 2\nsane.d_mlp = 32\n"
                              "sane.epochs = 4\nsane.batch_size = 16\ncvae.epochs = 10\npseudo.per_class = 50\n"
                              "baseline.vae_epochs = 10\nbaseline.forest_trees = 5\npartition.num_unseen = 1\n"
                              "partition.seeds = 1 2\n");
  cfg.output = out;
  return cfg;
}

Outcome determinism() {
  const fs::path root = g_work / "determinism";
  for (const char* leaf : {"a", "b"}) fs::remove_all(root / leaf);
  pipeline(quick_config(root / "a"));
  pipeline(quick_config(root / "b"));
  bool same = true;
  for (const char* f : {"reports.jsonl", "report.csv", "runs.csv"}) same &= slurp(root / "a" / f) == slurp(root / "b" / f);
  for (const char* f : {"sane.bin", "cvae.bin", "pseudo.csv", "svm_gzsl.json"}) {
    same &= slurp(root / "a" / "seed-1" / f) == slurp(root / "b" / "seed-1" / f);
  }

  // Round trip of the full-size SANE and CVAE checkpoints from the
  // separable-12 run when present, else the quick run's.
  fs::path run = g_work / "separable-12" / "seed-1";
  if (!fs::exists(pl::manifest_file(run, "train-cvae"))) run = root / "a" / "seed-1";
  const auto model = sane::load_sane(run / "sane");
  const fs::path copy = root / "roundtrip";
  fs::create_directories(copy);
  bool exact = sane::save_sane(copy / "sane", model) == num::sha256_file(run / "sane.bin") &&
               slurp(copy / "sane.bin") == slurp(run / "sane.bin");
  const auto back = sane::load_sane(copy / "sane");
  num::Rng rng(9009);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_tensor<float>(rng, model.config().seq_len, 8);
    exact &= back.forward(x).logits == model.forward(x).logits;
  }
  const auto cv = cvae::load_cvae(run / "cvae");
  cvae::save_cvae(copy / "cvae", cv);
  exact &= slurp(copy / "cvae.bin") == slurp(run / "cvae.bin");
  return {same && exact, std::string("reruns ") + (same ? "identical" : "DIFFER") + "; checkpoints " +
                             (exact ? "bit exact, logits preserved" : "NOT EXACT") + " (" + run.string() + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = ZEST_ACCEPTANCE_WORK;
  std::vector<int> which;
  app.add_option("--work", work, "experiment directory");
  app.add_option("criteria", which, "criteria to run (default: all)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::vector<std::function<Outcome()>> checks{gradients,    structure,   supervised, end_to_end, baseline_order,
                                                     attr_sweep,   unseen_sweep, oracles,   determinism};
  bool all = true;
  for (const int c : which) {
    Outcome o;
    try {
      o = checks[static_cast<std::size_t>(c - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all &= o.pass;
    const std::string line = "criterion " + std::to_string(c) + ": " + (o.pass ? "PASS" : "FAIL") + "  " + o.detail;
    std::cout << line << std::endl;
    // Kept next to the experiments, so a ctest run leaves every line behind.
    fs::create_directories(g_work);
    std::ofstream(g_work / ("criterion-" + std::to_string(c) + ".txt")) << line << '\n';
  }
  return all ? 0 : 1;
}
