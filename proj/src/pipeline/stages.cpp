#include "zest/pipeline/stages.hpp"

#include "zest/baselines/pipelines.hpp"
#include "zest/classifier/svm.hpp"
#include "zest/cvae/cvae.hpp"
#include "zest/numerics/archive.hpp"
#include "zest/sane/train.hpp"
#include "zest/synth/profile.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <thread>

namespace zest::pipeline {

namespace fs = std::filesystem;
using num::Tensor;

// ---------------------------------------------------------------- lock

DirLock::DirLock(const fs::path& dir, double wait_seconds) : path_(dir / ".zest.lock") {
  fs::create_directories(dir);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(wait_seconds);
  while (true) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw LockError("cannot create " + path_.string() + ": " + std::strerror(errno));
    if (std::chrono::steady_clock::now() >= deadline) {
      throw LockError("output directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                      " if no run is active)");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------- manifests

Workspace::Workspace(fs::path root, Log log) : root_(std::move(root)), log_(std::move(log)) {}

fs::path manifest_file(const fs::path& dir, const std::string& stage) { return dir / (stage + ".manifest.json"); }

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& path) {
  const auto j = read_json(path);
  return {j.at("stage"), j.at("key"), j.at("inputs").get<std::map<std::string, std::string>>(),
          j.at("outputs").get<std::map<std::string, std::string>>(), j.value("seconds", 0.0)};
}

bool outputs_intact(const fs::path& dir, const Manifest& m) {
  for (const auto& [file, sha] : m.outputs) {
    if (!fs::exists(dir / file) || num::sha256_file(dir / file) != sha) return false;
  }
  return true;
}

bool cache_hit(const fs::path& dir, const std::string& stage, const nlohmann::json& key,
               const std::map<std::string, std::string>& inputs) {
  const fs::path mf = manifest_file(dir, stage);
  if (!fs::exists(mf)) return false;
  try {
    const Manifest m = read_manifest(mf);
    return m.key == key && m.inputs == inputs && outputs_intact(dir, m);
  } catch (const std::exception&) {
    return false;
  }
}

template <typename Body>
bool run_stage(const Workspace& ws, const fs::path& dir, const std::string& stage, const nlohmann::json& key,
               const std::map<std::string, std::string>& inputs, const std::vector<std::string>& outputs, Body body) {
  const std::string where = dir.filename().string() + "/" + stage;
  if (cache_hit(dir, stage, key, inputs)) {
    ws.log(where + ": up to date");
    return true;
  }
  ws.log(where + ": running");
  fs::create_directories(dir);
  // An interrupted run must never look complete.
  fs::remove(manifest_file(dir, stage));
  const auto start = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  Manifest m{stage, key, inputs, {}, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
  for (const auto& f : outputs) m.outputs[f] = num::sha256_file(dir / f);
  write_json(manifest_file(dir, stage), {{"stage", m.stage},
                                         {"key", m.key},
                                         {"inputs", m.inputs},
                                         {"outputs", m.outputs},
                                         {"seconds", m.seconds}});
  return false;
}

std::map<std::string, std::string> upstream(std::initializer_list<std::pair<fs::path, std::string>> deps) {
  std::map<std::string, std::string> out;
  for (const auto& [dir, stage] : deps) {
    for (const auto& [file, sha] : require_stage(dir, stage).outputs) out[stage + ":" + file] = sha;
  }
  return out;
}

ingest::Dataset load_raw(const Workspace& ws) { return ingest::load_dataset(ws.data_dir() / "dataset"); }

nlohmann::json baseline_key(const base::BaselineConfig& b, std::uint64_t seed) {
  return {{"kmeans_max_iter", b.kmeans_max_iter},
          {"kmeans_restarts", b.kmeans_restarts},
          {"forest", {{"trees", b.forest.trees}, {"max_depth", b.forest.max_depth},
                      {"min_samples_split", b.forest.min_samples_split}, {"bootstrap", b.forest.bootstrap},
                      {"max_features", b.forest.max_features}}},
          {"vae", b.vae.to_json()},
          {"seed", seed}};
}

cvae::CvaeConfig cvae_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  cvae::CvaeConfig c = cfg.cvae;
  c.input_dim = cfg.sane.latent_dim;
  c.cond_dim = cfg.sane.attr_dim;
  c.seed = derive_seed(cfg.cvae.seed, seed);
  return c;
}

std::vector<int> json_ints(const nlohmann::json& j) { return j.get<std::vector<int>>(); }

/// Stacks the rows of several latent sets.
std::pair<Tensor<float>, Tensor<float>> stack(const std::vector<const attr::LatentSet*>& sets, std::size_t m,
                                              std::size_t n) {
  std::size_t rows = 0;
  for (const auto* s : sets) rows += s->count();
  Tensor<float> l(rows, m), lambda(rows, n);
  std::size_t r = 0;
  for (const auto* s : sets) {
    for (std::size_t i = 0; i < s->count(); ++i, ++r) {
      std::copy(s->latents.row(i).begin(), s->latents.row(i).end(), l.row(r).begin());
      std::copy(s->attributes.row(i).begin(), s->attributes.row(i).end(), lambda.row(r).begin());
    }
  }
  return {std::move(l), std::move(lambda)};
}

}  // namespace

Manifest require_stage(const fs::path& dir, const std::string& stage) {
  const fs::path mf = manifest_file(dir, stage);
  if (!fs::exists(mf)) throw StageError(stage, "no manifest in " + dir.string() + "; run `zest " + stage + "` first");
  Manifest m;
  try {
    m = read_manifest(mf);
  } catch (const std::exception& e) {
    throw StageError(stage, "unreadable manifest " + mf.string() + " (" + e.what() + "); re-run `zest " + stage + "`");
  }
  if (!outputs_intact(dir, m)) {
    throw StageError(stage, "outputs in " + dir.string() + " do not match their manifest; re-run `zest " + stage + "`");
  }
  return m;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t partition_seed) {
  return num::mix_seed(base ^ num::mix_seed(partition_seed + 0x5eedULL));
}

// ---------------------------------------------------------------- splits / latents

PreparedSplit prepare_split(const ingest::Dataset& raw, std::size_t num_unseen, std::uint64_t seed) {
  PreparedSplit p;
  p.devices = raw.devices;
  p.partition = ingest::make_partition(raw.devices.size(), num_unseen, seed);
  p.seen.assign(p.partition.seen.begin(), p.partition.seen.end());
  p.unseen.assign(p.partition.unseen.begin(), p.partition.unseen.end());
  auto split = ingest::train_val_test_split(raw.points, {}, seed);
  std::vector<ingest::DataPoint> seen_train;
  for (const auto& pt : split.train) {
    if (p.partition.seen.contains(*pt.label)) seen_train.push_back(pt);
  }
  p.normalizer = ingest::Normalizer::for_packet_features();
  p.normalizer.fit(seen_train);
  p.normalizer.apply(split.train);
  p.normalizer.apply(split.val);
  p.normalizer.apply(split.test);
  p.train = std::move(split.train);
  p.val = std::move(split.val);
  p.test = std::move(split.test);
  return p;
}

std::string save_run_latents(const fs::path& stem, const RunLatents& latents) {
  std::vector<attr::LatentSet> flat;
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& set : latents.sets[s]) {
      flat.push_back({std::string(RunLatents::kSplits[s]) + "/" + set.device_id, set.latents, set.attributes});
    }
  }
  return attr::save_latents(stem, flat);
}

RunLatents load_run_latents(const fs::path& stem) {
  RunLatents out;
  for (auto& set : attr::load_latents(stem)) {
    const auto slash = set.device_id.find('/');
    const std::string split = set.device_id.substr(0, slash);
    set.device_id = set.device_id.substr(slash + 1);
    const auto it = std::find(RunLatents::kSplits.begin(), RunLatents::kSplits.end(), split);
    if (it == RunLatents::kSplits.end()) throw std::runtime_error("latent archive: unknown split " + split);
    const auto s = static_cast<std::size_t>(it - RunLatents::kSplits.begin());
    if (s == 0) out.devices.push_back(set.device_id);
    out.sets[s].push_back(std::move(set));
  }
  return out;
}

std::vector<attr::AttributeVector> attributes_for(const RunLatents& latents, const std::vector<int>& seen) {
  std::vector<attr::LatentSet> sources;
  for (std::size_t c = 0; c < latents.devices.size(); ++c) {
    const bool is_seen = std::find(seen.begin(), seen.end(), static_cast<int>(c)) != seen.end();
    if (is_seen) {
      sources.push_back(latents.sets[0][c]);
    } else {
      const auto& tr = latents.sets[0][c];
      const auto& va = latents.sets[1][c];
      auto [l, lambda] = stack({&tr, &va}, tr.latents.cols(), tr.attributes.cols());
      sources.push_back({latents.devices[c], std::move(l), std::move(lambda)});
    }
  }
  const auto by_id = attr::compute_attributes(sources);
  std::vector<attr::AttributeVector> out;
  for (const auto& d : latents.devices) out.push_back(by_id.at(d));
  return out;
}

// ---------------------------------------------------------------- stages

std::vector<std::string> stage_names() {
  return {"synth", "ingest", "train-sane", "extract-attrs", "train-cvae", "gen-pseudo", "train-clf", "eval"};
}

bool stage_synth(const ExperimentConfig& cfg, const Workspace& ws) {
  if (!cfg.csv.empty()) {
    ws.log("data/synth: skipped (source.csv is set)");
    return true;
  }
  const auto profiles = cfg.profiles.empty() ? synth::preset(cfg.preset) : synth::load_profiles(cfg.profiles);
  const nlohmann::json key = {{"profiles_sha256", num::sha256_hex(synth::format_profiles(profiles))},
                              {"synth_seed", cfg.synth_seed}};
  const fs::path dir = ws.data_dir();
  return run_stage(ws, dir, "synth", key, {}, {"packets.csv", "profiles.txt"}, [&] {
    ingest::write_packet_csv(dir / "packets.csv", synth::generate(profiles, cfg.synth_seed));
    synth::save_profiles(dir / "profiles.txt", profiles);
  });
}

bool stage_ingest(const ExperimentConfig& cfg, const Workspace& ws) {
  const fs::path dir = ws.data_dir();
  fs::path csv;
  std::map<std::string, std::string> inputs;
  if (!cfg.csv.empty()) {
    csv = cfg.csv;
    if (!fs::exists(csv)) throw StageError("ingest", "packet CSV not found: " + csv.string());
    inputs["packets"] = num::sha256_file(csv);
  } else {
    csv = dir / "packets.csv";
    inputs = upstream({{dir, "synth"}});
  }
  const nlohmann::json key = {{"seq_len", cfg.sane.seq_len}};
  return run_stage(ws, dir, "ingest", key, inputs, {"dataset.json", "dataset.bin", "ingest.json"}, [&] {
    const auto parsed = ingest::parse_packet_csv(csv);
    for (const auto& w : parsed.warnings) ws.log("ingest: " + w);
    const auto dataset = ingest::build_dataset(parsed.records, cfg.sane.seq_len);
    if (dataset.devices.size() < 2) throw std::runtime_error("need at least 2 devices, found " + std::to_string(dataset.devices.size()));
    ingest::save_dataset(dir / "dataset", dataset);
    nlohmann::json summary = {{"source", csv.string()},
                              {"data_rows", parsed.data_rows},
                              {"records", parsed.records.size()},
                              {"skipped", parsed.skipped},
                              {"seq_len", dataset.seq_len},
                              {"features", dataset.features},
                              {"devices", dataset.devices},
                              {"points", dataset.points.size()}};
    write_json(dir / "ingest.json", summary);
  });
}

bool stage_train_sane(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed) {
  const fs::path dir = ws.run_dir(seed);
  const auto inputs = upstream({{ws.data_dir(), "ingest"}});
  sane::SaneConfig sc = cfg.sane;
  sc.seed = derive_seed(cfg.sane.seed, seed);
  const nlohmann::json key = {{"sane", sc.to_json()}, {"num_unseen", cfg.num_unseen}, {"partition_seed", seed}};
  return run_stage(ws, dir, "train-sane", key, inputs, {"sane.json", "sane.bin", "sane_log.csv", "split.json"}, [&] {
    const auto raw = load_raw(ws);
    const auto prep = prepare_split(raw, cfg.num_unseen, seed);
    sc.num_classes = prep.seen.size();
    std::map<int, int> to_seen;
    for (std::size_t i = 0; i < prep.seen.size(); ++i) to_seen[prep.seen[i]] = static_cast<int>(i);
    auto relabel = [&](const std::vector<ingest::DataPoint>& pts) {
      std::vector<ingest::DataPoint> out;
      for (const auto& p : pts) {
        if (!to_seen.contains(*p.label)) continue;
        out.push_back(p);
        out.back().label = to_seen.at(*p.label);
      }
      return out;
    };
    const auto train = relabel(prep.train), val = relabel(prep.val), test = relabel(prep.test);
    sane::TrainOptions opts;
    opts.on_epoch = [&](const sane::EpochLog& e) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "train-sane: epoch %zu loss %.4f train %.3f val %.3f", e.epoch, e.train_loss,
                    e.train_acc, e.val_acc);
      ws.log(buf);
    };
    const auto result = sane::train_sane(train, val, sc, opts);
    sane::save_sane(dir / "sane", result.model);
    sane::write_training_log(dir / "sane_log.csv", result.log);
    const double seen_test = test.empty() ? 0.0 : sane::evaluate_supervised(result.model, test).accuracy;
    write_json(dir / "split.json", {{"partition_seed", seed},
                                    {"devices", prep.devices},
                                    {"seen", prep.seen},
                                    {"unseen", prep.unseen},
                                    {"normalizer", prep.normalizer.to_json()},
                                    {"best_epoch", result.best_epoch},
                                    {"best_val_accuracy", result.best_val_acc},
                                    {"seen_test_accuracy", seen_test}});
  });
}

bool stage_extract_attrs(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed) {
  const fs::path dir = ws.run_dir(seed);
  const auto inputs = upstream({{ws.data_dir(), "ingest"}, {dir, "train-sane"}});
  return run_stage(ws, dir, "extract-attrs", {}, inputs, {"latents.json", "latents.bin", "attributes.csv"}, [&] {
    const auto raw = load_raw(ws);
    const auto prep = prepare_split(raw, cfg.num_unseen, seed);
    const auto split = read_json(dir / "split.json");
    if (json_ints(split.at("seen")) != prep.seen) throw std::runtime_error("partition differs from train-sane's");
    auto model = std::make_shared<const sane::SaneModel>(sane::load_sane(dir / "sane"));
    const attr::Extractors ex = attr::strip(model);
    attr::ExtractOptions opts;
    opts.threads = cfg.threads;
    RunLatents latents;
    latents.devices = prep.devices;
    const std::array<const std::vector<ingest::DataPoint>*, 3> parts{&prep.train, &prep.val, &prep.test};
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < prep.devices.size(); ++c) {
        std::vector<ingest::DataPoint> pts;
        for (const auto& p : *parts[s]) {
          if (*p.label == static_cast<int>(c)) pts.push_back(p);
        }
        if (pts.empty()) {
          latents.sets[s].push_back({prep.devices[c], Tensor<float>(0, ex.latent_dim()), Tensor<float>(0, ex.attr_dim())});
        } else {
          latents.sets[s].push_back(attr::extract_latents(ex, pts, prep.devices[c], opts));
        }
      }
    }
    save_run_latents(dir / "latents", latents);
    const auto attributes = attributes_for(latents, prep.seen);
    attr::write_attributes_csv(dir / "attributes.csv", attributes);
  });
}

bool stage_train_cvae(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed) {
  const fs::path dir = ws.run_dir(seed);
  const auto inputs = upstream({{dir, "train-sane"}, {dir, "extract-attrs"}});
  const auto cc = cvae_config(cfg, seed);
  return run_stage(ws, dir, "train-cvae", {{"cvae", cc.to_json()}}, inputs, {"cvae.json", "cvae.bin", "cvae_log.csv"}, [&] {
    const auto latents = load_run_latents(dir / "latents");
    const auto seen = json_ints(read_json(dir / "split.json").at("seen"));
    std::map<std::string, attr::AttributeVector> attrs;
    for (auto& a : attr::read_attributes_csv(dir / "attributes.csv")) attrs.emplace(a.device_id, a);
    // Only seen devices' training latents reach the CVAE.
    std::vector<attr::LatentSet> seen_sets;
    for (int c : seen) seen_sets.push_back(latents.sets[0][static_cast<std::size_t>(c)]);
    const auto result = cvae::train_cvae(seen_sets, attrs, cc);
    cvae::save_cvae(dir / "cvae", result.model);
    std::ofstream log(dir / "cvae_log.csv", std::ios::trunc);
    log << "epoch,loss,recon,kl\n";
    char buf[128];
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      const auto& l = result.epoch_losses[e];
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", e, l.total, l.recon, l.kl);
      log << buf;
    }
  });
}

bool stage_gen_pseudo(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed) {
  const fs::path dir = ws.run_dir(seed);
  const auto inputs = upstream({{dir, "train-cvae"}, {dir, "extract-attrs"}});
  const std::uint64_t pseudo_seed = derive_seed(cfg.cvae.seed + 0x9e37ULL, seed);
  const nlohmann::json key = {{"per_class", cfg.pseudo_per_class}, {"seed", pseudo_seed}};
  return run_stage(ws, dir, "gen-pseudo", key, inputs, {"pseudo.csv", "pseudo.csv.manifest.json"}, [&] {
    const auto model = cvae::load_cvae(dir / "cvae");
    const auto attributes = attr::read_attributes_csv(dir / "attributes.csv");
    const auto pseudo = cvae::generate_pseudo(model, attributes, cfg.pseudo_per_class, pseudo_seed);
    cvae::write_pseudo_csv(dir / "pseudo.csv", pseudo, cvae::decoder_checksum(model));
  });
}

bool stage_train_clf(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed) {
  const fs::path dir = ws.run_dir(seed);
  const auto inputs = upstream({{dir, "train-sane"}, {dir, "gen-pseudo"}});
  clf::SvmConfig sc = cfg.svm;
  sc.seed = derive_seed(cfg.svm.seed, seed);
  return run_stage(ws, dir, "train-clf", {{"svm", sc.to_json()}}, inputs, {"svm_gzsl.json", "svm_zsl.json"}, [&] {
    const auto pseudo = cvae::read_pseudo_csv(dir / "pseudo.csv");
    const auto unseen = json_ints(read_json(dir / "split.json").at("unseen"));
    clf::save_svm(dir / "svm_gzsl.json", clf::train_svm(pseudo.samples, pseudo.labels, sc));
    // ZSL only ever sees the unseen classes' pseudo data.
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pseudo.labels.size(); ++i) {
      if (std::find(unseen.begin(), unseen.end(), pseudo.labels[i]) != unseen.end()) rows.push_back(i);
    }
    clf::SvmModel zsl;
    if (unseen.size() >= 2) {
      Tensor<float> x(rows.size(), pseudo.samples.cols());
      std::vector<int> y;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(pseudo.samples.row(rows[r]).begin(), pseudo.samples.row(rows[r]).end(), x.row(r).begin());
        y.push_back(pseudo.labels[rows[r]]);
      }
      zsl = clf::train_svm(x, y, sc);
    } else {
      // A single unseen class leaves nothing to discriminate.
      zsl.classes = unseen;
      zsl.machines = {clf::BinarySvm{std::vector<double>(pseudo.samples.cols(), 0.0), 0.0, 0.0}};
      zsl.config = sc;
    }
    clf::save_svm(dir / "svm_zsl.json", zsl);
  });
}

std::vector<clf::EvalReport> stage_eval(const ExperimentConfig&, const Workspace& ws, std::uint64_t seed) {
  const fs::path dir = ws.run_dir(seed);
  const auto inputs = upstream({{dir, "train-sane"}, {dir, "extract-attrs"}, {dir, "train-clf"}});
  run_stage(ws, dir, "eval", {}, inputs, {"zest.jsonl"}, [&] {
    const auto latents = load_run_latents(dir / "latents");
    const auto unseen = json_ints(read_json(dir / "split.json").at("unseen"));
    const auto gzsl_model = clf::load_svm(dir / "svm_gzsl.json");
    const auto zsl_model = clf::load_svm(dir / "svm_zsl.json");
    const std::size_t m = latents.sets[2].front().latents.cols();
    const std::size_t n = latents.sets[2].front().attributes.cols();

    std::vector<const attr::LatentSet*> all, unseen_sets;
    std::vector<int> all_labels, unseen_labels;
    for (std::size_t c = 0; c < latents.devices.size(); ++c) {
      const auto& set = latents.sets[2][c];
      all.push_back(&set);
      all_labels.insert(all_labels.end(), set.count(), static_cast<int>(c));
      if (std::find(unseen.begin(), unseen.end(), static_cast<int>(c)) != unseen.end()) {
        unseen_sets.push_back(&set);
        unseen_labels.insert(unseen_labels.end(), set.count(), static_cast<int>(c));
      }
    }
    std::vector<std::string> unseen_names;
    for (int u : unseen) unseen_names.push_back(latents.devices[static_cast<std::size_t>(u)]);
    auto gzsl = clf::evaluate(clf::Setting::kGzsl, gzsl_model, stack(all, m, n).first, all_labels, latents.devices, unseen);
    auto zsl = clf::evaluate(clf::Setting::kZsl, zsl_model, stack(unseen_sets, m, n).first, unseen_labels, unseen_names);
    gzsl.seed = zsl.seed = seed;
    if (unseen.size() == 1) zsl.note = "single unseen class: ZSL is trivially correct";
    const std::vector<clf::EvalReport> reports{zsl, gzsl};
    clf::write_reports_jsonl(dir / "zest.jsonl", reports);
  });
  return clf::read_reports_jsonl(dir / "zest.jsonl");
}

std::vector<clf::EvalReport> stage_baseline(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed,
                                            const std::string& name) {
  const auto names = base::baseline_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw StageError("baseline", "unknown baseline '" + name + "' (expected vae-k, seqcr, seqcs or deft)");
  }
  const fs::path dir = ws.run_dir(seed);
  const std::string stage = "baseline-" + name;
  const auto inputs = upstream({{dir, "train-sane"}, {dir, "extract-attrs"}});
  base::BaselineConfig bc = cfg.baseline;
  bc.seed = derive_seed(cfg.baseline.seed, seed);
  const std::string out = stage + ".jsonl";
  run_stage(ws, dir, stage, baseline_key(bc, seed), inputs, {out}, [&] {
    const auto latents = load_run_latents(dir / "latents");
    const auto attributes = attr::read_attributes_csv(dir / "attributes.csv");
    base::BaselineData data;
    data.unseen = json_ints(read_json(dir / "split.json").at("unseen"));
    data.class_names = latents.devices;
    const std::size_t m = latents.sets[0].front().latents.cols();
    const std::size_t n = latents.sets[0].front().attributes.cols();
    data.attributes = Tensor<float>(latents.devices.size(), n);
    std::vector<const attr::LatentSet*> fit, test;
    for (std::size_t c = 0; c < latents.devices.size(); ++c) {
      data.classes.push_back(static_cast<int>(c));
      if (attributes[c].device_id != latents.devices[c] || attributes[c].values.size() != n) {
        throw std::runtime_error("attributes.csv does not match the latent archive");
      }
      std::copy(attributes[c].values.begin(), attributes[c].values.end(), data.attributes.row(c).begin());
      for (std::size_t s = 0; s < 2; ++s) {
        fit.push_back(&latents.sets[s][c]);
        data.fit_labels.insert(data.fit_labels.end(), latents.sets[s][c].count(), static_cast<int>(c));
      }
      test.push_back(&latents.sets[2][c]);
      data.test_labels.insert(data.test_labels.end(), latents.sets[2][c].count(), static_cast<int>(c));
    }
    std::tie(data.fit_l, data.fit_lambda) = stack(fit, m, n);
    std::tie(data.test_l, data.test_lambda) = stack(test, m, n);
    auto outcome = base::run_baseline(name, data, bc);
    outcome.zsl.seed = outcome.gzsl.seed = seed;
    const std::vector<clf::EvalReport> reports{outcome.zsl, outcome.gzsl};
    clf::write_reports_jsonl(dir / out, reports);
  });
  return clf::read_reports_jsonl(dir / out);
}

// ---------------------------------------------------------------- drivers

PipelineResult run_pipeline(const ExperimentConfig& cfg, Log log) {
  cfg.validate();
  const Workspace ws(cfg.output, std::move(log));
  fs::create_directories(ws.root());
  {
    std::ofstream(ws.root() / "config.txt", std::ios::trunc) << cfg.to_text();
  }
  stage_synth(cfg, ws);
  stage_ingest(cfg, ws);
  PipelineResult result;
  for (const std::uint64_t seed : cfg.seeds) {
    stage_train_sane(cfg, ws, seed);
    stage_extract_attrs(cfg, ws, seed);
    stage_train_cvae(cfg, ws, seed);
    stage_gen_pseudo(cfg, ws, seed);
    stage_train_clf(cfg, ws, seed);
    for (auto& r : stage_eval(cfg, ws, seed)) result.reports.push_back(std::move(r));
    for (const auto& name : cfg.baselines) {
      for (auto& r : stage_baseline(cfg, ws, seed, name)) result.reports.push_back(std::move(r));
    }
  }
  // Seed-major order above; regroup so each method's rows sit together.
  std::stable_sort(result.reports.begin(), result.reports.end(), [](const auto& a, const auto& b) {
    auto rank = [](const clf::EvalReport& r) {
      const auto names = base::baseline_names();
      const auto it = std::find(names.begin(), names.end(), r.method);
      return static_cast<int>(it == names.end() ? 0 : 1 + (it - names.begin())) * 2 + (r.setting == clf::Setting::kZsl ? 0 : 1);
    };
    return rank(a) < rank(b);
  });
  result.summary = clf::summarize(result.reports);
  clf::write_summary_csv(ws.root() / "report.csv", result.summary);
  clf::write_reports_csv(ws.root() / "runs.csv", result.reports);
  clf::write_reports_jsonl(ws.root() / "reports.jsonl", result.reports);
  std::ofstream(ws.root() / "report.txt", std::ios::trunc) << clf::format_table(result.summary);
  return result;
}

std::string sweep_key(const std::string& param) {
  static const std::map<std::string, std::string> aliases = {{"encoders", "sane.encoders"},
                                                             {"heads", "sane.heads"},
                                                             {"attr-dim", "sane.attr_dim"},
                                                             {"unseen", "partition.num_unseen"}};
  const auto it = aliases.find(param);
  if (it != aliases.end()) return it->second;
  const auto keys = ExperimentConfig{}.keys();
  if (std::find(keys.begin(), keys.end(), param) == keys.end()) {
    throw std::invalid_argument("unknown sweep parameter '" + param + "' (try encoders, heads, attr-dim, unseen)");
  }
  return param;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<std::string>& values,
                      Log log) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  const std::string key = sweep_key(param);
  const fs::path root = cfg.output / ("sweep-" + param);
  SweepResult out{param, values, {}};
  for (const auto& v : values) {
    ExperimentConfig sub = cfg;
    sub.set(key, v);
    sub.output = root / v;
    if (log) log("sweep " + param + " = " + v);
    out.runs.push_back(run_pipeline(sub, log));
  }
  fs::create_directories(root);
  std::ofstream csv(root / "sweep.csv", std::ios::trunc);
  csv << "param,value,method,setting,mean_accuracy,std_accuracy,runs\n";
  std::string table;
  char buf[192];
  for (std::size_t i = 0; i < values.size(); ++i) {
    table += param + " = " + values[i] + "\n" + clf::format_table(out.runs[i].summary) + "\n";
    for (const auto& row : out.runs[i].summary) {
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%.6f,%.6f,%zu\n", param.c_str(), values[i].c_str(), row.method.c_str(),
                    clf::to_string(row.setting).c_str(), row.mean, row.stddev, row.runs);
      csv << buf;
    }
  }
  std::ofstream(root / "sweep.txt", std::ios::trunc) << table;
  return out;
}

}  // namespace zest::pipeline
