// zest: command line driver for the staged zero-shot fingerprinting pipeline.
//
// Exit codes: 0 ok, 1 bad usage or config, 2 stage failure, 3 output dir locked.

#include "zest/pipeline/config.hpp"
#include "zest/pipeline/stages.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace pl = zest::pipeline;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string preset, csv, profiles, out;
  std::vector<std::string> seeds;
  long unseen = -1;
  long threads = -1;
  bool quiet = false;
  bool wait = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", c.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--preset", c.preset, "synthetic preset (separable-12, hard-12)");
  cmd->add_option("--csv", c.csv, "packet CSV instead of a synthetic preset");
  cmd->add_option("--profiles", c.profiles, "device profile file instead of a preset");
  cmd->add_option("--seeds", c.seeds, "partition seeds: a count N (seeds 1..N) or an explicit list");
  cmd->add_option("--unseen", c.unseen, "number of unseen devices");
  cmd->add_option("-o,--out", c.out, "output directory");
  cmd->add_option("-j,--threads", c.threads, "latent extraction threads");
  cmd->add_flag("-q,--quiet", c.quiet, "only print reports");
  cmd->add_flag("--wait", c.wait, "wait for a locked output directory instead of failing");
}

pl::ExperimentConfig build_config(const Common& c) {
  pl::ExperimentConfig cfg = c.config.empty() ? pl::ExperimentConfig{} : pl::load_config(c.config);
  if (!c.preset.empty()) cfg.set("source.preset", c.preset);
  if (!c.profiles.empty()) cfg.set("source.profiles", c.profiles);
  if (!c.csv.empty()) cfg.set("source.csv", c.csv);
  if (c.seeds.size() == 1) {
    // A lone value is a count.
    const auto n = std::stoull(c.seeds[0]);
    if (n == 0) throw std::invalid_argument("--seeds must be >= 1");
    cfg.seeds.clear();
    for (std::uint64_t s = 1; s <= n; ++s) cfg.seeds.push_back(s);
  } else if (!c.seeds.empty()) {
    std::string joined;
    for (const auto& s : c.seeds) joined += s + " ";
    cfg.set("partition.seeds", joined);
  }
  if (c.unseen >= 0) cfg.set("partition.num_unseen", std::to_string(c.unseen));
  if (!c.out.empty()) cfg.set("output", c.out);
  if (c.threads >= 0) cfg.set("threads", std::to_string(c.threads));
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

pl::Log logger(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
}

void print_reports(const std::vector<zest::clf::EvalReport>& reports) {
  std::cout << zest::clf::format_table(zest::clf::summarize(reports));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zest: zero-shot IoT device fingerprinting"};
  app.require_subcommand(1);
  Common common;

  struct Command {
    CLI::App* app;
    std::function<void(const pl::ExperimentConfig&, const pl::Workspace&)> run;
  };
  std::vector<Command> commands;
  auto per_seed = [&](const char* name, const char* help, bool (*fn)(const pl::ExperimentConfig&, const pl::Workspace&, std::uint64_t)) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    commands.push_back({cmd, [fn](const pl::ExperimentConfig& cfg, const pl::Workspace& ws) {
                          for (const auto s : cfg.seeds) fn(cfg, ws, s);
                        }});
  };

  auto* synth = app.add_subcommand("synth", "generate synthetic packet traffic");
  add_common(synth, common);
  commands.push_back({synth, [](const auto& cfg, const auto& ws) { pl::stage_synth(cfg, ws); }});
  auto* ingest = app.add_subcommand("ingest", "parse packets into sequence windows");
  add_common(ingest, common);
  commands.push_back({ingest, [](const auto& cfg, const auto& ws) { pl::stage_ingest(cfg, ws); }});
  per_seed("train-sane", "train the feature extractor on seen devices", pl::stage_train_sane);
  per_seed("extract-attrs", "extract latents and device attributes", pl::stage_extract_attrs);
  per_seed("train-cvae", "train the conditional generator", pl::stage_train_cvae);
  per_seed("gen-pseudo", "generate balanced pseudo latents", pl::stage_gen_pseudo);
  per_seed("train-clf", "train the ZSL and GZSL classifiers", pl::stage_train_clf);

  auto* eval = app.add_subcommand("eval", "evaluate on real test latents");
  add_common(eval, common);
  commands.push_back({eval, [](const auto& cfg, const auto& ws) {
                        std::vector<zest::clf::EvalReport> all;
                        for (const auto s : cfg.seeds) {
                          for (auto& r : pl::stage_eval(cfg, ws, s)) all.push_back(std::move(r));
                        }
                        print_reports(all);
                      }});

  std::string baseline_name;
  auto* baseline = app.add_subcommand("baseline", "run a clustering baseline (vae-k, seqcr, seqcs, deft)");
  baseline->add_option("name", baseline_name, "baseline name")->required();
  add_common(baseline, common);
  commands.push_back({baseline, [&](const auto& cfg, const auto& ws) {
                        std::vector<zest::clf::EvalReport> all;
                        for (const auto s : cfg.seeds) {
                          for (auto& r : pl::stage_baseline(cfg, ws, s, baseline_name)) all.push_back(std::move(r));
                        }
                        print_reports(all);
                      }});

  auto* pipeline = app.add_subcommand("pipeline", "run every stage for every seed, plus baselines");
  add_common(pipeline, common);
  commands.push_back({pipeline, [&](const auto& cfg, const auto&) {
                        const auto result = pl::run_pipeline(cfg, logger(common));
                        std::cout << zest::clf::format_table(result.summary);
                      }});

  std::string sweep_param;
  std::vector<std::string> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "run the pipeline once per parameter value");
  sweep->add_option("param", sweep_param, "encoders, heads, attr-dim, unseen, or a config key")->required();
  sweep->add_option("values", sweep_values, "values to try")->required();
  add_common(sweep, common);
  commands.push_back({sweep, [&](const auto& cfg, const auto&) {
                        const auto result = pl::run_sweep(cfg, sweep_param, sweep_values, logger(common));
                        for (std::size_t i = 0; i < result.values.size(); ++i) {
                          std::cout << sweep_param << " = " << result.values[i] << "\n"
                                    << zest::clf::format_table(result.runs[i].summary) << "\n";
                        }
                      }});

  auto* report = app.add_subcommand("report", "summarize reports.jsonl of a finished run");
  add_common(report, common);
  commands.push_back({report, [](const auto& cfg, const auto&) {
                        const auto file = cfg.output / "reports.jsonl";
                        if (!std::filesystem::exists(file)) throw pl::StageError("pipeline", "no " + file.string());
                        print_reports(zest::clf::read_reports_jsonl(file));
                      }});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  for (const auto& c : commands) {
    if (!c.app->parsed()) continue;
    pl::ExperimentConfig cfg;
    try {
      cfg = build_config(common);
      if (c.app == sweep) pl::sweep_key(sweep_param);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "zest: %s\n", e.what());
      return 1;
    }
    try {
      const pl::DirLock lock(cfg.output, common.wait ? 1e9 : 0.0);
      const pl::Workspace ws(cfg.output, logger(common));
      c.run(cfg, ws);
    } catch (const pl::LockError& e) {
      std::fprintf(stderr, "zest: %s\n", e.what());
      return 3;
    } catch (const pl::StageError& e) {
      std::fprintf(stderr, "zest: %s\nfailed stage: %s\n", e.what(), e.stage().c_str());
      return 2;
    } catch (const std::invalid_argument& e) {
      std::fprintf(stderr, "zest: %s\n", e.what());
      return 1;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "zest: %s\n", e.what());
      return 2;
    }
  }
  return 0;
}
