#include "zest/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace zest::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) {
    std::stringstream parts(w);
    for (std::string p; std::getline(parts, p, ',');) {
      if (!p.empty()) out.push_back(p);
    }
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto v = trim(value);
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const auto v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream o;
  for (std::size_t i = 0; i < v.size(); ++i) o << (i ? " " : "") << v[i];
  return o.str();
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define ZEST_SIZE(name, member)                                                                       \
  {name,                                                                                              \
   {[](ExperimentConfig& c, const std::string& k, const std::string& v) {                             \
      c.member = parse_number<std::size_t>(k, v);                                                     \
    },                                                                                                \
    [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define ZEST_U64(name, member)                                                                        \
  {name,                                                                                              \
   {[](ExperimentConfig& c, const std::string& k, const std::string& v) {                             \
      c.member = parse_number<std::uint64_t>(k, v);                                                   \
    },                                                                                                \
    [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define ZEST_REAL(name, member)                                                                       \
  {name,                                                                                              \
   {[](ExperimentConfig& c, const std::string& k, const std::string& v) {                             \
      c.member = parse_number<double>(k, v);                                                          \
    },                                                                                                \
    [](const ExperimentConfig& c) { return fmt(c.member); }}}
#define ZEST_TEXT(name, member)                                                                       \
  {name,                                                                                              \
   {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.member = trim(v); },       \
    [](const ExperimentConfig& c) { return std::string(c.member); }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      ZEST_TEXT("source.csv", csv),
      ZEST_TEXT("source.profiles", profiles),
      ZEST_TEXT("source.preset", preset),
      ZEST_U64("source.synth_seed", synth_seed),
      ZEST_SIZE("sane.seq_len", sane.seq_len),
      ZEST_SIZE("sane.d_model", sane.d_model),
      ZEST_SIZE("sane.encoders", sane.encoders),
      ZEST_SIZE("sane.heads", sane.heads),
      ZEST_SIZE("sane.d_mlp", sane.d_mlp),
      ZEST_SIZE("sane.latent_dim", sane.latent_dim),
      ZEST_SIZE("sane.attr_dim", sane.attr_dim),
      ZEST_SIZE("sane.batch_size", sane.batch_size),
      ZEST_SIZE("sane.epochs", sane.epochs),
      ZEST_REAL("sane.learning_rate", sane.learning_rate),
      ZEST_U64("sane.seed", sane.seed),
      {"sane.standard_residual",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.sane.standard_residual = parse_bool(k, v);
        },
        [](const ExperimentConfig& c) { return std::string(c.sane.standard_residual ? "true" : "false"); }}},
      ZEST_SIZE("cvae.z_dim", cvae.z_dim),
      ZEST_SIZE("cvae.hidden", cvae.hidden),
      ZEST_SIZE("cvae.epochs", cvae.epochs),
      ZEST_SIZE("cvae.batch_size", cvae.batch_size),
      ZEST_REAL("cvae.learning_rate", cvae.learning_rate),
      ZEST_U64("cvae.seed", cvae.seed),
      {"cvae.recon_loss",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.cvae.recon = cvae::recon_loss_from_string(trim(v));
        },
        [](const ExperimentConfig& c) { return cvae::to_string(c.cvae.recon); }}},
      ZEST_SIZE("pseudo.per_class", pseudo_per_class),
      ZEST_REAL("svm.c", svm.c),
      ZEST_SIZE("svm.epochs", svm.epochs),
      ZEST_REAL("svm.learning_rate", svm.learning_rate),
      ZEST_U64("svm.seed", svm.seed),
      ZEST_SIZE("baseline.kmeans_max_iter", baseline.kmeans_max_iter),
      ZEST_SIZE("baseline.kmeans_restarts", baseline.kmeans_restarts),
      ZEST_SIZE("baseline.forest_trees", baseline.forest.trees),
      ZEST_SIZE("baseline.forest_depth", baseline.forest.max_depth),
      ZEST_SIZE("baseline.vae_epochs", baseline.vae.epochs),
      ZEST_U64("baseline.seed", baseline.seed),
      {"baseline.methods",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.baselines = words(v); },
        [](const ExperimentConfig& c) { return join(c.baselines); }}},
      ZEST_SIZE("partition.num_unseen", num_unseen),
      {"partition.seeds",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.seeds.clear();
          for (const auto& w : words(v)) c.seeds.push_back(parse_number<std::uint64_t>(k, w));
        },
        [](const ExperimentConfig& c) { return join(c.seeds); }}},
      {"output",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.output = trim(v); },
        [](const ExperimentConfig& c) { return c.output.string(); }}},
      ZEST_SIZE("threads", threads),
  };
  return table;
}

#undef ZEST_SIZE
#undef ZEST_U64
#undef ZEST_REAL
#undef ZEST_TEXT

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(trim(key));
  if (it == fields().end()) throw std::invalid_argument("unknown config key '" + trim(key) + "'");
  it->second.set(*this, it->first, value);
}

std::vector<std::string> ExperimentConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, f] : fields()) j[k] = f.get(*this);
  return j;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("partition.seeds must not be empty");
  if (csv.empty() && profiles.empty() && preset.empty()) throw std::invalid_argument("no data source configured");
  if (!csv.empty() && !std::filesystem::exists(csv)) throw std::invalid_argument("source.csv not found: " + csv);
  if (!profiles.empty() && !std::filesystem::exists(profiles)) {
    throw std::invalid_argument("source.profiles not found: " + profiles);
  }
  if (pseudo_per_class == 0) throw std::invalid_argument("pseudo.per_class must be >= 1");
  if (num_unseen == 0) throw std::invalid_argument("partition.num_unseen must be >= 1");
  for (const auto& b : baselines) {
    const auto names = base::baseline_names();
    if (std::find(names.begin(), names.end(), b) == names.end()) throw std::invalid_argument("unknown baseline '" + b + "'");
  }
  if (sane.d_model % sane.heads != 0) throw std::invalid_argument("sane.d_model must be divisible by sane.heads");
  if (!(sane.attr_dim < sane.latent_dim)) throw std::invalid_argument("sane.attr_dim must be < sane.latent_dim");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace zest::pipeline
