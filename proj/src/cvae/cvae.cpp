#include "zest/cvae/cvae.hpp"

#include "zest/numerics/adam.hpp"
#include "zest/numerics/archive.hpp"
#include "zest/numerics/ops.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace zest::cvae {

std::string to_string(ReconLoss loss) { return loss == ReconLoss::kL1 ? "l1" : "l2"; }

ReconLoss recon_loss_from_string(const std::string& name) {
  if (name == "l1") return ReconLoss::kL1;
  if (name == "l2") return ReconLoss::kL2;
  throw std::invalid_argument("recon_loss must be l1 or l2, got '" + name + "'");
}

void CvaeConfig::validate() const {
  if (input_dim == 0 || z_dim == 0 || hidden == 0) throw std::invalid_argument("cvae: dimensions must be positive");
  if (batch_size == 0) throw std::invalid_argument("cvae: batch_size must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("cvae: learning_rate must be positive");
}

nlohmann::json CvaeConfig::to_json() const {
  return {{"input_dim", input_dim},   {"cond_dim", cond_dim},
          {"z_dim", z_dim},           {"hidden", hidden},
          {"epochs", epochs},         {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"seed", seed},
          {"recon_loss", to_string(recon)}};
}

CvaeConfig CvaeConfig::from_json(const nlohmann::json& j) {
  CvaeConfig c;
  c.input_dim = j.at("input_dim");
  c.cond_dim = j.at("cond_dim");
  c.z_dim = j.at("z_dim");
  c.hidden = j.at("hidden");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.seed = j.at("seed");
  c.recon = recon_loss_from_string(j.at("recon_loss"));
  return c;
}

// ---------------------------------------------------------------- model

template <typename T>
BasicCvae<T>::BasicCvae(CvaeConfig config)
    : config_(config),
      enc_w_("enc.w", config.input_dim + config.cond_dim, config.hidden),
      enc_b_("enc.b", 1, config.hidden),
      mu_w_("mu.w", config.hidden, config.z_dim),
      mu_b_("mu.b", 1, config.z_dim),
      logvar_w_("logvar.w", config.hidden, config.z_dim),
      logvar_b_("logvar.b", 1, config.z_dim),
      dec_w_("dec.w", config.z_dim + config.cond_dim, config.hidden),
      dec_b_("dec.b", 1, config.hidden),
      out_w_("out.w", config.hidden, config.input_dim),
      out_b_("out.b", 1, config.input_dim) {
  config_.validate();
}

template <typename T>
void BasicCvae<T>::initialize(num::Rng& rng) {
  for (auto* p : parameters()) {
    if (p->value.rows() == 1) {
      p->value.zero();
    } else {
      num::xavier_uniform(p->value, rng);
    }
  }
}

template <typename T>
std::vector<Parameter<T>*> BasicCvae<T>::parameters() {
  return {&enc_w_, &enc_b_, &mu_w_, &mu_b_, &logvar_w_, &logvar_b_, &dec_w_, &dec_b_, &out_w_, &out_b_};
}

template <typename T>
std::vector<const Parameter<T>*> BasicCvae<T>::parameters() const {
  return {&enc_w_, &enc_b_, &mu_w_, &mu_b_, &logvar_w_, &logvar_b_, &dec_w_, &dec_b_, &out_w_, &out_b_};
}

template <typename T>
std::vector<const Parameter<T>*> BasicCvae<T>::decoder_parameters() const {
  return {&dec_w_, &dec_b_, &out_w_, &out_b_};
}

namespace {

template <typename T>
Tensor<T> with_condition(const Tensor<T>& x, const Tensor<T>& a, std::size_t cond_dim) {
  if (a.cols() != cond_dim) throw num::ShapeError("cvae: condition width mismatch");
  if (a.rows() != x.rows()) throw num::ShapeError("cvae: condition rows do not match the batch");
  return cond_dim == 0 ? x : num::concat_cols(x, a);
}

}  // namespace

template <typename T>
void BasicCvae<T>::encoder_forward(const Tensor<T>& b, const Tensor<T>& a, Tensor<T>& in, Tensor<T>& pre,
                                   Tensor<T>& mu, Tensor<T>& logvar) const {
  if (b.cols() != config_.input_dim) throw num::ShapeError("cvae: input width mismatch");
  in = with_condition(b, a, config_.cond_dim);
  pre = num::linear(in, enc_w_.value, enc_b_.value);
  const Tensor<T> h = num::gelu(pre);
  mu = num::linear(h, mu_w_.value, mu_b_.value);
  logvar = num::linear(h, logvar_w_.value, logvar_b_.value);
}

template <typename T>
Tensor<T> BasicCvae<T>::encode_mean(const Tensor<T>& b, const Tensor<T>& a) const {
  Tensor<T> in, pre, mu, logvar;
  encoder_forward(b, a, in, pre, mu, logvar);
  return mu;
}

template <typename T>
Tensor<T> BasicCvae<T>::decode(const Tensor<T>& z, const Tensor<T>& a) const {
  if (z.cols() != config_.z_dim) throw num::ShapeError("cvae: noise width mismatch");
  const Tensor<T> h = num::gelu(num::linear(with_condition(z, a, config_.cond_dim), dec_w_.value, dec_b_.value));
  return num::linear(h, out_w_.value, out_b_.value);
}

template <typename T>
LossParts BasicCvae<T>::loss(const Tensor<T>& b, const Tensor<T>& a, const Tensor<T>& eps, bool with_grad) {
  if (eps.rows() != b.rows() || eps.cols() != config_.z_dim) throw num::ShapeError("cvae: noise shape mismatch");
  Tensor<T> in, pre, mu, logvar;
  encoder_forward(b, a, in, pre, mu, logvar);
  const Tensor<T> h = num::gelu(pre);

  Tensor<T> sigma(mu.rows(), mu.cols());
  Tensor<T> z(mu.rows(), mu.cols());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    sigma[i] = std::exp(T(0.5) * logvar[i]);
    z[i] = mu[i] + sigma[i] * eps[i];
  }
  num::check_finite("cvae.reparameterize", z);

  const Tensor<T> dec_in = with_condition(z, a, config_.cond_dim);
  const Tensor<T> dec_pre = num::linear(dec_in, dec_w_.value, dec_b_.value);
  const Tensor<T> dec_h = num::gelu(dec_pre);
  const Tensor<T> out = num::linear(dec_h, out_w_.value, out_b_.value);

  Tensor<T> dout;
  LossParts parts;
  parts.recon = static_cast<double>(config_.recon == ReconLoss::kL1 ? num::l1_loss(out, b, with_grad ? &dout : nullptr)
                                                                    : num::l2_loss(out, b, with_grad ? &dout : nullptr));
  parts.kl = kl_divergence(mu, logvar);
  parts.total = parts.recon + parts.kl;
  if (!std::isfinite(parts.total)) throw num::NumericError("cvae_loss: non-finite loss");
  if (!with_grad) return parts;

  const T inv_batch = T(1) / static_cast<T>(b.rows());
  const Tensor<T> ddec_h = num::linear_backward(dec_h, out_w_.value, dout, out_w_.grad, out_b_.grad);
  const Tensor<T> ddec_pre = num::gelu_backward(dec_pre, ddec_h);
  const Tensor<T> ddec_in = num::linear_backward(dec_in, dec_w_.value, ddec_pre, dec_w_.grad, dec_b_.grad);
  Tensor<T> dmu = num::slice_cols(ddec_in, 0, config_.z_dim);
  Tensor<T> dlogvar(mu.rows(), mu.cols());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const T dz = dmu[i];
    dmu[i] = dz + mu[i] * inv_batch;
    dlogvar[i] = dz * eps[i] * T(0.5) * sigma[i] + T(0.5) * (sigma[i] * sigma[i] - T(1)) * inv_batch;
  }
  Tensor<T> dh = num::linear_backward(h, mu_w_.value, dmu, mu_w_.grad, mu_b_.grad);
  num::add_inplace(dh, num::linear_backward(h, logvar_w_.value, dlogvar, logvar_w_.grad, logvar_b_.grad));
  num::linear_backward(in, enc_w_.value, num::gelu_backward(pre, dh), enc_w_.grad, enc_b_.grad);
  return parts;
}

template class BasicCvae<float>;
template class BasicCvae<double>;

// ---------------------------------------------------------------- training

namespace {

Tensor<float> noise(std::size_t rows, std::size_t cols, num::Rng& rng) {
  Tensor<float> eps(rows, cols);
  for (float& v : eps.values()) v = static_cast<float>(rng.normal());
  return eps;
}

Tensor<float> gather_rows(const Tensor<float>& src, std::span<const std::size_t> idx) {
  Tensor<float> out(idx.size(), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(src.row(idx[i]).begin(), src.row(idx[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

LossParts cvae_loss(Cvae& model, const Tensor<float>& b, const Tensor<float>& a, num::Rng& rng, bool with_grad) {
  return model.loss(b, a, noise(b.rows(), model.config().z_dim, rng), with_grad);
}

CvaeTrainResult train_cvae_rows(const Tensor<float>& rows, const Tensor<float>& conditions, const CvaeConfig& config) {
  config.validate();
  if (rows.rows() == 0) throw std::invalid_argument("train_cvae: no training rows");
  if (rows.cols() != config.input_dim) throw num::ShapeError("train_cvae: input width mismatch");
  if (conditions.rows() != rows.rows() || conditions.cols() != config.cond_dim) {
    throw num::ShapeError("train_cvae: condition matrix shape mismatch");
  }
  Cvae model(config);
  num::Rng init_rng = num::Rng::derive(config.seed, 0x696e6974ULL);
  model.initialize(init_rng);
  const auto params = model.parameters();
  num::OptimizerState<float> opt;
  opt.options.learning_rate = config.learning_rate;

  std::vector<std::size_t> order(rows.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CvaeTrainResult result{model, {}};

  // Entry 0 is the untrained model, evaluated with the same batching.
  for (std::size_t epoch = 0; epoch <= config.epochs; ++epoch) {
    num::Rng rng = num::Rng::derive(config.seed, 0x6376616500ULL + epoch);
    if (epoch > 0) rng.shuffle(std::span<std::size_t>(order));
    LossParts sum;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor<float> b = gather_rows(rows, idx);
      const Tensor<float> a = gather_rows(conditions, idx);
      if (epoch > 0) num::zero_grads(params);
      const LossParts parts = cvae_loss(model, b, a, rng, epoch > 0);
      if (epoch > 0) {
        num::adam_step(params, opt);
        result.min_batch_kl = result.batches++ == 0 ? parts.kl : std::min(result.min_batch_kl, parts.kl);
      }
      const double w = static_cast<double>(idx.size());
      sum.total += parts.total * w;
      sum.recon += parts.recon * w;
      sum.kl += parts.kl * w;
    }
    const double n = static_cast<double>(order.size());
    result.epoch_losses.push_back({sum.total / n, sum.recon / n, sum.kl / n});
  }
  result.model = model;
  return result;
}

CvaeTrainResult train_cvae(std::span<const attr::LatentSet> seen,
                           const std::map<std::string, attr::AttributeVector>& attributes, const CvaeConfig& config) {
  std::size_t total = 0;
  for (const auto& set : seen) {
    if (!attributes.contains(set.device_id)) {
      throw std::invalid_argument("train_cvae: no attribute vector for seen device " + set.device_id);
    }
    if (set.latents.cols() != config.input_dim) throw num::ShapeError("train_cvae: latent width mismatch");
    total += set.count();
  }
  Tensor<float> rows(total, config.input_dim);
  Tensor<float> conds(total, config.cond_dim);
  std::size_t r = 0;
  for (const auto& set : seen) {
    const auto& a = attributes.at(set.device_id).values;
    if (a.size() != config.cond_dim) throw num::ShapeError("train_cvae: attribute width mismatch");
    for (std::size_t i = 0; i < set.count(); ++i, ++r) {
      std::copy(set.latents.row(i).begin(), set.latents.row(i).end(), rows.row(r).begin());
      std::copy(a.begin(), a.end(), conds.row(r).begin());
    }
  }
  return train_cvae_rows(rows, conds, config);
}

PseudoDataset generate_pseudo(const Cvae& decoder, std::span<const attr::AttributeVector> class_attributes,
                              std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw std::invalid_argument("generate_pseudo: k must be >= 1");
  const auto& cfg = decoder.config();
  PseudoDataset out;
  out.per_class = per_class;
  out.seed = seed;
  out.samples = Tensor<float>(class_attributes.size() * per_class, cfg.input_dim);
  for (std::size_t c = 0; c < class_attributes.size(); ++c) {
    const auto& attr = class_attributes[c];
    if (attr.values.size() != cfg.cond_dim) {
      throw num::ShapeError("generate_pseudo: attribute of " + attr.device_id + " has the wrong width");
    }
    num::Rng rng = num::Rng::derive(seed, 0x7073657564ULL + c);
    Tensor<float> cond(per_class, cfg.cond_dim);
    for (std::size_t i = 0; i < per_class; ++i) std::copy(attr.values.begin(), attr.values.end(), cond.row(i).begin());
    const Tensor<float> decoded = decoder.decode(noise(per_class, cfg.z_dim, rng), cond);
    std::copy(decoded.values().begin(), decoded.values().end(), out.samples.row(c * per_class).begin());
    out.labels.insert(out.labels.end(), per_class, static_cast<int>(c));
    out.classes.push_back(attr.device_id);
  }
  return out;
}

// ---------------------------------------------------------------- serialization

std::string save_cvae(const std::filesystem::path& stem, const Cvae& model) {
  num::TensorArchive archive;
  archive.config = {{"kind", "cvae"}, {"cvae", model.config().to_json()}};
  for (const auto* p : model.parameters()) archive.add(p->name, p->value);
  return num::save_archive(stem, archive);
}

Cvae load_cvae(const std::filesystem::path& stem) {
  const num::TensorArchive archive = num::load_archive(stem);
  if (archive.config.value("kind", "") != "cvae") throw std::runtime_error(stem.string() + " is not a CVAE checkpoint");
  Cvae model(CvaeConfig::from_json(archive.config.at("cvae")));
  for (auto* p : model.parameters()) {
    const auto& t = archive.get(p->name);
    if (!(t.shape() == p->value.shape())) throw std::runtime_error("checkpoint tensor " + p->name + " has the wrong shape");
    p->value = t;
  }
  return model;
}

std::string decoder_checksum(const Cvae& model) {
  num::TensorArchive archive;
  for (const auto* p : model.decoder_parameters()) archive.add(p->name, p->value);
  const auto bytes = archive.payload();
  return num::sha256_hex(bytes);
}

void write_pseudo_csv(const std::filesystem::path& path, const PseudoDataset& pseudo,
                      const std::string& decoder_sha256) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "label";
  for (std::size_t c = 0; c < pseudo.samples.cols(); ++c) out << ",l_" << c;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < pseudo.samples.rows(); ++r) {
    out << pseudo.labels[r];
    for (float v : pseudo.samples.row(r)) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  }
  out.close();
  const nlohmann::json manifest = {{"k", pseudo.per_class},
                                   {"seed", pseudo.seed},
                                   {"decoder_sha256", decoder_sha256},
                                   {"classes", pseudo.classes},
                                   {"csv_sha256", num::sha256_file(path)}};
  std::ofstream(path.string() + ".manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

PseudoDataset read_pseudo_csv(const std::filesystem::path& path) {
  std::ifstream mf(path.string() + ".manifest.json");
  if (!mf) throw std::runtime_error("missing manifest for " + path.string());
  const nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.at("csv_sha256") != num::sha256_file(path)) {
    throw std::runtime_error(path.string() + " does not match its manifest checksum");
  }
  PseudoDataset out;
  out.per_class = manifest.at("k");
  out.seed = manifest.at("seed");
  out.classes = manifest.at("classes").get<std::vector<std::string>>();
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<float> flat;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    out.labels.push_back(std::stoi(cell));
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      flat.push_back(std::stof(cell));
      ++n;
    }
    if (cols != 0 && n != cols) throw std::runtime_error(path.string() + ": ragged pseudo rows");
    cols = n;
  }
  out.samples = Tensor<float>::from_data({out.labels.size(), cols}, std::move(flat));
  return out;
}

}  // namespace zest::cvae
