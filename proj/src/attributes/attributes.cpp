#include "zest/attributes/attributes.hpp"

#include "zest/numerics/archive.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace zest::attr {

Tensor<float> Extractors::latent(const Tensor<float>& x) const {
  return model_->latent_from_pooled(model_->encode(x));
}

Tensor<float> Extractors::attribute(const Tensor<float>& x) const { return nl_lambda(latent(x)); }

std::pair<Tensor<float>, Tensor<float>> Extractors::features(const Tensor<float>& x) const {
  Tensor<float> l = latent(x);
  Tensor<float> lambda = nl_lambda(l);
  return {std::move(l), std::move(lambda)};
}

Extractors strip(std::shared_ptr<const sane::SaneModel> model) {
  if (!model) throw std::invalid_argument("strip: no model");
  if (model->trained_epochs == 0) throw std::invalid_argument("strip: model has not been trained");
  return Extractors(std::move(model));
}

LatentSet extract_latents(const Extractors& extractors, std::span<const ingest::DataPoint> points,
                          const std::string& device_id, const ExtractOptions& options) {
  if (points.empty()) throw std::invalid_argument("extract_latents: no data for device " + device_id);
  const std::size_t m = points.size();
  LatentSet set{device_id, Tensor<float>(m, extractors.latent_dim()), Tensor<float>(m, extractors.attr_dim())};
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto [l, lambda] = extractors.features(points[i].features);
      std::copy(l.values().begin(), l.values().end(), set.latents.row(i).begin());
      std::copy(lambda.values().begin(), lambda.values().end(), set.attributes.row(i).begin());
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, m);
  if (threads == 1) {
    work(0, m);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (m + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      if (begin < m) pool.emplace_back(work, begin, std::min(m, begin + chunk));
    }
  }
  return set;
}

std::map<std::string, AttributeVector> compute_attributes(std::span<const LatentSet> sets) {
  std::map<std::string, AttributeVector> out;
  for (const auto& set : sets) {
    if (set.count() == 0) throw std::invalid_argument("compute_attributes: device " + set.device_id + " has no latents");
    if (out.contains(set.device_id)) throw std::invalid_argument("compute_attributes: duplicate device " + set.device_id);
    const std::size_t n = set.attributes.cols();
    std::vector<double> sum(n, 0.0);
    for (std::size_t r = 0; r < set.count(); ++r) {
      for (std::size_t c = 0; c < n; ++c) sum[c] += set.attributes(r, c);
    }
    AttributeVector a{set.device_id, std::vector<float>(n)};
    for (std::size_t c = 0; c < n; ++c) a.values[c] = static_cast<float>(sum[c] / static_cast<double>(set.count()));
    out.emplace(set.device_id, std::move(a));
  }
  return out;
}

void write_attributes_csv(const std::filesystem::path& path, std::span<const AttributeVector> attributes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::size_t n = attributes.empty() ? 0 : attributes.front().values.size();
  out << "device_id";
  for (std::size_t c = 0; c < n; ++c) out << ",a_" << c;
  out << '\n';
  char buf[32];
  for (const auto& a : attributes) {
    if (a.values.size() != n) throw std::invalid_argument("write_attributes_csv: ragged attribute vectors");
    out << a.device_id;
    for (float v : a.values) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  }
}

std::vector<AttributeVector> read_attributes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("device_id", 0) != 0) throw std::runtime_error(path.string() + ": bad attribute header");
  std::vector<AttributeVector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    AttributeVector a;
    std::getline(ss, a.device_id, ',');
    std::string cell;
    while (std::getline(ss, cell, ',')) a.values.push_back(std::stof(cell));
    out.push_back(std::move(a));
  }
  return out;
}

std::string save_latents(const std::filesystem::path& stem, std::span<const LatentSet> sets) {
  num::TensorArchive archive;
  nlohmann::json devices = nlohmann::json::array();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    devices.push_back(sets[i].device_id);
    archive.add("L/" + std::to_string(i), sets[i].latents);
    archive.add("Lambda/" + std::to_string(i), sets[i].attributes);
  }
  archive.config = {{"kind", "latents"}, {"devices", devices}};
  return num::save_archive(stem, archive);
}

std::vector<LatentSet> load_latents(const std::filesystem::path& stem) {
  const num::TensorArchive archive = num::load_archive(stem);
  if (archive.config.value("kind", "") != "latents") throw std::runtime_error(stem.string() + " is not a latent archive");
  std::vector<LatentSet> out;
  const auto devices = archive.config.at("devices").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < devices.size(); ++i) {
    out.push_back({devices[i], archive.get("L/" + std::to_string(i)), archive.get("Lambda/" + std::to_string(i))});
  }
  return out;
}

}  // namespace zest::attr
