#include "zest/numerics/archive.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace zest::num {
namespace {

void append_le(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu));
}

float read_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".json");
}

std::filesystem::path payload_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".bin");
}

const Tensor<float>& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw std::out_of_range("archive has no tensor named " + name);
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

std::vector<unsigned char> TensorArchive::payload() const {
  std::vector<unsigned char> bytes;
  for (const auto& [name, t] : tensors) {
    for (float v : t.values()) append_le(bytes, v);
  }
  return bytes;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return sha256_hex(bytes);
}

std::string save_archive(const std::filesystem::path& stem, const TensorArchive& archive) {
  const auto bytes = archive.payload();
  const std::string checksum = sha256_hex(bytes);

  nlohmann::json manifest;
  manifest["format"] = "zest-tensors";
  manifest["version"] = kArchiveFormatVersion;
  manifest["config"] = archive.config;
  manifest["payload"] = payload_path(stem).filename().string();
  manifest["payload_bytes"] = bytes.size();
  manifest["sha256"] = checksum;
  auto& list = manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += 4 * t.size();
  }

  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream out(payload_path(stem), std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + payload_path(stem).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream out(manifest_path(stem), std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + manifest_path(stem).string());
  out << manifest.dump(2) << '\n';
  return checksum;
}

TensorArchive load_archive(const std::filesystem::path& stem) {
  std::ifstream in(manifest_path(stem));
  if (!in) throw std::runtime_error("missing archive manifest " + manifest_path(stem).string());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "zest-tensors" || manifest.value("version", 0) != kArchiveFormatVersion) {
    throw std::runtime_error("unsupported archive format in " + manifest_path(stem).string());
  }
  const auto bytes = read_bytes(stem.parent_path() / manifest.at("payload").get<std::string>());
  if (bytes.size() != manifest.at("payload_bytes").get<std::size_t>()) {
    throw std::runtime_error("archive payload size mismatch for " + stem.string());
  }
  if (sha256_hex(bytes) != manifest.at("sha256").get<std::string>()) {
    throw std::runtime_error("archive payload checksum mismatch for " + stem.string());
  }
  TensorArchive archive;
  archive.config = manifest.at("config");
  for (const auto& entry : manifest.at("tensors")) {
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    Tensor<float> t(shape);
    if (offset + 4 * t.size() > bytes.size()) throw std::runtime_error("archive tensor out of bounds");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_le(bytes.data() + offset + 4 * i);
    archive.add(entry.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

}  // namespace zest::num
