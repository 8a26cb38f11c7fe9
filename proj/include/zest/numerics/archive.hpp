#pragma once

#include "zest/numerics/tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace zest::num {

inline constexpr int kArchiveFormatVersion = 1;

/// A named set of float32 tensors plus a free-form config echo.
///
/// On disk: `<stem>.json` holds the manifest (format version, config, and
/// name/shape/byte offset per tensor, SHA-256 of the payload) and
/// `<stem>.bin` holds the payload as little-endian IEEE-754 float32.
struct TensorArchive {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  void add(std::string name, Tensor<float> t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor<float>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  /// Payload bytes exactly as written to disk.
  std::vector<unsigned char> payload() const;
};

/// Writes `<stem>.json` and `<stem>.bin`; returns the payload checksum.
std::string save_archive(const std::filesystem::path& stem, const TensorArchive& archive);

/// Reads and validates (format version, sizes, checksum) an archive.
TensorArchive load_archive(const std::filesystem::path& stem);

std::filesystem::path manifest_path(const std::filesystem::path& stem);
std::filesystem::path payload_path(const std::filesystem::path& stem);

/// Hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace zest::num
