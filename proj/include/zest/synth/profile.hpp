#pragma once

#include "zest/ingest/dataset.hpp"
#include "zest/ingest/packet.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace zest::synth {

struct PortWeight {
  std::uint16_t port = 0;
  double probability = 0.0;
};

/// Generative parameters of one synthetic device. Packets are i.i.d. given
/// the profile; timestamps form a renewal process with log-normal gaps.
struct DeviceProfile {
  std::string device_id;
  std::array<double, 3> proto{1.0, 0.0, 0.0};  // P(tcp), P(udp), P(other)
  std::vector<PortWeight> service_ports;       // each port < 49152
  double outbound = 0.5;                       // P(direction = out)
  double local_peer = 0.1;                     // P(remote endpoint is internal)
  double size_mu = 5.0, size_sigma = 0.5;      // log-normal packet size (bytes)
  double iat_mu = -2.0, iat_sigma = 1.0;       // log-normal inter-arrival (seconds)
  std::size_t sessions = 100;
  std::size_t packets_per_session = 200;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// Named preset: `separable-12` or `hard-12`.
std::vector<DeviceProfile> preset(const std::string& name);
std::vector<std::string> preset_names();

/// Key-value profile file:
///
///   [device cam-01]
///   proto = tcp:0.7 udp:0.3 other:0
///   ports = 443:0.6 53:0.2 123:0.2
///   outbound = 0.55
///   local_peer = 0.1
///   size_lognormal = 5.2 0.6
///   iat_lognormal = -2.0 1.0
///   sessions = 100
///   packets_per_session = 200
///
/// Blank lines and lines starting with '#' are ignored.
std::vector<DeviceProfile> load_profiles(const std::filesystem::path& path);
void save_profiles(const std::filesystem::path& path, std::span<const DeviceProfile> profiles);
std::string format_profiles(std::span<const DeviceProfile> profiles);
std::vector<DeviceProfile> parse_profiles(const std::string& text);

/// Packet records for all profiles, device by device, deterministic per seed.
std::vector<ingest::PacketRecord> generate(std::span<const DeviceProfile> profiles, std::uint64_t seed);

/// Per-packet log-likelihood of a raw featurized row under a profile.
double row_log_likelihood(const DeviceProfile& profile, std::span<const float> row);

/// Maximum-likelihood class of a raw (un-normalized) sequence; returns the
/// index into `profiles`.
std::size_t bayes_classify(std::span<const DeviceProfile> profiles, const num::Tensor<float>& raw_sequence);

/// Accuracy of maximum-likelihood classification over raw labeled points.
/// `devices[label]` names the profile generating class `label`.
double bayes_oracle(std::span<const DeviceProfile> profiles, std::span<const ingest::DataPoint> raw_points,
                    std::span<const std::string> devices);

}  // namespace zest::synth
