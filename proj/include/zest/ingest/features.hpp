#pragma once

#include "zest/ingest/packet.hpp"
#include "zest/numerics/tensor.hpp"

#include <cstdint>
#include <span>

namespace zest::ingest {

/// Column layout of a featurized packet row.
enum Feature : std::size_t {
  kSrcInternal = 0,
  kDstInternal = 1,
  kServicePort = 2,
  kTransport = 3,
  kAppProto = 4,
  kInterArrival = 5,
  kPacketSize = 6,
  kDirection = 7,
  kFeatureCount = 8,
};

/// Category codes for the service port.
enum class PortCategory : std::uint8_t {
  Dns = 1,
  Ntp = 2,
  Http = 3,
  Https = 4,
  Mqtt = 5,
  Mdns = 6,
  Dhcp = 7,
  WellKnown = 8,   // other ports 0-1023
  Registered = 9,  // other ports 1024-49151
  Dynamic = 10,    // ports >= 49152
};

enum class AppProto : std::uint8_t { Other = 0, Dns = 1, Ntp = 2, Http = 3, Https = 4, Mqtt = 5 };

/// The lower of the two ports; the higher one is treated as ephemeral.
constexpr std::uint16_t service_port(std::uint16_t src, std::uint16_t dst) noexcept {
  return src < dst ? src : dst;
}

PortCategory port_category(std::uint16_t port) noexcept;
AppProto app_protocol(std::uint16_t port) noexcept;

/// Raw (un-normalized) 8-column feature rows for one device's packets,
/// which must be sorted by timestamp. Inter-arrival of the first packet is 0.
num::Tensor<float> featurize(std::span<const PacketRecord> records);

}  // namespace zest::ingest
