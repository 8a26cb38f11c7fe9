#include "zest/ingest/features.hpp"

namespace zest::ingest {

PortCategory port_category(std::uint16_t port) noexcept {
  switch (port) {
    case 53: return PortCategory::Dns;
    case 123: return PortCategory::Ntp;
    case 80: return PortCategory::Http;
    case 443: return PortCategory::Https;
    case 1883: return PortCategory::Mqtt;
    case 5353: return PortCategory::Mdns;
    case 67:
    case 68: return PortCategory::Dhcp;
    default: break;
  }
  if (port <= 1023) return PortCategory::WellKnown;
  if (port <= 49151) return PortCategory::Registered;
  return PortCategory::Dynamic;
}

AppProto app_protocol(std::uint16_t port) noexcept {
  switch (port_category(port)) {
    case PortCategory::Dns:
    case PortCategory::Mdns: return AppProto::Dns;
    case PortCategory::Ntp: return AppProto::Ntp;
    case PortCategory::Http: return AppProto::Http;
    case PortCategory::Https: return AppProto::Https;
    case PortCategory::Mqtt: return AppProto::Mqtt;
    default: return AppProto::Other;
  }
}

num::Tensor<float> featurize(std::span<const PacketRecord> records) {
  num::Tensor<float> rows(records.size(), kFeatureCount);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const PacketRecord& r = records[i];
    if (i > 0 && r.timestamp < records[i - 1].timestamp) {
      throw IngestError("featurize: records of device '" + r.device_id + "' are not sorted by timestamp (row " +
                        std::to_string(i) + ")");
    }
    const std::uint16_t port = service_port(r.src_port, r.dst_port);
    auto row = rows.row(i);
    row[kSrcInternal] = r.src_internal ? 1.0f : 0.0f;
    row[kDstInternal] = r.dst_internal ? 1.0f : 0.0f;
    row[kServicePort] = static_cast<float>(port_category(port));
    row[kTransport] = static_cast<float>(r.proto);
    row[kAppProto] = static_cast<float>(app_protocol(port));
    row[kInterArrival] = i == 0 ? 0.0f : static_cast<float>(r.timestamp - records[i - 1].timestamp);
    row[kPacketSize] = static_cast<float>(r.size);
    row[kDirection] = r.direction == Direction::Outbound ? 1.0f : 0.0f;
  }
  return rows;
}

}  // namespace zest::ingest
