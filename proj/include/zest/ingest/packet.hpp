#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace zest::ingest {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TransportProto : std::uint8_t { Tcp = 0, Udp = 1, Other = 2 };
enum class Direction : std::uint8_t { Inbound = 0, Outbound = 1 };

/// One packet's metadata as read from a trace file.
struct PacketRecord {
  double timestamp = 0.0;   // seconds since epoch
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  bool src_internal = false;
  bool dst_internal = false;
  TransportProto proto = TransportProto::Tcp;
  std::uint32_t size = 0;   // bytes
  Direction direction = Direction::Outbound;
  std::string device_id;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

/// Header every packet CSV must start with.
inline constexpr std::string_view kPacketCsvHeader =
    "timestamp,src_port,dst_port,src_internal,dst_internal,proto,size,direction,device_id";

struct ParseOptions {
  // Abort when more than max(1, max_skip_fraction * data rows) rows are bad.
  double max_skip_fraction = 0.01;
};

struct ParseReport {
  std::vector<PacketRecord> records;  // file order
  std::size_t data_rows = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;  // one per skipped row
};

/// Parses a packet CSV. Throws IngestError for a missing file, a header
/// mismatch, or too many malformed rows.
ParseReport parse_packet_csv(const std::filesystem::path& path, const ParseOptions& options = {});

/// Parses a single data row; throws IngestError with the reason on failure.
PacketRecord parse_packet_row(std::string_view line);

/// Formats a record as one CSV row (no trailing newline).
std::string format_packet_row(const PacketRecord& record);

void write_packet_csv(const std::filesystem::path& path, const std::vector<PacketRecord>& records);

/// Groups records by device id, each group stably sorted by timestamp.
std::map<std::string, std::vector<PacketRecord>> group_by_device(const std::vector<PacketRecord>& records);

}  // namespace zest::ingest
