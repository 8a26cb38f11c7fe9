#include "zest/ingest/packet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace zest::ingest {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

long long parse_integer(std::string_view s, const char* field) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IngestError(std::string("bad integer in ") + field + ": '" + std::string(s) + "'");
  }
  return v;
}

bool parse_flag(std::string_view s, const char* field) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw IngestError(std::string("bad boolean in ") + field + ": '" + std::string(s) + "'");
}

}  // namespace

PacketRecord parse_packet_row(std::string_view line) {
  const auto fields = split_fields(trim(line));
  if (fields.size() != 9) {
    throw IngestError("expected 9 fields, got " + std::to_string(fields.size()));
  }
  PacketRecord r;
  {
    const std::string ts(trim(fields[0]));
    std::size_t used = 0;
    try {
      r.timestamp = std::stod(ts, &used);
    } catch (const std::exception&) {
      throw IngestError("bad timestamp: '" + ts + "'");
    }
    if (used != ts.size() || !std::isfinite(r.timestamp)) throw IngestError("bad timestamp: '" + ts + "'");
  }
  const long long sp = parse_integer(trim(fields[1]), "src_port");
  const long long dp = parse_integer(trim(fields[2]), "dst_port");
  if (sp < 0 || sp > 65535) throw IngestError("src_port out of range: " + std::to_string(sp));
  if (dp < 0 || dp > 65535) throw IngestError("dst_port out of range: " + std::to_string(dp));
  r.src_port = static_cast<std::uint16_t>(sp);
  r.dst_port = static_cast<std::uint16_t>(dp);
  r.src_internal = parse_flag(trim(fields[3]), "src_internal");
  r.dst_internal = parse_flag(trim(fields[4]), "dst_internal");
  const auto proto = trim(fields[5]);
  if (proto == "tcp") {
    r.proto = TransportProto::Tcp;
  } else if (proto == "udp") {
    r.proto = TransportProto::Udp;
  } else if (proto == "other") {
    r.proto = TransportProto::Other;
  } else {
    throw IngestError("bad proto: '" + std::string(proto) + "'");
  }
  const long long size = parse_integer(trim(fields[6]), "size");
  if (size < 0 || size > 0xFFFFFFFFLL) throw IngestError("size out of range: " + std::to_string(size));
  r.size = static_cast<std::uint32_t>(size);
  const auto dir = trim(fields[7]);
  if (dir == "in") {
    r.direction = Direction::Inbound;
  } else if (dir == "out") {
    r.direction = Direction::Outbound;
  } else {
    throw IngestError("bad direction: '" + std::string(dir) + "'");
  }
  r.device_id = std::string(trim(fields[8]));
  if (r.device_id.empty()) throw IngestError("empty device_id");
  return r;
}

ParseReport parse_packet_csv(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open packet CSV " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != kPacketCsvHeader) {
    throw IngestError("packet CSV " + path.string() + " does not start with header '" +
                      std::string(kPacketCsvHeader) + "'");
  }
  ParseReport report;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++report.data_rows;
    try {
      report.records.push_back(parse_packet_row(line));
    } catch (const IngestError& e) {
      ++report.skipped;
      report.warnings.push_back(path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  const double allowed = std::max(1.0, options.max_skip_fraction * static_cast<double>(report.data_rows));
  if (static_cast<double>(report.skipped) > allowed) {
    throw IngestError(std::to_string(report.skipped) + " of " + std::to_string(report.data_rows) +
                      " rows in " + path.string() + " are malformed; first: " + report.warnings.front());
  }
  return report;
}

std::string format_packet_row(const PacketRecord& r) {
  const char* proto = r.proto == TransportProto::Tcp ? "tcp" : (r.proto == TransportProto::Udp ? "udp" : "other");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f,%u,%u,%d,%d,", r.timestamp, static_cast<unsigned>(r.src_port),
                static_cast<unsigned>(r.dst_port), r.src_internal ? 1 : 0, r.dst_internal ? 1 : 0);
  std::string row = buf;
  row += proto;
  row += ',' + std::to_string(r.size) + ',';
  row += r.direction == Direction::Inbound ? "in" : "out";
  row += ',' + r.device_id;
  return row;
}

void write_packet_csv(const std::filesystem::path& path, const std::vector<PacketRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestError("cannot write " + path.string());
  out << kPacketCsvHeader << '\n';
  for (const auto& r : records) out << format_packet_row(r) << '\n';
}

std::map<std::string, std::vector<PacketRecord>> group_by_device(const std::vector<PacketRecord>& records) {
  std::map<std::string, std::vector<PacketRecord>> groups;
  for (const auto& r : records) groups[r.device_id].push_back(r);
  for (auto& [id, list] : groups) {
    std::stable_sort(list.begin(), list.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });
  }
  return groups;
}

}  // namespace zest::ingest
