#include "zest/synth/profile.hpp"

#include "zest/ingest/features.hpp"
#include "zest/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace zest::synth {
namespace {

constexpr double kProbTolerance = 1e-6;
constexpr double kLogFloor = -27.6;  // log(1e-12)

double safe_log(double p) { return p > 0 ? std::max(std::log(p), kLogFloor) : kLogFloor; }

double lognormal_log_density(double x, double mu, double sigma) {
  if (x <= 0) return kLogFloor;
  const double z = (std::log(x) - mu) / sigma;
  return -std::log(x) - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
}

struct Knobs {
  double size;    // small .. large packets
  double timing;  // chatty .. quiet
  double locality;  // cloud-oriented .. local-network-oriented
};

struct PresetShape {
  double size_lo, size_hi, size_sigma;
  double iat_lo, iat_hi, iat_sigma;
  double locality_lo, locality_hi;
  std::size_t sessions;
};

DeviceProfile profile_from_knobs(const std::string& id, const Knobs& k, const PresetShape& s) {
  DeviceProfile p;
  p.device_id = id;
  const double loc = s.locality_lo + (s.locality_hi - s.locality_lo) * k.locality;
  p.size_mu = std::log(s.size_lo) + k.size * (std::log(s.size_hi) - std::log(s.size_lo));
  p.size_sigma = s.size_sigma;
  p.iat_mu = std::log(s.iat_lo) + k.timing * (std::log(s.iat_hi) - std::log(s.iat_lo));
  p.iat_sigma = s.iat_sigma;
  p.proto = {0.85 - 0.6 * loc, 0.10 + 0.6 * loc, 0.05};
  p.outbound = 0.35 + 0.3 * loc;
  p.local_peer = 0.05 + 0.5 * loc;
  // cloud services vs local services
  const std::vector<PortWeight> cloud{{443, 0.6}, {53, 0.2}, {123, 0.1}, {80, 0.1}};
  const std::vector<PortWeight> local{{1883, 0.4}, {5353, 0.3}, {8080, 0.2}, {554, 0.1}};
  for (const auto& c : cloud) p.service_ports.push_back({c.port, (1.0 - loc) * c.probability});
  for (const auto& l : local) p.service_ports.push_back({l.port, loc * l.probability});
  p.sessions = s.sessions;
  p.packets_per_session = 200;
  return p;
}

std::vector<DeviceProfile> grid_preset(const std::string& prefix, const PresetShape& shape) {
  std::vector<DeviceProfile> out;
  for (int i = 0; i < 12; ++i) {
    Knobs k{static_cast<double>(i % 4) / 3.0, static_cast<double>(i / 4) / 2.0,
            static_cast<double>((i * 5) % 12) / 11.0};
    char id[32];
    std::snprintf(id, sizeof id, "%s-%02d", prefix.c_str(), i);
    out.push_back(profile_from_knobs(id, k, shape));
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void DeviceProfile::validate() const {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("profile '" + device_id + "': " + what);
  };
  if (device_id.empty() || device_id.find(',') != std::string::npos) fail("device id must be non-empty, no commas");
  double ps = 0;
  for (double v : proto) {
    if (v < 0) fail("negative protocol probability");
    ps += v;
  }
  if (std::abs(ps - 1.0) > kProbTolerance) fail("protocol probabilities must sum to 1");
  if (service_ports.empty()) fail("at least one service port required");
  double pp = 0;
  for (const auto& w : service_ports) {
    if (w.probability < 0) fail("negative port probability");
    if (w.port >= 49152) fail("service ports must be below the dynamic range (49152)");
    pp += w.probability;
  }
  if (std::abs(pp - 1.0) > kProbTolerance) fail("port probabilities must sum to 1");
  if (outbound < 0 || outbound > 1) fail("outbound must be a probability");
  if (local_peer < 0 || local_peer > 1) fail("local_peer must be a probability");
  if (!(size_sigma > 0) || !(iat_sigma > 0)) fail("log-normal sigma must be > 0");
  if (!std::isfinite(size_mu) || !std::isfinite(iat_mu)) fail("log-normal mu must be finite");
  if (sessions == 0 || packets_per_session == 0) fail("sessions and packets_per_session must be >= 1");
}

std::vector<std::string> preset_names() { return {"separable-12", "hard-12"}; }

std::vector<DeviceProfile> preset(const std::string& name) {
  if (name == "separable-12") {
    return grid_preset("sep", {60.0, 900.0, 0.35, 0.02, 2.0, 0.6, 0.0, 1.0, 100});
  }
  if (name == "hard-12") {
    return grid_preset("hard", {120.0, 600.0, 0.6, 0.05, 1.0, 1.0, 0.2, 0.8, 100});
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------- profile files

std::string format_profiles(std::span<const DeviceProfile> profiles) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& p : profiles) {
    out << "[device " << p.device_id << "]\n";
    out << "proto = tcp:" << p.proto[0] << " udp:" << p.proto[1] << " other:" << p.proto[2] << "\n";
    out << "ports =";
    for (const auto& w : p.service_ports) out << ' ' << w.port << ':' << w.probability;
    out << "\noutbound = " << p.outbound << "\nlocal_peer = " << p.local_peer << "\n";
    out << "size_lognormal = " << p.size_mu << ' ' << p.size_sigma << "\n";
    out << "iat_lognormal = " << p.iat_mu << ' ' << p.iat_sigma << "\n";
    out << "sessions = " << p.sessions << "\npackets_per_session = " << p.packets_per_session << "\n\n";
  }
  return out.str();
}

std::vector<DeviceProfile> parse_profiles(const std::string& text) {
  std::vector<DeviceProfile> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("profile config line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = strip(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.rfind("[device ", 0) != 0) fail("expected [device <id>]");
      DeviceProfile p;
      p.device_id = strip(line.substr(8, line.size() - 9));
      p.service_ports.clear();
      out.push_back(std::move(p));
      continue;
    }
    if (out.empty()) fail("key outside of a [device] section");
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const auto values = split_ws(line.substr(eq + 1));
    DeviceProfile& p = out.back();
    auto number = [&](const std::string& v) {
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != v.size()) fail("bad number '" + v + "' for " + key);
      return x;
    };
    auto pair_entry = [&](const std::string& v) {
      const auto c = v.find(':');
      if (c == std::string::npos) fail(key + " entries are name:probability");
      return std::pair{v.substr(0, c), number(v.substr(c + 1))};
    };
    if (key == "proto") {
      p.proto = {0, 0, 0};
      for (const auto& v : values) {
        const auto [name, prob] = pair_entry(v);
        if (name == "tcp") p.proto[0] = prob;
        else if (name == "udp") p.proto[1] = prob;
        else if (name == "other") p.proto[2] = prob;
        else fail("unknown protocol " + name);
      }
    } else if (key == "ports") {
      for (const auto& v : values) {
        const auto [name, prob] = pair_entry(v);
        const double port = number(name);
        if (port < 0 || port > 65535 || port != std::floor(port)) fail("bad port " + name);
        p.service_ports.push_back({static_cast<std::uint16_t>(port), prob});
      }
    } else if (key == "outbound" && values.size() == 1) {
      p.outbound = number(values[0]);
    } else if (key == "local_peer" && values.size() == 1) {
      p.local_peer = number(values[0]);
    } else if (key == "size_lognormal" && values.size() == 2) {
      p.size_mu = number(values[0]);
      p.size_sigma = number(values[1]);
    } else if (key == "iat_lognormal" && values.size() == 2) {
      p.iat_mu = number(values[0]);
      p.iat_sigma = number(values[1]);
    } else if ((key == "sessions" || key == "packets_per_session") && values.size() == 1) {
      const double v = number(values[0]);
      if (v < 1 || v != std::floor(v)) fail(key + " must be a positive integer");
      (key == "sessions" ? p.sessions : p.packets_per_session) = static_cast<std::size_t>(v);
    } else {
      fail("unknown key or wrong value count: " + key);
    }
  }
  for (const auto& p : out) p.validate();
  return out;
}

std::vector<DeviceProfile> load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open profile config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_profiles(buf.str());
}

void save_profiles(const std::filesystem::path& path, std::span<const DeviceProfile> profiles) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << format_profiles(profiles);
}

// ---------------------------------------------------------------- generation

std::vector<ingest::PacketRecord> generate(std::span<const DeviceProfile> profiles, std::uint64_t seed) {
  if (profiles.size() < 2) throw std::invalid_argument("generate: need at least 2 profiles");
  for (const auto& p : profiles) p.validate();
  std::vector<ingest::PacketRecord> out;
  constexpr std::int64_t kStartMicros = 1'700'000'000LL * 1'000'000LL;
  for (std::size_t d = 0; d < profiles.size(); ++d) {
    const DeviceProfile& p = profiles[d];
    num::Rng rng = num::Rng::derive(seed, d);
    std::int64_t t = kStartMicros;
    const std::size_t total = p.sessions * p.packets_per_session;
    for (std::size_t i = 0; i < total; ++i) {
      if (i > 0) {
        const double gap = std::exp(rng.normal(p.iat_mu, p.iat_sigma));
        t += std::max<std::int64_t>(1, std::llround(gap * 1e6));
      }
      ingest::PacketRecord r;
      r.timestamp = static_cast<double>(t) / 1e6;
      r.device_id = p.device_id;
      r.direction = rng.uniform() < p.outbound ? ingest::Direction::Outbound : ingest::Direction::Inbound;
      const double u = rng.uniform();
      r.proto = u < p.proto[0] ? ingest::TransportProto::Tcp
                               : (u < p.proto[0] + p.proto[1] ? ingest::TransportProto::Udp
                                                              : ingest::TransportProto::Other);
      double pick = rng.uniform();
      std::uint16_t service = p.service_ports.back().port;
      for (const auto& w : p.service_ports) {
        if (pick < w.probability) {
          service = w.port;
          break;
        }
        pick -= w.probability;
      }
      const auto ephemeral = static_cast<std::uint16_t>(49152 + rng.below(65536 - 49152));
      const bool peer_internal = rng.uniform() < p.local_peer;
      const double size = std::exp(rng.normal(p.size_mu, p.size_sigma));
      r.size = static_cast<std::uint32_t>(std::clamp<long long>(std::llround(size), 1, 0xFFFFFFFFLL));
      if (r.direction == ingest::Direction::Outbound) {
        r.src_port = ephemeral;
        r.dst_port = service;
        r.src_internal = true;
        r.dst_internal = peer_internal;
      } else {
        r.src_port = service;
        r.dst_port = ephemeral;
        r.src_internal = peer_internal;
        r.dst_internal = true;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------- Bayes oracle

double row_log_likelihood(const DeviceProfile& p, std::span<const float> row) {
  using namespace ingest;
  double ll = 0;
  const bool outbound = row[kDirection] > 0.5f;
  ll += safe_log(outbound ? p.outbound : 1.0 - p.outbound);
  const auto proto = static_cast<int>(std::lround(row[kTransport]));
  ll += safe_log(proto >= 0 && proto < 3 ? p.proto[static_cast<std::size_t>(proto)] : 0.0);

  double port_p = 0;
  const auto cat = static_cast<int>(std::lround(row[kServicePort]));
  const auto app = static_cast<int>(std::lround(row[kAppProto]));
  for (const auto& w : p.service_ports) {
    if (static_cast<int>(port_category(w.port)) == cat && static_cast<int>(app_protocol(w.port)) == app) {
      port_p += w.probability;
    }
  }
  ll += safe_log(port_p);

  const bool src_in = row[kSrcInternal] > 0.5f;
  const bool dst_in = row[kDstInternal] > 0.5f;
  const bool local_side = outbound ? src_in : dst_in;
  const bool remote_internal = outbound ? dst_in : src_in;
  ll += safe_log(local_side ? 1.0 : 0.0);
  ll += safe_log(remote_internal ? p.local_peer : 1.0 - p.local_peer);

  ll += lognormal_log_density(row[kPacketSize], p.size_mu, p.size_sigma);
  if (row[kInterArrival] > 0) ll += lognormal_log_density(row[kInterArrival], p.iat_mu, p.iat_sigma);
  return ll;
}

std::size_t bayes_classify(std::span<const DeviceProfile> profiles, const num::Tensor<float>& raw) {
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    double ll = 0;
    for (std::size_t r = 0; r < raw.rows(); ++r) ll += row_log_likelihood(profiles[k], raw.row(r));
    if (ll > best_ll) {
      best_ll = ll;
      best = k;
    }
  }
  return best;
}

double bayes_oracle(std::span<const DeviceProfile> profiles, std::span<const ingest::DataPoint> raw_points,
                    std::span<const std::string> devices) {
  if (raw_points.empty()) throw std::invalid_argument("bayes_oracle: no data points");
  std::vector<std::size_t> profile_of_label;
  for (const auto& id : devices) {
    const auto it = std::find_if(profiles.begin(), profiles.end(),
                                 [&](const DeviceProfile& p) { return p.device_id == id; });
    if (it == profiles.end()) throw std::invalid_argument("bayes_oracle: no profile for device " + id);
    profile_of_label.push_back(static_cast<std::size_t>(it - profiles.begin()));
  }
  std::size_t correct = 0;
  for (const auto& p : raw_points) {
    if (!p.label) throw std::invalid_argument("bayes_oracle: unlabeled data point");
    const std::size_t truth = profile_of_label.at(static_cast<std::size_t>(*p.label));
    if (bayes_classify(profiles, p.features) == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(raw_points.size());
}

}  // namespace zest::synth
