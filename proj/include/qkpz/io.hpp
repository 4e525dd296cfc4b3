#pragma once

// Artifact formats: snapshot CSV, the QKPZ1 binary frame format,
// key = value config files, and the MANIFEST listing.

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "qkpz/errors.hpp"
#include "qkpz/process.hpp"
#include "qkpz/transform.hpp"

#ifndef QKPZ_GIT_REVISION
#define QKPZ_GIT_REVISION "unknown"
#endif

namespace qkpz {

/// Shortest round-trip decimal form of a double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

// ---------------------------------------------------------------------------
// CSV: time,x,eta,h,Z

inline std::string snapshot_csv_header() { return "time,x,eta,h,Z\n"; }

inline std::string snapshot_csv_rows(const Configuration& c, const QParameters& p) {
  const HeightField h = height_from_config(c, p);
  std::string out;
  const double nut = p.nu * c.time;
  for (int x = -c.L; x <= c.last_site(); ++x) {
    const double eta = c.count(x) + p.eta_offset();
    const double hv = h.at(x);
    const double logz = (nut - 2.0 * hv) * p.log_q;
    out += fmt(c.time) + "," + std::to_string(x) + "," + fmt(eta) + "," + fmt(hv) + "," +
           fmt(std::exp(logz)) + "\n";
  }
  return out;
}

inline std::string trajectory_csv(const Trajectory& tr) {
  std::string out = snapshot_csv_header();
  for (const auto& s : tr.snapshots) out += snapshot_csv_rows(s, tr.params);
  return out;
}

// ---------------------------------------------------------------------------
// QKPZ1 binary frames (little-endian; see docs/binary_format.md)

namespace detail {
template <class T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}
template <class T>
T get(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("truncated QKPZ1 stream");
  unsigned char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}
} // namespace detail

struct FrameHeader {
  Model model = Model::asep;
  Boundary boundary = Boundary::closed;
  std::int64_t L = 0;
  double spin = 0.0, q = 0.0, nu = 0.0;
  std::uint64_t seed = 0, stream = 0;
  std::uint32_t frames = 0;
};

inline std::string encode_frames(const Trajectory& tr, std::uint64_t seed, std::uint64_t stream) {
  std::string out = "QKPZ1";
  const Configuration* first = tr.snapshots.empty() ? nullptr : &tr.snapshots.front();
  std::uint8_t model = tr.params.model == Model::asep ? 0 : 1;
  if (first && first->boundary == Boundary::periodic) model |= 0x10;
  detail::put<std::uint8_t>(out, model);
  detail::put<std::int64_t>(out, first ? first->L : 0);
  detail::put<double>(out, tr.params.spin);
  detail::put<double>(out, tr.params.q);
  detail::put<double>(out, tr.params.nu);
  detail::put<std::uint64_t>(out, seed);
  detail::put<std::uint64_t>(out, stream);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tr.snapshots.size()));
  for (const auto& s : tr.snapshots) {
    detail::put<double>(out, s.time);
    detail::put<std::int64_t>(out, s.flow);
    detail::put<std::uint64_t>(out, s.jumps);
    for (auto o : s.occupancy) detail::put<std::int32_t>(out, o);
  }
  return out;
}

inline std::pair<FrameHeader, std::vector<Configuration>> decode_frames(std::string_view in) {
  if (in.substr(0, 5) != "QKPZ1") throw std::runtime_error("not a QKPZ1 stream");
  std::size_t pos = 5;
  FrameHeader h;
  const auto model = detail::get<std::uint8_t>(in, pos);
  h.model = (model & 0x0f) == 0 ? Model::asep : Model::asip;
  h.boundary = (model & 0x10) ? Boundary::periodic : Boundary::closed;
  h.L = detail::get<std::int64_t>(in, pos);
  h.spin = detail::get<double>(in, pos);
  h.q = detail::get<double>(in, pos);
  h.nu = detail::get<double>(in, pos);
  h.seed = detail::get<std::uint64_t>(in, pos);
  h.stream = detail::get<std::uint64_t>(in, pos);
  h.frames = detail::get<std::uint32_t>(in, pos);
  std::vector<Configuration> frames;
  for (std::uint32_t f = 0; f < h.frames; ++f) {
    Configuration c;
    c.model = h.model;
    c.boundary = h.boundary;
    c.L = static_cast<int>(h.L);
    c.time = detail::get<double>(in, pos);
    c.flow = detail::get<std::int64_t>(in, pos);
    c.jumps = detail::get<std::uint64_t>(in, pos);
    c.occupancy.resize(static_cast<std::size_t>(c.num_sites()));
    for (auto& o : c.occupancy) o = detail::get<std::int32_t>(in, pos);
    frames.push_back(std::move(c));
  }
  if (pos != in.size()) throw std::runtime_error("trailing bytes in QKPZ1 stream");
  return {h, frames};
}

// ---------------------------------------------------------------------------
// key = value config text; '#' starts a comment

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw DomainError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw DomainError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    std::size_t used = 0;
    const double d = std::stod(t, &used);
    if (used != t.size()) throw DomainError("bad number '" + t + "'");
    v.push_back(d);
  }
  return v;
}

inline std::string format_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// MANIFEST

struct ManifestEntry {
  std::string name;
  std::string data;
};

inline std::string manifest_text(const std::string& config_text, std::uint64_t seed,
                                 const std::vector<ManifestEntry>& artifacts) {
  std::string out = "config_hash = " + hex64(fnv1a64(config_text)) + "\n";
  out += "seed = " + std::to_string(seed) + "\n";
  out += "git_revision = " QKPZ_GIT_REVISION "\n";
  for (const auto& a : artifacts) out += "artifact " + a.name + " = fnv1a64:" + hex64(fnv1a64(a.data)) + "\n";
  return out;
}

} // namespace qkpz
