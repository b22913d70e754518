#pragma once

// On-disk afterstate database.
//
// Layout: <db>/<rows>x<cols>/age<NNNNN>/{manifest.json, H.bin, L.bin, values*.bin}
// plus <db>/<rows>x<cols>/db.json describing run progress. All payloads are
// little-endian; H and L are 64-bit words, value tables are fixed-width
// unsigned integers of `bytes` bytes each holding round(value * 2^scale).
//
// Codes are stored compacted: cell 1 is dropped (the age pins it down) and the
// remaining exponents are read as digits in a per-age base.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agesolver/board.hpp"
#include "agesolver/elias_fano.hpp"
#include "agesolver/error.hpp"
#include "agesolver/sha256.hpp"
#include "agesolver/solver.hpp"
#include "json.hpp"

namespace agesolver {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr int kDefaultValueScale = 16;

// ---------------------------------------------------------------- compaction

/// Base b = e + 1 for the smallest e with 2^e >= age, clamped to [2, cells + 2].
inline int base_for_age(std::uint64_t age, int cell_count) {
  int e = 0;
  while ((std::uint64_t{1} << e) < age) ++e;
  return std::clamp(e + 1, 2, cell_count + 2);
}

struct CompactCode {
  std::uint64_t value = 0;
  constexpr auto operator<=>(const CompactCode&) const = default;
};

inline CompactCode compress_code(const Geometry& geo, StateCode code, std::uint64_t age) {
  const int b = base_for_age(age, geo.cell_count());
  std::uint64_t u = 0;
  for (int i = geo.cell_count() - 1; i >= 1; --i) {
    const unsigned d = nibble(code, i);
    if (int(d) >= b)
      throw EncodingError("exponent " + std::to_string(d) + " in cell " + std::to_string(i + 1) +
                          " is not below base " + std::to_string(b) + " of age " +
                          std::to_string(age));
    u = u * std::uint64_t(b) + d;
  }
  return {u};
}

inline StateCode expand_code(const Geometry& geo, CompactCode u, std::uint64_t age) {
  const int b = base_for_age(age, geo.cell_count());
  StateCode s;
  std::uint64_t rest = u.value;
  std::uint64_t sum = 0;
  for (int i = 1; i < geo.cell_count(); ++i) {
    const auto d = unsigned(rest % std::uint64_t(b));
    rest /= std::uint64_t(b);
    s = with_nibble(s, i, d);
    if (d) sum += std::uint64_t{1} << d;
  }
  if (rest != 0 || sum > age)
    throw IntegrityError("compact code " + std::to_string(u.value) + " is not valid at age " +
                         std::to_string(age));
  const std::uint64_t residue = age - sum;
  if (residue != 0) {
    const int e = std::countr_zero(residue);
    if (!std::has_single_bit(residue) || e < 1 || e > geo.max_exponent())
      throw IntegrityError("compact code " + std::to_string(u.value) + " leaves residue " +
                           std::to_string(residue) + " at age " + std::to_string(age));
    s = with_nibble(s, 0, unsigned(e));
  }
  return s;
}

// -------------------------------------------------------------- quantization

inline std::uint64_t quantize(double v, int scale, int bits = 64) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw EncodingError("cannot quantize value " + std::to_string(v));
  const double scaled = std::round(std::ldexp(v, scale));
  const double limit = std::ldexp(1.0, std::min(bits, 64));
  if (scaled >= limit)
    throw EncodingError("value " + std::to_string(v) + " needs more than " +
                        std::to_string(bits) + " bits at scale " + std::to_string(scale) +
                        "; widen the value field or lower --value-scale");
  return std::uint64_t(scaled);
}

inline double dequantize(std::uint64_t i, int scale) { return std::ldexp(double(i), -scale); }

/// Fixed-point values aligned to partition ranks.
class QuantizedValueTable {
 public:
  QuantizedValueTable() = default;

  /// Field width is `bytes` if given, otherwise the fewest bytes holding the largest value.
  static QuantizedValueTable from_values(std::span<const double> values, int scale,
                                         std::optional<int> bytes = std::nullopt) {
    std::vector<std::uint64_t> raw(values.size());
    std::uint64_t max = 0;
    const int bits = bytes ? 8 * *bytes : 64;
    for (std::size_t i = 0; i < values.size(); ++i) {
      raw[i] = quantize(values[i], scale, bits);
      max = std::max(max, raw[i]);
    }
    QuantizedValueTable t;
    t.scale_ = scale;
    t.bytes_ = bytes ? *bytes : std::max(1, int(std::bit_width(max) + 7) / 8);
    t.size_ = values.size();
    t.data_.resize(t.size_ * std::size_t(t.bytes_));
    for (std::size_t i = 0; i < raw.size(); ++i)
      for (int b = 0; b < t.bytes_; ++b)
        t.data_[i * std::size_t(t.bytes_) + std::size_t(b)] =
            static_cast<unsigned char>(raw[i] >> (8 * b));
    return t;
  }

  static QuantizedValueTable from_bytes(std::vector<unsigned char> data, int scale, int bytes) {
    if (bytes < 1 || bytes > 8 || data.size() % std::size_t(bytes) != 0)
      throw IntegrityError("value table has an invalid field width");
    QuantizedValueTable t;
    t.scale_ = scale;
    t.bytes_ = bytes;
    t.size_ = data.size() / std::size_t(bytes);
    t.data_ = std::move(data);
    return t;
  }

  std::size_t size() const { return size_; }
  int scale() const { return scale_; }
  int field_bytes() const { return bytes_; }
  std::span<const unsigned char> bytes() const { return data_; }

  std::uint64_t raw(std::size_t k) const {
    std::uint64_t v = 0;
    for (int b = 0; b < bytes_; ++b)
      v |= std::uint64_t(data_[k * std::size_t(bytes_) + std::size_t(b)]) << (8 * b);
    return v;
  }
  double value(std::size_t k) const { return dequantize(raw(k), scale_); }

  std::vector<double> dequantized() const {
    std::vector<double> out(size_);
    for (std::size_t k = 0; k < size_; ++k) out[k] = value(k);
    return out;
  }

 private:
  int scale_ = kDefaultValueScale;
  int bytes_ = 4;
  std::size_t size_ = 0;
  std::vector<unsigned char> data_;
};

// ------------------------------------------------------------------ manifest

struct ValueFileInfo {
  std::string file;
  int scale = kDefaultValueScale;
  int bytes = 4;
  std::uint64_t file_bytes = 0;
  std::string sha256;
};

struct PartitionManifest {
  int version = kFormatVersion;
  std::string geometry;
  int rows = 0;
  int cols = 0;
  std::uint64_t age = 0;
  std::uint64_t m = 0;
  std::uint64_t state_count = 0;
  int base = 0;
  int n = 0;
  int q = 0;
  std::uint64_t h_bits = 0;
  std::uint64_t h_bytes = 0;
  std::uint64_t l_bytes = 0;
  std::map<std::string, std::string> sha256;    // payload file -> digest
  std::map<std::string, ValueFileInfo> values;  // variant -> value table
};

inline void to_json(json& j, const ValueFileInfo& v) {
  j = json{{"file", v.file}, {"scale", v.scale}, {"bytes", v.bytes},
           {"file_bytes", v.file_bytes}, {"sha256", v.sha256}};
}
inline void from_json(const json& j, ValueFileInfo& v) {
  j.at("file").get_to(v.file);
  j.at("scale").get_to(v.scale);
  j.at("bytes").get_to(v.bytes);
  j.at("file_bytes").get_to(v.file_bytes);
  j.at("sha256").get_to(v.sha256);
}

inline void to_json(json& j, const PartitionManifest& m) {
  j = json{{"version", m.version}, {"geometry", m.geometry}, {"rows", m.rows},
           {"cols", m.cols},       {"age", m.age},           {"m", m.m},
           {"state_count", m.state_count}, {"base", m.base}, {"n", m.n},
           {"q", m.q},             {"low_bits", m.n - m.q},  {"h_bits", m.h_bits},
           {"h_bytes", m.h_bytes}, {"l_bytes", m.l_bytes},   {"sha256", m.sha256},
           {"values", m.values}};
  const auto std_values = m.values.find("standard");
  j["value_scale"] = std_values != m.values.end() ? std_values->second.scale : kDefaultValueScale;
}
inline void from_json(const json& j, PartitionManifest& m) {
  j.at("version").get_to(m.version);
  j.at("geometry").get_to(m.geometry);
  j.at("rows").get_to(m.rows);
  j.at("cols").get_to(m.cols);
  j.at("age").get_to(m.age);
  j.at("m").get_to(m.m);
  j.at("state_count").get_to(m.state_count);
  j.at("base").get_to(m.base);
  j.at("n").get_to(m.n);
  j.at("q").get_to(m.q);
  j.at("h_bits").get_to(m.h_bits);
  j.at("h_bytes").get_to(m.h_bytes);
  j.at("l_bytes").get_to(m.l_bytes);
  j.at("sha256").get_to(m.sha256);
  j.at("values").get_to(m.values);
}

// -------------------------------------------------------------------- files

namespace detail {

inline void write_bytes(const fs::path& path, std::span<const unsigned char> bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("missing file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<unsigned char> words_to_bytes(std::span<const std::uint64_t> words) {
  std::vector<unsigned char> out(words.size() * 8);
  for (std::size_t i = 0; i < words.size(); ++i)
    for (int b = 0; b < 8; ++b) out[i * 8 + std::size_t(b)] = (unsigned char)(words[i] >> (8 * b));
  return out;
}

inline std::vector<std::uint64_t> bytes_to_words(std::span<const unsigned char> bytes) {
  if (bytes.size() % 8 != 0) throw IntegrityError("payload length is not a multiple of 8");
  std::vector<std::uint64_t> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (int b = 0; b < 8; ++b) out[i] |= std::uint64_t(bytes[i * 8 + std::size_t(b)]) << (8 * b);
  return out;
}

inline std::string age_dir_name(std::uint64_t age) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "age%05llu", static_cast<unsigned long long>(age));
  return buf;
}

inline std::string value_file_name(Variant v) {
  return v == Variant::standard ? "values.bin" : "values_" + std::string(to_string(v)) + ".bin";
}

}  // namespace detail

inline fs::path geometry_dir(const fs::path& db, const Geometry& geo) { return db / geo.name(); }

inline fs::path age_dir(const fs::path& db, const Geometry& geo, std::uint64_t age) {
  return geometry_dir(db, geo) / detail::age_dir_name(age);
}

inline void write_manifest(const fs::path& dir, const PartitionManifest& m) {
  const std::string text = json(m).dump(2) + "\n";
  detail::write_bytes(dir / "manifest.json",
                      {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

inline PartitionManifest read_manifest(const fs::path& db, const Geometry& geo, std::uint64_t age) {
  const fs::path p = age_dir(db, geo, age) / "manifest.json";
  std::ifstream in(p);
  if (!in) throw NotFoundError("no partition for age " + std::to_string(age) + " at " + p.string());
  try {
    PartitionManifest m = json::parse(in).get<PartitionManifest>();
    if (m.version != kFormatVersion || m.age != age || m.geometry != geo.name())
      throw IntegrityError("manifest " + p.string() + " does not describe age " +
                           std::to_string(age) + " of " + geo.name());
    return m;
  } catch (const json::exception& e) {
    throw IntegrityError("malformed manifest " + p.string() + ": " + e.what());
  }
}

inline bool has_manifest(const fs::path& db, const Geometry& geo, std::uint64_t age) {
  return fs::exists(age_dir(db, geo, age) / "manifest.json");
}

/// Compacts and encodes one partition and writes H.bin, L.bin and the manifest.
/// Existing value tables for the age are discarded.
inline PartitionManifest write_partition(const fs::path& db, const Geometry& geo,
                                         const AgePartition& partition,
                                         std::uint64_t state_count = 0) {
  std::vector<std::uint64_t> compact;
  compact.reserve(partition.codes.size());
  for (const StateCode c : partition.codes) {
    if (age_of(c) != partition.age)
      throw IntegrityError("code " + geo.format(c) + " does not have age " +
                           std::to_string(partition.age));
    compact.push_back(compress_code(geo, c, partition.age).value);
  }
  const EliasFanoSet set = EliasFanoSet::build(compact);

  const fs::path dir = age_dir(db, geo, partition.age);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& entry : fs::directory_iterator(dir)) fs::remove(entry.path());

  const auto h = detail::words_to_bytes(set.high_words());
  const auto l = detail::words_to_bytes(set.low_words());
  detail::write_bytes(dir / "H.bin", h);
  detail::write_bytes(dir / "L.bin", l);

  PartitionManifest m;
  m.geometry = geo.name();
  m.rows = geo.rows();
  m.cols = geo.cols();
  m.age = partition.age;
  m.m = set.size();
  m.state_count = state_count;
  m.base = base_for_age(partition.age, geo.cell_count());
  m.n = set.universe_bits();
  m.q = set.high_width();
  m.h_bits = set.high_bit_length();
  m.h_bytes = h.size();
  m.l_bytes = l.size();
  m.sha256["H.bin"] = sha256_hex(h);
  m.sha256["L.bin"] = sha256_hex(l);
  write_manifest(dir, m);
  return m;
}

/// Quantizes and writes one value table, registering it in the age's manifest.
inline PartitionManifest write_values(const fs::path& db, const Geometry& geo, std::uint64_t age,
                                      Variant variant, std::span<const double> values,
                                      int scale = kDefaultValueScale,
                                      std::optional<int> bytes = std::nullopt) {
  PartitionManifest m = read_manifest(db, geo, age);
  if (values.size() != m.m)
    throw IntegrityError("value count " + std::to_string(values.size()) + " != partition size " +
                         std::to_string(m.m) + " at age " + std::to_string(age));
  const auto table = QuantizedValueTable::from_values(values, scale, bytes);
  const fs::path dir = age_dir(db, geo, age);
  const std::string name = detail::value_file_name(variant);
  detail::write_bytes(dir / name, table.bytes());
  m.values[std::string(to_string(variant))] =
      ValueFileInfo{name, scale, table.field_bytes(), table.bytes().size(), sha256_hex(table.bytes())};
  write_manifest(dir, m);
  return m;
}

/// Convenience: partition and its standard values in one call.
inline PartitionManifest write_partition(const fs::path& db, const Geometry& geo,
                                         const AgePartition& partition,
                                         std::span<const double> values,
                                         int scale = kDefaultValueScale) {
  write_partition(db, geo, partition, 0);
  return write_values(db, geo, partition.age, Variant::standard, values, scale);
}

struct LoadedPartition {
  PartitionManifest manifest;
  EliasFanoSet set;
};

inline std::vector<unsigned char> read_verified(const fs::path& file, const std::string& digest,
                                                std::uint64_t expected_bytes) {
  auto bytes = detail::read_bytes(file);
  if (bytes.size() != expected_bytes)
    throw IntegrityError(file.string() + " has " + std::to_string(bytes.size()) +
                         " bytes, manifest says " + std::to_string(expected_bytes));
  if (sha256_hex(bytes) != digest)
    throw IntegrityError("SHA-256 mismatch for " + file.string());
  return bytes;
}

inline LoadedPartition read_partition(const fs::path& db, const Geometry& geo, std::uint64_t age) {
  LoadedPartition out;
  out.manifest = read_manifest(db, geo, age);
  const auto& m = out.manifest;
  const fs::path dir = age_dir(db, geo, age);
  auto digest = [&](const char* name) {
    const auto it = m.sha256.find(name);
    if (it == m.sha256.end()) throw IntegrityError(std::string("manifest lacks digest for ") + name);
    return it->second;
  };
  const auto h = read_verified(dir / "H.bin", digest("H.bin"), m.h_bytes);
  const auto l = read_verified(dir / "L.bin", digest("L.bin"), m.l_bytes);
  out.set = EliasFanoSet::from_words(m.m, m.n, m.q, detail::bytes_to_words(h),
                                     detail::bytes_to_words(l));
  if (out.set.high_bit_length() != m.h_bits)
    throw IntegrityError("H length disagrees with manifest at age " + std::to_string(age));
  return out;
}

inline QuantizedValueTable read_values(const fs::path& db, const Geometry& geo, std::uint64_t age,
                                       Variant variant, const PartitionManifest& m) {
  const auto it = m.values.find(std::string(to_string(variant)));
  if (it == m.values.end())
    throw NotFoundError("no " + std::string(to_string(variant)) + " values for age " +
                        std::to_string(age));
  const ValueFileInfo& info = it->second;
  auto bytes = read_verified(age_dir(db, geo, age) / info.file, info.sha256, info.file_bytes);
  auto table = QuantizedValueTable::from_bytes(std::move(bytes), info.scale, info.bytes);
  if (table.size() != m.m)
    throw IntegrityError("value table size mismatch at age " + std::to_string(age));
  return table;
}

/// Canonical afterstate codes of a stored partition, increasing.
inline std::vector<StateCode> decode_partition(const Geometry& geo, const LoadedPartition& p) {
  std::vector<StateCode> codes;
  codes.reserve(p.set.size());
  p.set.for_each([&](std::uint64_t u) { codes.push_back(expand_code(geo, {u}, p.manifest.age)); });
  return codes;
}

// ------------------------------------------------------------------ db index

struct BackwardStatus {
  bool complete = false;
  std::uint64_t lowest_age = 0;  // lowest age whose values are written
  int scale = kDefaultValueScale;
};

/// Run-level metadata for one geometry (db.json).
struct DbIndex {
  int version = kFormatVersion;
  std::string geometry;
  bool forward_complete = false;
  std::optional<std::uint64_t> max_age_cap;
  std::uint64_t last_age = 0;  // last age written by the forward sweep
  std::uint64_t top_age = 0;   // highest age with afterstates
  std::uint64_t total_states = 0;
  std::uint64_t total_afterstates = 0;
  std::vector<AgeCount> ages;
  std::map<std::string, BackwardStatus> backward;
};

inline void to_json(json& j, const DbIndex& d) {
  json ages = json::array();
  for (const auto& a : d.ages) ages.push_back({a.age, a.states, a.afterstates});
  json backward = json::object();
  for (const auto& [k, v] : d.backward)
    backward[k] = {{"complete", v.complete}, {"lowest_age", v.lowest_age}, {"scale", v.scale}};
  j = json{{"version", d.version},
           {"geometry", d.geometry},
           {"forward_complete", d.forward_complete},
           {"max_age_cap", d.max_age_cap ? json(*d.max_age_cap) : json(nullptr)},
           {"last_age", d.last_age},
           {"top_age", d.top_age},
           {"total_states", d.total_states},
           {"total_afterstates", d.total_afterstates},
           {"ages", ages},
           {"backward", backward}};
}
inline void from_json(const json& j, DbIndex& d) {
  j.at("version").get_to(d.version);
  j.at("geometry").get_to(d.geometry);
  j.at("forward_complete").get_to(d.forward_complete);
  if (!j.at("max_age_cap").is_null()) d.max_age_cap = j.at("max_age_cap").get<std::uint64_t>();
  j.at("last_age").get_to(d.last_age);
  j.at("top_age").get_to(d.top_age);
  j.at("total_states").get_to(d.total_states);
  j.at("total_afterstates").get_to(d.total_afterstates);
  d.ages.clear();
  for (const auto& a : j.at("ages"))
    d.ages.push_back({a.at(0).get<std::uint64_t>(), a.at(1).get<std::uint64_t>(),
                      a.at(2).get<std::uint64_t>()});
  d.backward.clear();
  for (const auto& [k, v] : j.at("backward").items())
    d.backward[k] = {v.at("complete").get<bool>(), v.at("lowest_age").get<std::uint64_t>(),
                     v.at("scale").get<int>()};
}

inline std::optional<DbIndex> read_index(const fs::path& db, const Geometry& geo) {
  const fs::path p = geometry_dir(db, geo) / "db.json";
  std::ifstream in(p);
  if (!in) return std::nullopt;
  try {
    return json::parse(in).get<DbIndex>();
  } catch (const json::exception& e) {
    throw IntegrityError("malformed " + p.string() + ": " + e.what());
  }
}

inline void write_index(const fs::path& db, const Geometry& geo, const DbIndex& index) {
  fs::create_directories(geometry_dir(db, geo));
  const std::string text = json(index).dump(1) + "\n";
  detail::write_bytes(geometry_dir(db, geo) / "db.json",
                      {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

/// Geometries present under a database root.
inline std::vector<Geometry> list_geometries(const fs::path& db) {
  std::vector<Geometry> out;
  if (!fs::is_directory(db)) return out;
  for (const auto& e : fs::directory_iterator(db)) {
    if (!e.is_directory() || !fs::exists(e.path() / "db.json")) continue;
    try {
      out.push_back(Geometry::parse(e.path().filename().string()));
    } catch (const UsageError&) {
    }
  }
  std::sort(out.begin(), out.end(), [](const Geometry& a, const Geometry& b) {
    return std::pair(a.rows(), a.cols()) < std::pair(b.rows(), b.cols());
  });
  return out;
}

// ------------------------------------------------------------------ reader

/// Read-only view of a solved database with per-age caching. Safe for
/// concurrent readers.
class Database {
 public:
  Database(fs::path root, Geometry geo) : root_(std::move(root)), geo_(std::move(geo)) {
    auto idx = read_index(root_, geo_);
    if (!idx) throw NotFoundError("no database for " + geo_.name() + " under " + root_.string());
    index_ = std::move(*idx);
  }

  /// Opens the only geometry under `root` when `geo` is not given.
  static Database open(const fs::path& root, std::optional<Geometry> geo = std::nullopt) {
    return Database(root, resolve_geometry(root, geo));
  }

  /// `geo` if given, else the only geometry stored under `root`.
  static Geometry resolve_geometry(const fs::path& root, std::optional<Geometry> geo) {
    if (geo) return *geo;
    const auto all = list_geometries(root);
    if (all.size() != 1)
      throw UsageError(all.empty() ? "no database found under " + root.string()
                                   : "several geometries under " + root.string() +
                                         "; pass --geometry");
    return all.front();
  }

  const fs::path& root() const { return root_; }
  const Geometry& geometry() const { return geo_; }
  const DbIndex& index() const { return index_; }

  bool has_values(Variant v) const {
    const auto it = index_.backward.find(std::string(to_string(v)));
    return it != index_.backward.end() && it->second.complete;
  }

  /// Ages that have a partition on disk, increasing.
  std::vector<std::uint64_t> ages() const {
    std::vector<std::uint64_t> out;
    for (const auto& a : index_.ages)
      if (has_manifest(root_, geo_, a.age)) out.push_back(a.age);
    return out;
  }

  std::shared_ptr<const LoadedPartition> partition(std::uint64_t age) const {
    std::lock_guard lock(mutex_);
    auto& slot = partitions_[age];
    if (!slot) slot = std::make_shared<const LoadedPartition>(read_partition(root_, geo_, age));
    return slot;
  }

  std::shared_ptr<const QuantizedValueTable> values(std::uint64_t age, Variant v) const {
    const auto p = partition(age);
    std::lock_guard lock(mutex_);
    auto& slot = values_[{age, int(v)}];
    if (!slot)
      slot = std::make_shared<const QuantizedValueTable>(read_values(root_, geo_, age, v, p->manifest));
    return slot;
  }

  std::vector<StateCode> codes(std::uint64_t age) const {
    if (!has_manifest(root_, geo_, age)) return {};
    return decode_partition(geo_, *partition(age));
  }

  /// Rank of a canonical afterstate within its age partition.
  std::optional<std::size_t> rank(StateCode canonical) const {
    const std::uint64_t age = age_of(canonical);
    if (age < 4 || age % 2 || !has_manifest(root_, geo_, age)) return std::nullopt;
    const auto p = partition(age);
    CompactCode u;
    try {
      u = compress_code(geo_, canonical, age);
    } catch (const EncodingError&) {
      return std::nullopt;
    }
    return p->set.rank(u.value);
  }

  /// Dequantized value of a canonical afterstate, nullopt when absent.
  std::optional<double> value(StateCode canonical, Variant v = Variant::standard) const {
    const auto r = rank(canonical);
    if (!r) return std::nullopt;
    return values(age_of(canonical), v)->value(*r);
  }

  /// Drops cached payloads (e.g. after files were modified on disk).
  void clear_cache() const {
    std::lock_guard lock(mutex_);
    partitions_.clear();
    values_.clear();
  }

 private:
  fs::path root_;
  Geometry geo_;
  DbIndex index_;
  mutable std::mutex mutex_;
  mutable std::map<std::uint64_t, std::shared_ptr<const LoadedPartition>> partitions_;
  mutable std::map<std::pair<std::uint64_t, int>, std::shared_ptr<const QuantizedValueTable>> values_;
};

}  // namespace agesolver
