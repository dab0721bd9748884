#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "fractal_stats.hpp"
#include "gmc_measure.hpp"
#include "grid.hpp"
#include "mating_of_trees.hpp"

namespace lqglab::io {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint32_t kMaxGridSide = 1u << 15;

// Little-endian primitives, independent of host byte order.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void magic(const char (&tag)[5]) { os_.write(tag, 4); }
  template <class T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    auto u = std::bit_cast<U>(value);
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
    os_.write(bytes.data(), bytes.size());
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void expect_magic(const char (&tag)[5]) {
    char got[4];
    is_.read(got, 4);
    if (!is_ || std::memcmp(got, tag, 4) != 0) throw ValidationError(std::string("bad magic, expected ") + tag);
  }
  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    std::array<unsigned char, sizeof(T)> bytes{};
    is_.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is_) throw ValidationError("truncated file");
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(bytes[i]) << (8 * i);
    return std::bit_cast<T>(u);
  }
  void expect_version() {
    const auto v = get<std::uint16_t>();
    if (v != kFormatVersion) throw ValidationError("unsupported format version " + std::to_string(v));
  }
  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes after payload");
  }

 private:
  std::istream& is_;
};

inline void write_spec(Writer& w, const GridSpec& s) {
  w.put(static_cast<std::uint32_t>(s.n));
  w.put(s.delta);
  w.put(s.origin.real());
  w.put(s.origin.imag());
}

inline GridSpec read_spec(Reader& r) {
  const auto n = r.get<std::uint32_t>();
  if (n > kMaxGridSide) throw ValidationError("grid side " + std::to_string(n) + " is implausibly large");
  const double delta = r.get<double>();
  const double ox = r.get<double>();
  const double oy = r.get<double>();
  return GridSpec(n, delta, {ox, oy});
}

/// LQGF: magic, u16 version, u8 kind, u32 n, f64 delta, f64 x2 origin, f64 gamma, u64 seed, n^2 f64 values.
inline void write_field(std::ostream& os, const GridField& f) {
  Writer w(os);
  w.magic("LQGF");
  w.put(kFormatVersion);
  w.put(static_cast<std::uint8_t>(f.kind));
  write_spec(w, f.spec);
  w.put(f.gamma);
  w.put(f.seed);
  for (double v : f.values) w.put(v);
}

inline GridField read_field(std::istream& is) {
  Reader r(is);
  r.expect_magic("LQGF");
  r.expect_version();
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw ValidationError("LQGF: unknown field kind");
  const GridSpec spec = read_spec(r);
  GridField f;
  f.spec = spec;
  f.kind = static_cast<FieldKind>(kind);
  f.gamma = r.get<double>();
  f.seed = r.get<std::uint64_t>();
  f.values.resize(spec.size());
  for (double& v : f.values) v = r.get<double>();
  r.expect_end();
  return f;
}

/// LQGM: magic, u16 version, spec header, f64 gamma, f64 eps, n^2 f64 masses.
inline void write_measure(std::ostream& os, const GridMeasure& m) {
  Writer w(os);
  w.magic("LQGM");
  w.put(kFormatVersion);
  write_spec(w, m.spec);
  w.put(m.gamma);
  w.put(m.eps);
  for (double v : m.masses) w.put(v);
}

inline GridMeasure read_measure(std::istream& is) {
  Reader r(is);
  r.expect_magic("LQGM");
  r.expect_version();
  GridMeasure m;
  m.spec = read_spec(r);
  m.gamma = r.get<double>();
  m.eps = r.get<double>();
  m.masses.resize(m.spec.size());
  for (double& v : m.masses) v = r.get<double>();
  r.expect_end();
  return m;
}

/// LQGS: magic, u16 version, u32 n, u32 run count, u32 runs alternating
/// absent/present starting with absent (a leading run may be 0).
inline void write_cellset(std::ostream& os, const CellSet& s) {
  std::vector<std::uint32_t> runs;
  std::uint8_t state = 0;
  std::uint32_t len = 0;
  for (auto m : s.mask) {
    const std::uint8_t v = m != 0 ? 1 : 0;
    if (v != state) {
      runs.push_back(len);
      len = 0;
      state = v;
    }
    ++len;
  }
  runs.push_back(len);
  Writer w(os);
  w.magic("LQGS");
  w.put(kFormatVersion);
  w.put(static_cast<std::uint32_t>(s.n));
  w.put(static_cast<std::uint32_t>(runs.size()));
  for (auto r : runs) w.put(r);
}

inline CellSet read_cellset(std::istream& is) {
  Reader r(is);
  r.expect_magic("LQGS");
  r.expect_version();
  const auto n = r.get<std::uint32_t>();
  const auto count = r.get<std::uint32_t>();
  CellSet s(n);
  std::size_t pos = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    if (pos + len > s.mask.size()) throw ValidationError("LQGS: runs overflow the grid");
    if (i % 2 == 1) std::fill_n(s.mask.begin() + static_cast<long>(pos), len, std::uint8_t{1});
    pos += len;
  }
  if (pos != s.mask.size()) throw ValidationError("LQGS: runs do not cover the grid");
  r.expect_end();
  return s;
}

/// LQGB: magic, u16 version, f64 kappa', f64 a, f64 dt, u64 sample count, interleaved (L, R) f64 pairs.
inline void write_lr(std::ostream& os, const BoundaryLengthProcess& p) {
  Writer w(os);
  w.magic("LQGB");
  w.put(kFormatVersion);
  w.put(p.kappa_prime);
  w.put(p.a);
  w.put(p.dt);
  w.put(static_cast<std::uint64_t>(p.L.size()));
  for (std::size_t i = 0; i < p.L.size(); ++i) {
    w.put(p.L[i]);
    w.put(p.R[i]);
  }
}

inline BoundaryLengthProcess read_lr(std::istream& is) {
  Reader r(is);
  r.expect_magic("LQGB");
  r.expect_version();
  BoundaryLengthProcess p;
  p.kappa_prime = r.get<double>();
  p.a = r.get<double>();
  p.dt = r.get<double>();
  const auto count = r.get<std::uint64_t>();
  if (count == 0) throw ValidationError("LQGB: empty path");
  p.L.resize(count);
  p.R.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    p.L[i] = r.get<double>();
    p.R[i] = r.get<double>();
  }
  r.expect_end();
  p.T = static_cast<double>(count - 1) * p.dt;
  return p;
}

template <class T, class WriteFn>
void save(const std::string& path, const T& value, WriteFn write) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open " + path + " for writing");
  write(os, value);
  if (!os) throw ValidationError("write to " + path + " failed");
}

template <class ReadFn>
auto load(const std::string& path, ReadFn read) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path);
  return read(is);
}

inline Complex parse_point(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2)
    throw ValidationError(std::string("regions: '") + key + "' must be [x, y]");
  return {j[key][0].get<double>(), j[key][1].get<double>()};
}

inline double parse_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) throw ValidationError(std::string("regions: missing number '") + key + "'");
  return j[key].get<double>();
}

/// regions.json: [{"shape": "disk", "center": [x, y], "radius": r},
///                {"shape": "square", "center": [x, y], "half": h},
///                {"shape": "annulus", "center": [x, y], "inner": a, "outer": b}], optional "label".
inline std::vector<Region> parse_regions(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("regions: ") + e.what());
  }
  if (!doc.is_array()) throw ValidationError("regions: top level must be a list");
  std::vector<Region> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    if (!e.is_object() || !e.contains("shape") || !e["shape"].is_string())
      throw ValidationError("regions: every entry needs a string 'shape'");
    const std::string shape = e["shape"].get<std::string>();
    const std::string label = e.contains("label") ? e["label"].get<std::string>() : shape + std::to_string(i);
    const Complex c = parse_point(e, "center");
    if (shape == "disk") {
      out.push_back(Region::disk(c, parse_number(e, "radius"), label));
    } else if (shape == "square") {
      out.push_back(Region::square(c, parse_number(e, "half"), label));
    } else if (shape == "annulus") {
      out.push_back(Region::annulus(c, parse_number(e, "inner"), parse_number(e, "outer"), label));
    } else {
      throw ValidationError("regions: unknown shape '" + shape + "' (disk, square, annulus)");
    }
  }
  return out;
}

inline std::vector<Region> load_regions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_regions(ss.str());
}

/// Shortest decimal that round-trips.
inline std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

inline void write_content_csv(std::ostream& os, const ContentRatioTable& t) {
  os << "eps,region,count,mass,ratio\n";
  for (const auto& r : t.rows) os << fmt(r.eps) << ',' << r.region << ',' << r.count << ',' << fmt(r.mass) << ',' << fmt(r.ratio) << '\n';
}

inline nlohmann::json content_json(const ContentRatioTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"eps", r.eps}, {"region", r.region}, {"count", r.count}, {"mass", r.mass}, {"ratio", r.ratio}});
  return {{"rows", rows}, {"eps", t.eps}, {"cv", t.cv}, {"warnings", t.warnings}};
}

}  // namespace lqglab::io
