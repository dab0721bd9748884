#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "fractal_stats.hpp"
#include "gaussian_field.hpp"
#include "gmc_measure.hpp"
#include "io.hpp"
#include "lfpp_metric.hpp"
#include "mating_of_trees.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace lqglab {

inline constexpr const char* kCodeVersion = "0.1.0";

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"covariance", "dimension",    "ball-volume",
                                              "content-ratio", "weyl",      "coord-change",
                                              "crt-dimension", "arcsine",   "exp-functional"};
  return names;
}

struct ExperimentConfig {
  std::string experiment;
  double gamma = std::sqrt(8.0 / 3.0);
  std::optional<double> d_gamma;
  std::optional<double> xi;
  std::size_t n = 64;
  double delta = 1.0 / 16.0;
  std::vector<double> eps_list;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = ".";
  std::size_t parallelism = 1;

  // Experiment knobs.
  std::string field = "gff";        // gff | cone | flat
  double mollify = 0.0;             // 0 -> 2 delta
  std::string eps_mode = "relative";  // eps_list in units of the characteristic distance, or absolute
  double scale = 0.5;               // coord-change r
  double shift = 1.0;               // weyl constant
  double kappa_prime = 6.0;
  double a = 1.0;
  double T = 1.0;
  double dt = 1e-4;
  double crt_eps = 1e-3;
  std::size_t intervals = 33;
  std::size_t centers = 5;
  std::string cache_dir;

  /// xi from whichever of (d_gamma, xi) was supplied.
  [[nodiscard]] double resolved_xi() const { return xi ? *xi : gamma / *d_gamma; }
  [[nodiscard]] double resolved_d() const { return d_gamma ? *d_gamma : gamma / *xi; }
  [[nodiscard]] double mollify_eps() const { return mollify > 0.0 ? mollify : 2.0 * delta; }
  [[nodiscard]] GridSpec spec() const { return {n, delta}; }
};

inline bool needs_xi(const std::string& experiment) {
  return experiment == "dimension" || experiment == "ball-volume" || experiment == "content-ratio" ||
         experiment == "weyl" || experiment == "exp-functional";
}

inline void validate(const ExperimentConfig& c) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ValidationError("unknown experiment '" + c.experiment + "'; choose one of: " + list);
  }
  require(!c.seeds.empty(), "config: seeds must be nonempty");
  require(std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() == c.seeds.size(),
          "config: seeds must be distinct");
  require(c.gamma > 0.0 && c.gamma < 2.0, "config: gamma must lie in (0, 2)");
  if (needs_xi(c.experiment)) {
    require(c.d_gamma.has_value() != c.xi.has_value(), "config: supply exactly one of d_gamma and xi");
    if (c.d_gamma) require(*c.d_gamma > 2.0, "config: d_gamma must exceed 2");
    if (c.xi) require(*c.xi > 0.0, "config: xi must be positive");
  }
  require(c.field == "gff" || c.field == "cone" || c.field == "flat", "config: field must be gff, cone or flat");
  require(c.eps_mode == "relative" || c.eps_mode == "absolute", "config: eps_mode must be relative or absolute");
  require(c.parallelism >= 1, "config: parallelism must be at least 1");
  for (double e : c.eps_list) require(e > 0.0, "config: eps_list entries must be positive");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Seeds as "1,2,5" or an inclusive range "1..100" (mixable).
inline std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& part : detail::split(v, ',')) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(detail::to_u64("seeds", part));
      continue;
    }
    const auto lo = detail::to_u64("seeds", detail::trim(part.substr(0, dots)));
    const auto hi = detail::to_u64("seeds", detail::trim(part.substr(dots + 2)));
    require(lo <= hi && hi - lo < 100000000ULL, "config: bad seed range " + part);
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
  }
  return out;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : detail::split(v, ',')) out.push_back(detail::to_double(key, part));
  return out;
}

inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using detail::to_double;
  using detail::to_u64;
  if (key == "experiment") c.experiment = value;
  else if (key == "gamma") c.gamma = to_double(key, value);
  else if (key == "d_gamma") c.d_gamma = to_double(key, value);
  else if (key == "xi") c.xi = to_double(key, value);
  else if (key == "n") c.n = to_u64(key, value);
  else if (key == "delta") c.delta = to_double(key, value);
  else if (key == "eps_list") c.eps_list = parse_list(key, value);
  else if (key == "seeds") c.seeds = parse_seeds(value);
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "parallelism" || key == "jobs") c.parallelism = to_u64(key, value);
  else if (key == "field") c.field = value;
  else if (key == "mollify") c.mollify = to_double(key, value);
  else if (key == "eps_mode") c.eps_mode = value;
  else if (key == "scale") c.scale = to_double(key, value);
  else if (key == "shift") c.shift = to_double(key, value);
  else if (key == "kappa_prime") c.kappa_prime = to_double(key, value);
  else if (key == "a") c.a = to_double(key, value);
  else if (key == "T") c.T = to_double(key, value);
  else if (key == "dt") c.dt = to_double(key, value);
  else if (key == "crt_eps") c.crt_eps = to_double(key, value);
  else if (key == "intervals") c.intervals = to_u64(key, value);
  else if (key == "centers") c.centers = to_u64(key, value);
  else if (key == "cache_dir") c.cache_dir = value;
  else throw ValidationError("config: unknown key '" + key + "'");
}

/// Flat "key = value" text; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& c, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  ExperimentConfig c;
  apply_config_text(c, ss.str());
  return c;
}

inline nlohmann::json config_echo(const ExperimentConfig& c) {
  nlohmann::json j{{"experiment", c.experiment}, {"gamma", c.gamma},       {"n", c.n},
                   {"delta", c.delta},           {"eps_list", c.eps_list}, {"field", c.field},
                   {"mollify", c.mollify_eps()}, {"eps_mode", c.eps_mode}, {"scale", c.scale},
                   {"shift", c.shift},           {"kappa_prime", c.kappa_prime}, {"a", c.a},
                   {"T", c.T},                   {"dt", c.dt},             {"crt_eps", c.crt_eps},
                   {"intervals", c.intervals},   {"centers", c.centers}};
  if (c.d_gamma) j["d_gamma"] = *c.d_gamma;
  if (c.xi) j["xi"] = *c.xi;
  return j;
}

/// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t field_cache_key(FieldKind kind, const GridSpec& spec, double gamma, std::uint64_t seed) {
  std::uint64_t h = fnv1a(&kind, sizeof kind);
  const std::uint64_t n = spec.n;
  h = fnv1a(&n, sizeof n, h);
  h = fnv1a(&spec.delta, sizeof spec.delta, h);
  const double ox = spec.origin.real();
  const double oy = spec.origin.imag();
  h = fnv1a(&ox, sizeof ox, h);
  h = fnv1a(&oy, sizeof oy, h);
  h = fnv1a(&gamma, sizeof gamma, h);
  return fnv1a(&seed, sizeof seed, h);
}

inline GridField sample_field(FieldKind kind, const GridSpec& spec, double gamma, std::uint64_t seed) {
  GridField f = kind == FieldKind::QuantumCone ? sample_quantum_cone(spec, gamma, seed) : sample_gff(spec, seed);
  f.gamma = gamma;
  f.seed = seed;
  return f;
}

/// Content-hash keyed field cache. A missing or unreadable entry is sampled
/// afresh and rewritten; unreadable ones add a warning.
class FieldCache {
 public:
  explicit FieldCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  [[nodiscard]] std::string path_for(std::uint64_t key) const {
    char name[40];
    std::snprintf(name, sizeof name, "field-%016llx.lqgf", static_cast<unsigned long long>(key));
    return (std::filesystem::path(dir_) / name).string();
  }

  GridField get(FieldKind kind, const GridSpec& spec, double gamma, std::uint64_t seed,
                std::vector<std::string>* warnings = nullptr) {
    if (dir_.empty()) return sample_field(kind, spec, gamma, seed);
    const std::string path = path_for(field_cache_key(kind, spec, gamma, seed));
    if (std::filesystem::exists(path)) {
      try {
        GridField f = io::load(path, io::read_field);
        if (f.kind == kind && f.spec == spec && f.gamma == gamma && f.seed == seed) return f;
        throw ValidationError("header does not match the requested field");
      } catch (const std::exception& e) {
        if (warnings != nullptr) warnings->push_back("field cache: recomputing " + path + " (" + e.what() + ")");
      }
    }
    GridField f = sample_field(kind, spec, gamma, seed);
    const std::string tmp = path + ".tmp" + std::to_string(seed);
    io::save(tmp, f, io::write_field);
    std::filesystem::rename(tmp, path);
    return f;
  }

 private:
  std::string dir_;
};

struct ResultRecord {
  std::string experiment;
  nlohmann::json parameters;
  std::vector<nlohmann::json> rows;  // per-sample statistics, flat objects
  nlohmann::json aggregate;
  double wall_clock_seconds = 0.0;
  std::string code_version = kCodeVersion;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> warnings;
  std::vector<std::string> files;
};

/// Distance from the origin cell to the rim of the inner half-grid.
inline double characteristic_distance(const WeightedGrid& graph) {
  const GridSpec& spec = graph.spec();
  const auto rim = inner_boundary(inner_half(spec)).members();
  const CellIndex src[] = {spec.nearest_cell(spec.origin)};
  const DistanceField d = run_dijkstra(graph, src);
  double best = kInfinity;
  for (CellIndex c : rim) best = std::min(best, d[c]);
  return best;
}

/// The four quadrant squares of the inner half-grid.
inline std::vector<Region> inner_quadrants(const GridSpec& spec) {
  const double q = spec.extent() / 4.0;
  const Complex o = spec.origin;
  return {Region::square(o + Complex(-q, -q), q, "q1"), Region::square(o + Complex(q, -q), q, "q2"),
          Region::square(o + Complex(-q, q), q, "q3"), Region::square(o + Complex(q, q), q, "q4")};
}

namespace detail {

struct Sample {
  GridField smooth;
  WeightedGrid graph;
  GridMeasure measure;
};

inline FieldKind kind_of(const ExperimentConfig& c) {
  return c.field == "cone" ? FieldKind::QuantumCone : FieldKind::WholePlaneGFF;
}

inline GridField raw_field(const ExperimentConfig& c, FieldCache& cache, std::uint64_t seed,
                           std::vector<std::string>* warnings) {
  if (c.field == "flat") {
    GridField f(c.spec(), std::vector<double>(c.spec().size(), 0.0), FieldKind::Derived);
    f.gamma = c.gamma;
    f.seed = seed;
    return f;
  }
  return cache.get(kind_of(c), c.spec(), c.gamma, seed, warnings);
}

inline Sample prepare(const ExperimentConfig& c, const GridField& raw) {
  const double m = c.mollify_eps();
  GridField smooth = heat_kernel_mollify(raw, m);
  WeightedGrid graph = lfpp_graph_from_mollified(smooth, c.resolved_xi(), m);
  GridMeasure measure = gmc_from_mollified(smooth, c.gamma, m);
  return {std::move(smooth), std::move(graph), std::move(measure)};
}

inline std::vector<double> scaled_eps(const ExperimentConfig& c, const WeightedGrid& g) {
  require(c.eps_list.size() >= 3, "config: eps_list needs at least 3 levels");
  if (c.eps_mode == "absolute") return c.eps_list;
  const double unit = characteristic_distance(g);
  std::vector<double> out;
  for (double e : c.eps_list) out.push_back(e * unit);
  return out;
}

/// Probe cells for the covariance experiment: a 4 x 4 lattice with spacing
/// at least 4 delta.
inline std::vector<CellIndex> covariance_probes(const GridSpec& spec) {
  const std::size_t step = std::max<std::size_t>(4, spec.n / 4);
  std::vector<CellIndex> out;
  for (std::size_t k = step / 2; k < spec.n; k += step)
    for (std::size_t j = step / 2; j < spec.n; j += step) out.push_back(spec.index(j, k));
  return out;
}

inline double col(const nlohmann::json& row, const std::string& key) { return row.at(key).get<double>(); }

inline nlohmann::json median_iqr(std::vector<double> xs) {
  return {{"median", stats::median(xs)},
          {"q25", stats::quantile(xs, 0.25)},
          {"q75", stats::quantile(xs, 0.75)},
          {"mean", stats::mean(xs)},
          {"stderr", xs.size() > 1 ? stats::standard_error(xs) : 0.0}};
}

}  // namespace detail

/// Per-seed rows for the configured experiment.
inline std::vector<nlohmann::json> experiment_rows(const ExperimentConfig& c, std::uint64_t seed, FieldCache& cache,
                                                   std::vector<std::string>& warnings) {
  using nlohmann::json;
  const std::string& e = c.experiment;
  std::vector<json> rows;
  if (e == "covariance") {
    require(c.n <= kExactSamplerMaxSide, "covariance: n must be at most 64 (exact sampler)");
    const GridField f = detail::raw_field(c, cache, seed, &warnings);
    json row{{"seed", seed}};
    const auto probes = detail::covariance_probes(c.spec());
    for (std::size_t i = 0; i < probes.size(); ++i) row["p" + std::to_string(i)] = f[probes[i]];
    rows.push_back(row);
  } else if (e == "dimension") {
    const auto s = detail::prepare(c, detail::raw_field(c, cache, seed, &warnings));
    const auto eps = detail::scaled_eps(c, s.graph);
    const auto counts = greedy_cover_counts(inner_half(c.spec()), s.graph, eps);
    for (std::size_t i = 0; i < eps.size(); ++i)
      rows.push_back({{"seed", seed}, {"level", i}, {"eps", eps[i]}, {"count", counts[i]}});
  } else if (e == "ball-volume") {
    const auto s = detail::prepare(c, detail::raw_field(c, cache, seed, &warnings));
    const GridSpec spec = c.spec();
    const double q = spec.extent() / 8.0;
    std::vector<Complex> pts{spec.origin, spec.origin + Complex(q, q), spec.origin + Complex(-q, q),
                             spec.origin + Complex(q, -q), spec.origin + Complex(-q, -q)};
    pts.resize(std::min(pts.size(), std::max<std::size_t>(1, c.centers)));
    std::vector<CellIndex> centers;
    for (Complex z : pts) centers.push_back(spec.nearest_cell(z));
    const auto rim = inner_boundary(inner_half(spec)).members();
    double rmax = kInfinity;
    for (CellIndex z : centers) {
      const CellIndex src[] = {z};
      const DistanceField d = run_dijkstra(s.graph, src);
      for (CellIndex cidx : rim) rmax = std::min(rmax, d[cidx]);
    }
    std::vector<double> radii;
    for (int k = 3; k >= 0; --k) radii.push_back(rmax * std::ldexp(1.0, -k));
    const auto res = ball_volume_scaling(s.measure, s.graph, centers, radii);
    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
    rows.push_back({{"seed", seed},
                    {"slope", res.fit.slope},
                    {"stderr", res.fit.std_error},
                    {"r2", res.fit.r2},
                    {"sup_ratio", res.sup_ratio},
                    {"inf_ratio", res.inf_ratio},
                    {"rmax", rmax},
                    {"centers", res.centers.size()}});
  } else if (e == "content-ratio") {
    const auto s = detail::prepare(c, detail::raw_field(c, cache, seed, &warnings));
    const auto eps = detail::scaled_eps(c, s.graph);
    const auto regions = inner_quadrants(c.spec());
    const auto table = content_ratio_experiment(s.measure, s.graph, c.resolved_d(), regions, eps);
    warnings.insert(warnings.end(), table.warnings.begin(), table.warnings.end());
    for (const auto& r : table.rows) {
      const auto level = static_cast<std::size_t>(std::find(eps.begin(), eps.end(), r.eps) - eps.begin());
      rows.push_back({{"seed", seed}, {"level", level}, {"eps", r.eps}, {"region", r.region},
                      {"count", r.count}, {"mass", r.mass}, {"ratio", r.ratio}});
    }
  } else if (e == "weyl") {
    const auto s = detail::prepare(c, detail::raw_field(c, cache, seed, &warnings));
    const GridField shift = field_from_function(c.spec(), [&](Complex) { return c.shift; });
    const WeightedGrid moved = weyl_scale(s.graph, shift);
    const CellIndex src[] = {c.spec().nearest_cell(c.spec().origin)};
    const auto d0 = run_dijkstra(s.graph, src);
    const auto d1 = run_dijkstra(moved, src);
    const double factor = std::exp(c.resolved_xi() * c.shift);
    double dist_err = 0.0;
    for (CellIndex v = 0; v < d0.dist.size(); ++v)
      if (d0[v] > 0.0) dist_err = std::max(dist_err, std::abs(d1[v] / (factor * d0[v]) - 1.0));
    GridField lifted = s.smooth;
    for (double& v : lifted.values) v += c.shift;
    const GridMeasure m1 = gmc_from_mollified(lifted, c.gamma, c.mollify_eps());
    const double mass_err = std::abs(m1.total() / (std::exp(c.gamma * c.shift) * s.measure.total()) - 1.0);
    rows.push_back({{"seed", seed}, {"distance_rel_err", dist_err}, {"mass_rel_err", mass_err}});
  } else if (e == "coord-change") {
    const GridField f = detail::raw_field(c, cache, seed, &warnings);
    const auto rep = coordinate_change_check(f, c.scale, {0.0, 0.0}, c.gamma, c.mollify_eps());
    rows.push_back({{"seed", seed}, {"max_discrepancy", rep.max_discrepancy},
                    {"median_discrepancy", rep.median_discrepancy}});
  } else if (e == "crt-dimension") {
    const auto p = sample_lr(c.kappa_prime, c.a, c.T, c.dt, seed);
    const auto g = mated_crt_graph(p, c.crt_eps);
    const std::size_t diam = estimate_diameter(g);
    std::vector<std::size_t> radii;
    for (std::size_t r = 2; 4 * r <= diam; r *= 2) radii.push_back(r);
    require(radii.size() >= 3, "crt-dimension: graph too small for three dyadic radii");
    // Centres spread over the middle of the time window.
    std::vector<std::size_t> centers;
    const std::size_t k = std::max<std::size_t>(1, c.centers);
    for (std::size_t i = 0; i < k; ++i) centers.push_back(g.num_cells * (2 * i + 1) / (2 * k));
    BallGrowthResult res;
    for (;;) {
      try {
        res = graph_ball_growth(g, centers, radii);
        break;
      } catch (const ValidationError&) {
        radii.pop_back();
        if (radii.size() < 3) throw;
      }
    }
    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
    rows.push_back({{"seed", seed}, {"slope", res.fit.slope}, {"stderr", res.fit.std_error},
                    {"mean_degree", g.mean_degree()}, {"cells", g.num_cells}, {"diameter", diam},
                    {"rmax", radii.back()}});
  } else if (e == "arcsine") {
    const auto p = sample_lr(c.kappa_prime, c.a, c.T, c.dt, seed);
    const auto flags = boundary_contact_flags(p, BoundaryComponent::L, c.intervals);
    json row{{"seed", seed}};
    for (std::size_t k = 0; k < flags.size(); ++k) row["k" + std::to_string(k)] = flags[k];
    rows.push_back(row);
  } else if (e == "exp-functional") {
    const double xi = c.resolved_xi();
    const double Q = q_constant(c.gamma);
    const double rate = xi * Q - xi * xi / 2.0;
    rows.push_back({{"seed", seed}, {"value", exponential_functional(xi, Q, 50.0 / rate, c.dt, seed)}});
  }
  return rows;
}

/// Aggregate statistics computed from the per-sample rows alone.
inline nlohmann::json aggregate_rows(const ExperimentConfig& c, const std::vector<nlohmann::json>& rows) {
  using detail::col;
  using nlohmann::json;
  const std::string& e = c.experiment;
  json agg{{"samples", c.seeds.size()}};
  if (e == "covariance") {
    const GridSpec spec = c.spec();
    const auto probes = detail::covariance_probes(spec);
    const std::size_t m = probes.size();
    const auto N = static_cast<double>(rows.size());
    std::vector<std::vector<double>> v(m);
    for (const auto& r : rows)
      for (std::size_t i = 0; i < m; ++i) v[i].push_back(col(r, "p" + std::to_string(i)));
    double max_abs = 0.0;
    double max_z = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        std::vector<double> prod(rows.size());
        for (std::size_t s = 0; s < rows.size(); ++s) prod[s] = v[i][s] * v[j][s];
        const double emp = stats::mean(prod);
        const double se = rows.size() > 1 ? stats::stddev(prod) / std::sqrt(N) : 0.0;
        const double g = covariance_G(spec.center(probes[i]), spec.center(probes[j]));
        max_abs = std::max(max_abs, std::abs(emp - g));
        if (se > 0.0) max_z = std::max(max_z, std::abs(emp - g) / se);
        ++pairs;
      }
    }
    agg["pairs"] = pairs;
    agg["max_abs_error"] = max_abs;
    agg["max_z"] = max_z;
  } else if (e == "dimension") {
    std::map<std::size_t, std::vector<double>> by_level;
    std::map<std::uint64_t, std::vector<std::pair<double, double>>> by_seed;
    for (const auto& r : rows) {
      by_level[r.at("level").get<std::size_t>()].push_back(col(r, "count"));
      by_seed[r.at("seed").get<std::uint64_t>()].emplace_back(col(r, "eps"), col(r, "count"));
    }
    std::vector<double> slopes;
    for (auto& [seed, pts] : by_seed) slopes.push_back(dimension_fit(pts).slope);
    agg["slope"] = detail::median_iqr(slopes);
    json levels = json::array();
    for (const auto& [lvl, counts] : by_level) {
      std::vector<double> logs;
      for (double x : counts) logs.push_back(std::log(x));
      levels.push_back({{"level", lvl}, {"eps_factor", c.eps_list.at(lvl)}, {"log_count", detail::median_iqr(logs)}});
    }
    agg["levels"] = levels;
  } else if (e == "ball-volume" || e == "crt-dimension") {
    std::vector<double> slopes;
    for (const auto& r : rows) slopes.push_back(col(r, "slope"));
    agg["slope"] = detail::median_iqr(slopes);
  } else if (e == "content-ratio") {
    std::map<std::pair<std::uint64_t, std::size_t>, std::vector<double>> groups;
    for (const auto& r : rows)
      groups[{r.at("seed").get<std::uint64_t>(), r.at("level").get<std::size_t>()}].push_back(col(r, "ratio"));
    std::map<std::size_t, std::vector<double>> cvs;
    for (const auto& [key, ratios] : groups) cvs[key.second].push_back(stats::coefficient_of_variation(ratios));
    json levels = json::array();
    for (const auto& [lvl, v] : cvs) levels.push_back({{"level", lvl}, {"eps_factor", c.eps_list.at(lvl)}, {"cv", detail::median_iqr(v)}});
    agg["levels"] = levels;
  } else if (e == "weyl") {
    double d = 0.0;
    double m = 0.0;
    for (const auto& r : rows) {
      d = std::max(d, col(r, "distance_rel_err"));
      m = std::max(m, col(r, "mass_rel_err"));
    }
    agg["max_distance_rel_err"] = d;
    agg["max_mass_rel_err"] = m;
  } else if (e == "coord-change") {
    std::vector<double> mx;
    for (const auto& r : rows) mx.push_back(col(r, "max_discrepancy"));
    agg["max_discrepancy"] = detail::median_iqr(mx);
  } else if (e == "arcsine") {
    std::vector<double> p(c.intervals, 0.0);
    for (const auto& r : rows)
      for (std::size_t k = 0; k < c.intervals; ++k) p[k] += col(r, "k" + std::to_string(k));
    double worst = 0.0;
    json prof = json::array();
    for (std::size_t k = 0; k < c.intervals; ++k) {
      p[k] /= static_cast<double>(rows.size());
      const double pred = arcsine_contact_probability(k);
      worst = std::max(worst, std::abs(p[k] - pred));
      prof.push_back({{"k", k}, {"empirical", p[k]}, {"predicted", pred}});
    }
    agg["profile"] = prof;
    agg["max_abs_deviation"] = worst;
  } else if (e == "exp-functional") {
    std::vector<double> xs;
    for (const auto& r : rows) xs.push_back(col(r, "value"));
    const double xi = c.resolved_xi();
    agg["mean"] = stats::mean(xs);
    agg["stderr"] = xs.size() > 1 ? stats::standard_error(xs) : 0.0;
    agg["predicted"] = exponential_functional_mean(xi, q_constant(c.gamma));
  }
  return agg;
}

inline std::string rows_csv(const std::vector<nlohmann::json>& rows) {
  std::ostringstream os;
  if (rows.empty()) return "";
  std::vector<std::string> keys;
  for (const auto& [k, v] : rows.front().items()) keys.push_back(k);
  for (std::size_t i = 0; i < keys.size(); ++i) os << (i ? "," : "") << keys[i];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const auto& v = r.at(keys[i]);
      os << (i ? "," : "");
      if (v.is_number_float()) os << io::fmt(v.get<double>());
      else if (v.is_string()) os << v.get<std::string>();
      else os << v.dump();
    }
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json record_json(const ResultRecord& r) {
  return {{"experiment", r.experiment},       {"parameters", r.parameters}, {"aggregate", r.aggregate},
          {"code_version", r.code_version},   {"seeds", r.seeds},           {"warnings", r.warnings},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

inline ResultRecord run_experiment(const ExperimentConfig& config) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  FieldCache cache(config.cache_dir);
  struct Job {
    std::vector<nlohmann::json> rows;
    std::vector<std::string> warnings;
  };
  const auto jobs = parallel_map(config.seeds.size(), config.parallelism, [&](std::size_t i) {
    Job j;
    j.rows = experiment_rows(config, config.seeds[i], cache, j.warnings);
    return j;
  });
  ResultRecord rec;
  rec.experiment = config.experiment;
  rec.parameters = config_echo(config);
  rec.seeds = config.seeds;
  for (const auto& j : jobs) {
    rec.rows.insert(rec.rows.end(), j.rows.begin(), j.rows.end());
    rec.warnings.insert(rec.warnings.end(), j.warnings.begin(), j.warnings.end());
  }
  rec.aggregate = aggregate_rows(config, rec.rows);
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    const auto base = std::filesystem::path(config.output_dir) / config.experiment;
    const std::string csv = base.string() + "_samples.csv";
    const std::string agg = base.string() + "_aggregate.json";
    std::ofstream(csv) << rows_csv(rec.rows);
    std::ofstream(agg) << record_json(rec).dump(2) << '\n';
    rec.files = {csv, agg};
  }
  return rec;
}

/// Plain-text (x, y, yerr) panels for plotting; one file per panel.
inline std::vector<std::string> emit_plot_data(const ResultRecord& rec, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  auto panel = [&](const std::string& name, const std::string& header,
                   const std::vector<std::array<double, 3>>& pts) {
    const std::string path = (std::filesystem::path(dir) / (rec.experiment + "_" + name + ".dat")).string();
    std::ofstream os(path);
    os << "# " << header << '\n';
    for (const auto& p : pts) os << io::fmt(p[0]) << ' ' << io::fmt(p[1]) << ' ' << io::fmt(p[2]) << '\n';
    files.push_back(path);
  };
  const auto& a = rec.aggregate;
  const std::string& e = rec.experiment;
  if (e == "dimension") {
    std::map<std::size_t, std::vector<std::pair<double, double>>> by_level;
    for (const auto& r : rec.rows)
      by_level[r.at("level").get<std::size_t>()].emplace_back(r.at("eps").get<double>(), r.at("count").get<double>());
    std::vector<std::array<double, 3>> pts;
    for (const auto& [lvl, v] : by_level) {
      std::vector<double> xs;
      std::vector<double> ys;
      for (const auto& [eps, cnt] : v) {
        xs.push_back(-std::log(eps));
        ys.push_back(std::log(cnt));
      }
      pts.push_back({stats::mean(xs), stats::mean(ys), ys.size() > 1 ? stats::standard_error(ys) : 0.0});
    }
    panel("fit", "log(1/eps) log(count) stderr", pts);
  } else if (e == "arcsine") {
    std::vector<std::array<double, 3>> pts;
    for (const auto& p : a.at("profile"))
      pts.push_back({p.at("k").get<double>(), p.at("empirical").get<double>(), p.at("predicted").get<double>()});
    panel("profile", "k empirical_p 1-(2/pi)arctan(sqrt(k))", pts);
  } else if (e == "content-ratio") {
    std::vector<std::array<double, 3>> pts;
    for (const auto& l : a.at("levels")) {
      const auto& cv = l.at("cv");
      pts.push_back({l.at("eps_factor").get<double>(), cv.at("median").get<double>(),
                     cv.at("q75").get<double>() - cv.at("q25").get<double>()});
    }
    panel("cv", "eps median_CV iqr", pts);
  } else if (e == "ball-volume" || e == "crt-dimension" || e == "coord-change" || e == "weyl" ||
             e == "exp-functional") {
    const std::string key = e == "coord-change" ? "max_discrepancy"
                            : e == "weyl"        ? "distance_rel_err"
                            : e == "exp-functional" ? "value"
                                                 : "slope";
    std::vector<std::array<double, 3>> pts;
    for (std::size_t i = 0; i < rec.rows.size(); ++i) {
      const auto& r = rec.rows[i];
      const double err = r.contains("stderr") ? r.at("stderr").get<double>() : 0.0;
      pts.push_back({static_cast<double>(i), r.at(key).get<double>(), err});
    }
    panel("samples", "sample " + key + " stderr", pts);
  } else if (e == "covariance") {
    const GridSpec spec(rec.parameters.at("n").get<std::size_t>(), rec.parameters.at("delta").get<double>());
    const auto probes = detail::covariance_probes(spec);
    std::vector<std::array<double, 3>> pts;
    const auto N = static_cast<double>(rec.rows.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
      for (std::size_t j = i + 1; j < probes.size(); ++j) {
        std::vector<double> prod;
        for (const auto& r : rec.rows)
          prod.push_back(r.at("p" + std::to_string(i)).get<double>() * r.at("p" + std::to_string(j)).get<double>());
        pts.push_back({covariance_G(spec.center(probes[i]), spec.center(probes[j])), stats::mean(prod),
                       prod.size() > 1 ? stats::stddev(prod) / std::sqrt(N) : 0.0});
      }
    }
    panel("pairs", "G empirical stderr", pts);
  }
  return files;
}

}  // namespace lqglab
