#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "fractal_stats.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace lqglab {

/// Correlated boundary-length pair sampled at times 0, dt, 2dt, ...
struct BoundaryLengthProcess {
  double kappa_prime = 6.0;
  double a = 1.0;
  double dt = 1e-3;
  double T = 1.0;
  std::vector<double> L;
  std::vector<double> R;

  [[nodiscard]] std::size_t steps() const { return L.empty() ? 0 : L.size() - 1; }
};

/// Correlation of the increments, -cos(4 pi / kappa').
inline double lr_correlation(double kappa_prime) { return -std::cos(4.0 * std::numbers::pi / kappa_prime); }

inline BoundaryLengthProcess sample_lr(double kappa_prime, double a, double T, double dt, std::uint64_t seed) {
  require(kappa_prime > 4.0, "sample_lr: kappa' must exceed 4");
  require(a > 0.0, "sample_lr: variance rate a must be positive");
  require(T > 0.0 && dt > 0.0, "sample_lr: T and dt must be positive");
  require(dt <= 1e-3 * T * (1.0 + 1e-12), "sample_lr: dt must be at most 1e-3 T");
  const auto steps = static_cast<std::size_t>(std::llround(T / dt));
  const double rho = lr_correlation(kappa_prime);
  const double sd = std::sqrt(a * dt);
  const double perp = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  BoundaryLengthProcess p;
  p.kappa_prime = kappa_prime;
  p.a = a;
  p.dt = dt;
  p.T = static_cast<double>(steps) * dt;
  p.L.resize(steps + 1, 0.0);
  p.R.resize(steps + 1, 0.0);
  GaussianSource g(derive_stream(seed, 20));
  for (std::size_t i = 0; i < steps; ++i) {
    const double z1 = g();
    const double z2 = g();
    p.L[i + 1] = p.L[i] + sd * z1;
    p.R[i + 1] = p.R[i] + sd * (rho * z1 + perp * z2);
  }
  return p;
}

/// Simple undirected graph on cells 0..num_cells-1 in CSR form.
struct MatedCrtGraph {
  double eps = 0.0;
  std::size_t num_cells = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j, sorted, unique
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> neighbors;

  [[nodiscard]] std::span<const std::size_t> adjacent(std::size_t i) const {
    return {neighbors.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  [[nodiscard]] std::size_t degree(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  [[nodiscard]] double mean_degree() const {
    return num_cells == 0 ? 0.0 : 2.0 * static_cast<double>(edges.size()) / static_cast<double>(num_cells);
  }
};

/// Pairs (i, j), i < j, with j = i + 1 or max(m_i, m_j) <= min(m_{i+1..j-1}).
/// Monotone stack of indices whose value is <= everything after them.
inline void adjacency_from_minima(std::span<const double> m, std::vector<std::pair<std::size_t, std::size_t>>& out) {
  std::vector<std::size_t> stack;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (!stack.empty()) {
      out.emplace_back(stack.back(), j);
      // The minimum strictly between stack[a] and j sits at stack[a+1].
      for (std::size_t a = stack.size() - 1; a-- > 0;) {
        if (m[stack[a + 1]] < m[j]) break;
        out.emplace_back(stack[a], j);
      }
    }
    while (!stack.empty() && m[stack.back()] > m[j]) stack.pop_back();
    stack.push_back(j);
  }
}

inline MatedCrtGraph graph_from_edges(std::size_t num_cells, double eps,
                                      std::vector<std::pair<std::size_t, std::size_t>> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  MatedCrtGraph g;
  g.eps = eps;
  g.num_cells = num_cells;
  g.offsets.assign(num_cells + 1, 0);
  for (const auto& [i, j] : edges) {
    ++g.offsets[i + 1];
    ++g.offsets[j + 1];
  }
  for (std::size_t i = 0; i < num_cells; ++i) g.offsets[i + 1] += g.offsets[i];
  g.neighbors.resize(g.offsets.back());
  std::vector<std::size_t> fill(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& [i, j] : edges) {
    g.neighbors[fill[i]++] = j;
    g.neighbors[fill[j]++] = i;
  }
  for (std::size_t i = 0; i < num_cells; ++i)
    std::sort(g.neighbors.begin() + static_cast<long>(g.offsets[i]), g.neighbors.begin() + static_cast<long>(g.offsets[i + 1]));
  g.edges = std::move(edges);
  return g;
}

/// Per-cell minima of a path sampled every dt; cell i covers [i eps, (i+1) eps]
/// including both endpoints.
inline std::vector<double> cell_minima(std::span<const double> z, double dt, double eps, std::size_t cells) {
  std::vector<double> m(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const auto lo = static_cast<std::size_t>(std::llround(static_cast<double>(i) * eps / dt));
    const auto hi = std::min(z.size() - 1, static_cast<std::size_t>(std::llround(static_cast<double>(i + 1) * eps / dt)));
    m[i] = *std::min_element(z.begin() + static_cast<long>(lo), z.begin() + static_cast<long>(hi) + 1);
  }
  return m;
}

inline constexpr std::size_t kMinCrtCells = 100;

inline MatedCrtGraph mated_crt_graph(const BoundaryLengthProcess& p, double eps) {
  require(eps >= 10.0 * p.dt * (1.0 - 1e-12), "mated_crt_graph: eps must be at least 10 dt");
  const auto cells = static_cast<std::size_t>(std::floor(p.T / eps + 1e-9));
  require(cells >= kMinCrtCells, "mated_crt_graph: fewer than 100 cells");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  adjacency_from_minima(cell_minima(p.L, p.dt, eps, cells), edges);
  adjacency_from_minima(cell_minima(p.R, p.dt, eps, cells), edges);
  return graph_from_edges(cells, eps, std::move(edges));
}

inline constexpr std::size_t kUnreached = static_cast<std::size_t>(-1);

/// Hop distances from `source`, stopping past `limit`.
inline std::vector<std::size_t> bfs_distances(const MatedCrtGraph& g, std::size_t source,
                                              std::size_t limit = kUnreached) {
  std::vector<std::size_t> d(g.num_cells, kUnreached);
  std::deque<std::size_t> queue{source};
  d[source] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (d[u] >= limit) continue;
    for (std::size_t v : g.adjacent(u)) {
      if (d[v] == kUnreached) {
        d[v] = d[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return d;
}

/// Double-sweep lower bound on the hop diameter.
inline std::size_t estimate_diameter(const MatedCrtGraph& g) {
  auto far = [&g](std::size_t s) {
    const auto d = bfs_distances(g, s);
    std::size_t best = s;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] != kUnreached && d[i] > d[best]) best = i;
    return std::pair{best, d[best]};
  };
  const auto [b, d0] = far(0);
  return std::max(d0, far(b).second);
}

inline bool is_connected(const MatedCrtGraph& g) {
  if (g.num_cells == 0) return true;
  const auto d = bfs_distances(g, 0);
  return std::none_of(d.begin(), d.end(), [](std::size_t x) { return x == kUnreached; });
}

struct BallGrowthResult {
  ScalingFit fit;
  std::vector<std::size_t> centers;
  std::vector<std::size_t> radii;
  std::vector<std::vector<double>> sizes;  // sizes[center][radius]
  std::vector<double> local_slopes;
  std::size_t diameter = 0;
  std::vector<std::string> warnings;
};

/// |B_r(z)| = cells within hop distance r; pooled fit of log |B_r| against log r.
inline BallGrowthResult graph_ball_growth(const MatedCrtGraph& g, std::span<const std::size_t> centers,
                                          std::span<const std::size_t> radii) {
  require(radii.size() >= 3, "graph_ball_growth: need at least 3 radii");
  BallGrowthResult out;
  out.diameter = estimate_diameter(g);
  const std::size_t rmax = *std::max_element(radii.begin(), radii.end());
  for (std::size_t r : radii) require(r >= 1, "graph_ball_growth: radii must be positive");
  require(4 * rmax <= out.diameter, "graph_ball_growth: radii must not exceed diameter / 4");
  out.radii.assign(radii.begin(), radii.end());
  const auto from_start = bfs_distances(g, 0, 2 * rmax + 1);
  const auto from_end = bfs_distances(g, g.num_cells - 1, 2 * rmax + 1);
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t z : centers) {
    require(z < g.num_cells, "graph_ball_growth: centre outside the graph");
    if (from_start[z] <= 2 * rmax || from_end[z] <= 2 * rmax) {
      out.warnings.push_back("graph_ball_growth: dropped centre " + std::to_string(z) + " (near the time boundary)");
      continue;
    }
    const auto d = bfs_distances(g, z, rmax);
    std::vector<double> sz(radii.size(), 0.0);
    for (std::size_t c = 0; c < d.size(); ++c) {
      if (d[c] == kUnreached) continue;
      for (std::size_t i = 0; i < radii.size(); ++i)
        if (d[c] <= radii[i]) sz[i] += 1.0;
    }
    std::vector<double> rs(radii.begin(), radii.end());
    for (std::size_t i = 0; i < radii.size(); ++i) {
      xs.push_back(rs[i]);
      ys.push_back(sz[i]);
    }
    out.local_slopes.push_back(power_law_fit(rs, sz).slope);
    out.centers.push_back(z);
    out.sizes.push_back(std::move(sz));
  }
  if (out.centers.empty()) throw ValidationError("graph_ball_growth: every centre was dropped");
  out.fit = power_law_fit(xs, ys);
  return out;
}

enum class BoundaryComponent { L, R };

inline constexpr std::size_t kMinContactIntervals = 16;

/// Flags k where the component reaches a new running minimum during
/// I_k = [kT/K, (k+1)T/K]; k = 0 always counts (the start is a minimum).
inline std::vector<std::uint8_t> boundary_contact_flags(const BoundaryLengthProcess& p, BoundaryComponent which,
                                                        std::size_t K) {
  require(K >= kMinContactIntervals, "boundary_contact_cells: need K >= 16 intervals");
  const auto& z = which == BoundaryComponent::L ? p.L : p.R;
  const std::size_t steps = p.steps();
  require(steps >= K, "boundary_contact_cells: fewer samples than intervals");
  std::vector<std::uint8_t> flags(K, 0);
  flags[0] = 1;
  double running = z[0];
  std::size_t k = 0;
  for (std::size_t s = 1; s <= steps; ++s) {
    // Sample s belongs to the interval containing (s dt); shared endpoints go to the later one.
    k = std::min(K - 1, s * K / steps);
    if (z[s] < running) {
      running = z[s];
      flags[k] = 1;
    }
  }
  return flags;
}

struct ContactStatistics {
  std::size_t paths = 0;
  std::vector<double> probability;  // per k
  std::vector<double> predicted;    // 1 - (2/pi) arctan sqrt k
};

inline double arcsine_contact_probability(std::size_t k) {
  return 1.0 - 2.0 / std::numbers::pi * std::atan(std::sqrt(static_cast<double>(k)));
}

/// Averages per-path flags into empirical contact probabilities.
inline ContactStatistics aggregate_contacts(std::span<const std::vector<std::uint8_t>> flags) {
  require(!flags.empty(), "aggregate_contacts: no paths");
  const std::size_t K = flags.front().size();
  ContactStatistics out;
  out.paths = flags.size();
  out.probability.assign(K, 0.0);
  for (const auto& f : flags) {
    require(f.size() == K, "aggregate_contacts: paths disagree on K");
    for (std::size_t k = 0; k < K; ++k) out.probability[k] += f[k];
  }
  for (std::size_t k = 0; k < K; ++k) {
    out.probability[k] /= static_cast<double>(flags.size());
    out.predicted.push_back(arcsine_contact_probability(k));
  }
  return out;
}

inline ContactStatistics boundary_contact_cells(std::span<const BoundaryLengthProcess> paths, BoundaryComponent which,
                                                std::size_t K) {
  std::vector<std::vector<std::uint8_t>> flags;
  for (const auto& p : paths) flags.push_back(boundary_contact_flags(p, which, K));
  return aggregate_contacts(flags);
}

/// 1 / (xi Q - xi^2 / 2), the mean of the functional on [0, inf).
inline double exponential_functional_mean(double xi, double Q) {
  const double rate = xi * Q - xi * xi / 2.0;
  require(rate > 0.0, "exponential_functional: requires xi Q > xi^2 / 2");
  return 1.0 / rate;
}

/// One sample of int_0^T exp(xi B_s - xi Q s) ds, trapezoid rule on an Euler path.
inline double exponential_functional(double xi, double Q, double T, double dt, std::uint64_t seed) {
  const double rate = xi * Q - xi * xi / 2.0;
  require(rate > 0.0, "exponential_functional: requires xi Q > xi^2 / 2");
  require(T >= 50.0 / rate * (1.0 - 1e-12), "exponential_functional: T must be at least 50 / (xi Q - xi^2 / 2)");
  require(dt > 0.0 && dt <= T, "exponential_functional: dt must lie in (0, T]");
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  const double h = T / static_cast<double>(steps);
  const double sd = std::sqrt(h);
  GaussianSource g(derive_stream(seed, 30));
  double b = 0.0;
  double prev = 1.0;
  double sum = 0.0;
  for (std::size_t i = 1; i <= steps; ++i) {
    b += sd * g();
    const double cur = std::exp(xi * b - xi * Q * static_cast<double>(i) * h);
    sum += 0.5 * (prev + cur) * h;
    prev = cur;
  }
  return sum;
}

}  // namespace lqglab
