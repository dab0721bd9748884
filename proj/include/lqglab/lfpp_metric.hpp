#pragma once

// Discrete Liouville first passage percolation: an 8-neighbour lattice graph
// whose edge (u, v) costs |u - v| (w_u + w_v) / 2 with w = exp(xi h*_eps).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "errors.hpp"
#include "gaussian_field.hpp"
#include "grid.hpp"

namespace lqglab {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct NeighborOffset {
  int dx;
  int dy;
  double length;  // in units of delta
};

inline constexpr std::array<NeighborOffset, 8> kKingMoves{{
    {1, 0, 1.0},
    {-1, 0, 1.0},
    {0, 1, 1.0},
    {0, -1, 1.0},
    {1, 1, std::numbers::sqrt2},
    {-1, 1, std::numbers::sqrt2},
    {1, -1, std::numbers::sqrt2},
    {-1, -1, std::numbers::sqrt2},
}};

class WeightedGrid {
 public:
  WeightedGrid(GridSpec spec, double xi, double eps, std::vector<double> weights)
      : spec_(spec), xi_(xi), eps_(eps), weights_(std::move(weights)) {
    require(weights_.size() == spec_.size(), "WeightedGrid: weight count must equal n*n");
    for (double w : weights_) {
      require(w > 0.0 && std::isfinite(w), "WeightedGrid: vertex weights must be positive and finite");
    }
  }

  [[nodiscard]] const GridSpec& spec() const { return spec_; }
  [[nodiscard]] double xi() const { return xi_; }
  [[nodiscard]] double eps() const { return eps_; }
  [[nodiscard]] std::span<const double> weights() const { return weights_; }
  [[nodiscard]] double weight(CellIndex c) const { return weights_[c]; }
  [[nodiscard]] std::size_t size() const { return weights_.size(); }

  /// Calls f(neighbour, edge_cost) for every lattice neighbour of c.
  template <class F>
  void for_each_neighbor(CellIndex c, F&& f) const {
    const auto n = static_cast<long>(spec_.n);
    const auto j = static_cast<long>(spec_.col(c));
    const auto k = static_cast<long>(spec_.row(c));
    const double wc = weights_[c];
    for (const auto& m : kKingMoves) {
      const long jj = j + m.dx;
      const long kk = k + m.dy;
      if (jj < 0 || kk < 0 || jj >= n || kk >= n) continue;
      const auto v = static_cast<CellIndex>(kk * n + jj);
      f(v, m.length * spec_.delta * 0.5 * (wc + weights_[v]));
    }
  }

  [[nodiscard]] double edge_cost(CellIndex u, CellIndex v) const {
    const long dx = static_cast<long>(spec_.col(u)) - static_cast<long>(spec_.col(v));
    const long dy = static_cast<long>(spec_.row(u)) - static_cast<long>(spec_.row(v));
    require(std::abs(dx) <= 1 && std::abs(dy) <= 1 && (dx != 0 || dy != 0),
            "edge_cost: cells are not lattice neighbours");
    const double len = (dx != 0 && dy != 0) ? std::numbers::sqrt2 : 1.0;
    return len * spec_.delta * 0.5 * (weights_[u] + weights_[v]);
  }

 private:
  GridSpec spec_;
  double xi_;
  double eps_;
  std::vector<double> weights_;
};

inline WeightedGrid lfpp_graph_from_mollified(const GridField& mollified, double xi, double eps) {
  require(xi > 0.0, "build_lfpp_graph: xi must be positive");
  require(eps >= mollified.spec.delta, "build_lfpp_graph: eps must be at least delta");
  std::vector<double> w(mollified.values.size());
  for (CellIndex c = 0; c < w.size(); ++c) {
    w[c] = std::exp(xi * mollified.values[c]);
    if (!std::isfinite(w[c]) || w[c] <= 0.0) throw NumericalError("build_lfpp_graph: edge weight overflowed or underflowed");
  }
  return WeightedGrid(mollified.spec, xi, eps, std::move(w));
}

inline WeightedGrid build_lfpp_graph(const GridField& field, double xi, double eps) {
  require(xi > 0.0, "build_lfpp_graph: xi must be positive");
  require(eps >= field.spec.delta, "build_lfpp_graph: eps must be at least delta");
  return lfpp_graph_from_mollified(heat_kernel_mollify(field, eps), xi, eps);
}

inline constexpr std::int64_t kNoPredecessor = -1;

/// Single- or multi-source distances. Entries are exact wherever finite; a
/// bounded solve leaves cells at or beyond its radius at +infinity.
struct DistanceField {
  std::vector<CellIndex> sources;
  std::vector<double> dist;
  std::vector<std::int64_t> predecessor;  // empty unless requested

  [[nodiscard]] double operator[](CellIndex c) const { return dist[c]; }

  [[nodiscard]] std::vector<CellIndex> path_to(CellIndex target) const {
    require(!predecessor.empty(), "path_to: predecessors were not recorded");
    std::vector<CellIndex> path;
    if (!std::isfinite(dist[target])) return path;
    for (auto c = static_cast<std::int64_t>(target); c != kNoPredecessor; c = predecessor[static_cast<std::size_t>(c)]) {
      path.push_back(static_cast<CellIndex>(c));
    }
    std::reverse(path.begin(), path.end());
    return path;
  }
};

struct DijkstraOptions {
  double radius = kInfinity;  // settle only cells with dist < radius
  bool inclusive = false;     // settle dist <= radius instead
  std::optional<CellIndex> target;
  const CellSet* allowed = nullptr;
  bool record_predecessors = false;
};

/// Heap-based Dijkstra with lazy deletion. Deterministic: ties resolve by cell index.
inline DistanceField run_dijkstra(const WeightedGrid& graph, std::span<const CellIndex> sources,
                                  const DijkstraOptions& opt = {}) {
  const std::size_t size = graph.size();
  DistanceField out;
  out.sources.assign(sources.begin(), sources.end());
  out.dist.assign(size, kInfinity);
  if (opt.record_predecessors) out.predecessor.assign(size, kNoPredecessor);
  std::vector<double> tentative(size, kInfinity);
  std::vector<std::uint8_t> done(size, 0);
  using Entry = std::pair<double, CellIndex>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (CellIndex s : sources) {
    require(s < size, "run_dijkstra: source outside the grid");
    if (opt.allowed != nullptr) require(opt.allowed->contains(s), "run_dijkstra: source outside the allowed region");
    tentative[s] = 0.0;
    heap.emplace(0.0, s);
  }
  auto beyond = [&](double d) { return opt.inclusive ? d > opt.radius : d >= opt.radius; };
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (done[u] || d > tentative[u]) continue;
    if (beyond(d)) break;
    done[u] = 1;
    out.dist[u] = d;
    if (opt.target && *opt.target == u) break;
    graph.for_each_neighbor(u, [&](CellIndex v, double cost) {
      if (done[v]) return;
      if (opt.allowed != nullptr && !opt.allowed->contains(v)) return;
      const double nd = d + cost;
      if (nd < tentative[v]) {
        tentative[v] = nd;
        if (opt.record_predecessors) out.predecessor[v] = static_cast<std::int64_t>(u);
        heap.emplace(nd, v);
      }
    });
  }
  return out;
}

inline DistanceField shortest_distances(const WeightedGrid& graph, CellIndex source,
                                        bool record_predecessors = false) {
  require(source < graph.size(), "shortest_distances: source outside the grid");
  DijkstraOptions opt;
  opt.record_predecessors = record_predecessors;
  const std::array<CellIndex, 1> src{source};
  return run_dijkstra(graph, src, opt);
}

inline double distance_between(const WeightedGrid& graph, CellIndex a, CellIndex b) {
  DijkstraOptions opt;
  opt.target = b;
  const std::array<CellIndex, 1> src{a};
  return run_dijkstra(graph, src, opt).dist[b];
}

inline CellSet cells_where(const DistanceField& d, std::size_t n, const std::function<bool(double)>& keep) {
  CellSet s(n);
  for (CellIndex c = 0; c < d.dist.size(); ++c) {
    if (keep(d.dist[c])) s.insert(c);
  }
  return s;
}

/// Open ball {dist < r}.
inline CellSet metric_ball(const WeightedGrid& graph, CellIndex center, double r) {
  require(r >= 0.0, "metric_ball: radius must be nonnegative");
  require(center < graph.size(), "metric_ball: centre outside the grid");
  if (r == 0.0) return CellSet(graph.spec().n);
  DijkstraOptions opt;
  opt.radius = r;
  const std::array<CellIndex, 1> src{center};
  const auto d = run_dijkstra(graph, src, opt);
  return cells_where(d, graph.spec().n, [r](double x) { return x < r; });
}

/// Closed ball {dist <= r}.
inline CellSet closed_metric_ball(const WeightedGrid& graph, CellIndex center, double r) {
  require(r >= 0.0, "closed_metric_ball: radius must be nonnegative");
  DijkstraOptions opt;
  opt.radius = r;
  opt.inclusive = true;
  const std::array<CellIndex, 1> src{center};
  const auto d = run_dijkstra(graph, src, opt);
  return cells_where(d, graph.spec().n, [r](double x) { return x <= r; });
}

/// Cells of the complement reachable from the grid edge through 4-neighbour
/// steps (the dual connectivity of the 8-neighbour graph).
inline CellSet exterior_of(const CellSet& cells) {
  const std::size_t n = cells.n;
  CellSet outside(n);
  std::deque<CellIndex> queue;
  auto visit = [&](CellIndex c) {
    if (cells.contains(c) || outside.contains(c)) return;
    outside.insert(c);
    queue.push_back(c);
  };
  for (std::size_t i = 0; i < n; ++i) {
    visit(i);
    visit((n - 1) * n + i);
    visit(i * n);
    visit(i * n + n - 1);
  }
  while (!queue.empty()) {
    const CellIndex c = queue.front();
    queue.pop_front();
    const std::size_t j = c % n;
    const std::size_t k = c / n;
    if (j > 0) visit(c - 1);
    if (j + 1 < n) visit(c + 1);
    if (k > 0) visit(c - n);
    if (k + 1 < n) visit(c + n);
  }
  return outside;
}

/// Closed ball together with every complementary component cut off from the grid edge.
inline CellSet filled_metric_ball(const WeightedGrid& graph, CellIndex center, double r) {
  const CellSet ball = closed_metric_ball(graph, center, r);
  for (CellIndex c = 0; c < graph.size(); ++c) {
    if (ball.contains(c) && graph.spec().on_edge(c)) {
      throw ValidationError("filled_metric_ball: the ball touches the grid boundary");
    }
  }
  const CellSet outside = exterior_of(ball);
  CellSet filled(graph.spec().n);
  for (CellIndex c = 0; c < graph.size(); ++c) {
    if (!outside.contains(c)) filled.insert(c);
  }
  return filled;
}

/// Length of the shortest path from u to v that stays inside `region`.
inline double internal_distance(const WeightedGrid& graph, const CellSet& region, CellIndex u, CellIndex v) {
  require(region.n == graph.spec().n, "internal_distance: region does not match the grid");
  require(region.contains(u) && region.contains(v), "internal_distance: endpoints must lie in the region");
  DijkstraOptions opt;
  opt.allowed = &region;
  opt.target = v;
  const std::array<CellIndex, 1> src{u};
  return run_dijkstra(graph, src, opt).dist[v];
}

/// Multiplies vertex weights by exp(xi f).
inline WeightedGrid weyl_scale(const WeightedGrid& graph, const GridField& f) {
  require(f.spec == graph.spec(), "weyl_scale: field grid does not match the graph");
  std::vector<double> w(graph.weights().begin(), graph.weights().end());
  for (CellIndex c = 0; c < w.size(); ++c) w[c] *= std::exp(graph.xi() * f.values[c]);
  return WeightedGrid(graph.spec(), graph.xi(), graph.eps(), std::move(w));
}

struct DistanceBound {
  double bound;  // Riemann sum of the circle-average integral (C = 1)
  double dist;   // LFPP distance from the origin cell to z with the -gamma log|.| singularity
};

inline constexpr double kBoundStep = 1e-3;

/// Left Riemann sum (step kBoundStep, anchored at -log(|z|/2)) of
///   int ( e^{xi h_{e^-t}(0) - xi (Q-gamma) t} + e^{xi h_{e^-t}(z) - xi Q t} ) dt
/// up to T (default log(1/(2 delta)), the smallest admissible circle), together with
/// the LFPP distance under weights exp(xi (h*_eps - gamma log|.|)).
inline DistanceBound circle_average_distance_bound(const GridField& field, Complex z, double gamma,
                                                   double d_gamma, double eps = 0.0,
                                                   std::optional<double> horizon = std::nullopt) {
  const GridSpec& spec = field.spec;
  const auto [q, xi] = constants_Q_xi(gamma, d_gamma);
  require(std::abs(z) <= 0.25, "circle_average_distance_bound: need |z| <= 1/4");
  require(std::abs(z) >= 4.0 * spec.delta, "circle_average_distance_bound: z is closer than 4*delta to 0");
  if (eps == 0.0) eps = 2.0 * spec.delta;

  const double t0 = -std::log(std::abs(z) / 2.0);
  const double t_end = horizon.value_or(std::log(1.0 / (2.0 * spec.delta)));
  double bound = 0.0;
  for (double t = t0; t < t_end; ) {
    const double step = std::min(kBoundStep, t_end - t);
    const double r = std::exp(-t);
    const double a0 = circle_average(field, Complex(0.0, 0.0), r);
    const double az = circle_average(field, z, r);
    bound += step * (std::exp(xi * a0 - xi * (q - gamma) * t) + std::exp(xi * az - xi * q * t));
    t = t0 + kBoundStep * std::floor((t - t0) / kBoundStep + 1.0 + 1e-9);
  }

  const GridField mollified = heat_kernel_mollify(field, eps);
  std::vector<double> w(spec.size());
  for (CellIndex c = 0; c < w.size(); ++c) {
    w[c] = std::exp(xi * (mollified.values[c] - gamma * std::log(std::abs(spec.center(c)))));
  }
  const WeightedGrid graph(spec, xi, eps, std::move(w));
  const double dist = distance_between(graph, spec.nearest_cell(Complex(0.0, 0.0)), spec.nearest_cell(z));
  return {bound, dist};
}

}  // namespace lqglab
