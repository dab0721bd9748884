#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "gmc_measure.hpp"
#include "grid.hpp"
#include "lfpp_metric.hpp"
#include "stats.hpp"

namespace lqglab {

/// Dense symmetric distance matrix on points 0..size-1.
class FiniteMetric {
 public:
  FiniteMetric() = default;
  FiniteMetric(std::size_t n, std::vector<double> d) : n_(n), d_(std::move(d)) {
    require(d_.size() == n_ * n_, "FiniteMetric: matrix must be n*n");
    for (std::size_t i = 0; i < n_; ++i) {
      require(d_[i * n_ + i] == 0.0, "FiniteMetric: diagonal must vanish");
      for (std::size_t j = 0; j < n_; ++j) {
        require(d_[i * n_ + j] >= 0.0 && d_[i * n_ + j] == d_[j * n_ + i],
                "FiniteMetric: distances must be symmetric and nonnegative");
      }
    }
  }

  static FiniteMetric on_line(std::span<const double> xs) {
    std::vector<double> d(xs.size() * xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = 0; j < xs.size(); ++j) d[i * xs.size() + j] = std::abs(xs[i] - xs[j]);
    return {xs.size(), std::move(d)};
  }

  static FiniteMetric in_plane(std::span<const Complex> zs) {
    std::vector<double> d(zs.size() * zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i)
      for (std::size_t j = 0; j < zs.size(); ++j) d[i * zs.size() + j] = i == j ? 0.0 : std::abs(zs[i] - zs[j]);
    return {zs.size(), std::move(d)};
  }

  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

enum class CoverMethod { Greedy, ExactBruteForce, Packing };

inline const char* to_string(CoverMethod m) {
  switch (m) {
    case CoverMethod::Greedy: return "greedy";
    case CoverMethod::ExactBruteForce: return "exact";
    case CoverMethod::Packing: return "packing";
  }
  return "unknown";
}

struct CoverResult {
  double eps = 0.0;
  std::vector<CellIndex> centers;
  std::size_t count = 0;
  CoverMethod method = CoverMethod::Greedy;
};

/// Nearest-centre distances for a target set inside a finite metric.
class MatrixTracker {
 public:
  MatrixTracker(const FiniteMetric& metric, std::span<const std::size_t> targets)
      : metric_(&metric), targets_(targets.begin(), targets.end()), dist_(targets.size(), kInfinity) {}

  [[nodiscard]] std::size_t size() const { return targets_.size(); }
  void reset() { std::fill(dist_.begin(), dist_.end(), kInfinity); }
  void add_center(std::size_t i) {
    for (std::size_t t = 0; t < targets_.size(); ++t)
      dist_[t] = std::min(dist_[t], (*metric_)(targets_[i], targets_[t]));
  }
  [[nodiscard]] double distance(std::size_t i) const { return dist_[i]; }
  [[nodiscard]] std::size_t point(std::size_t i) const { return targets_[i]; }

 private:
  const FiniteMetric* metric_;
  std::vector<std::size_t> targets_;
  std::vector<double> dist_;
};

/// Nearest-centre distances for a cell set in the LFPP metric of the whole grid.
/// Each new centre runs a Dijkstra pruned to the cells it brings closer.
class GridTracker {
 public:
  GridTracker(const WeightedGrid& graph, std::vector<CellIndex> members)
      : graph_(&graph), members_(std::move(members)), dist_(graph.size(), kInfinity) {}

  [[nodiscard]] std::size_t size() const { return members_.size(); }
  void reset() { std::fill(dist_.begin(), dist_.end(), kInfinity); }
  void add_center(std::size_t i) {
    using Entry = std::pair<double, CellIndex>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    const CellIndex s = members_[i];
    dist_[s] = 0.0;
    heap.emplace(0.0, s);
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d > dist_[u]) continue;
      graph_->for_each_neighbor(u, [&](CellIndex v, double cost) {
        const double nd = d + cost;
        if (nd < dist_[v]) {
          dist_[v] = nd;
          heap.emplace(nd, v);
        }
      });
    }
  }
  [[nodiscard]] double distance(std::size_t i) const { return dist_[members_[i]]; }
  [[nodiscard]] std::size_t point(std::size_t i) const { return members_[i]; }

 private:
  const WeightedGrid* graph_;
  std::vector<CellIndex> members_;
  std::vector<double> dist_;
};

/// Farthest-point insertion order. radii[k] is the distance from centre k to
/// centres 0..k-1 at the time it was inserted (radii[0] = inf); radii are
/// nonincreasing, so one traversal answers every eps above the stop level.
struct Traversal {
  std::vector<std::size_t> order;  // tracker indices
  std::vector<double> radii;

  /// Open-ball greedy cover size at eps.
  [[nodiscard]] std::size_t count_at(double eps) const {
    return static_cast<std::size_t>(
        std::count_if(radii.begin(), radii.end(), [eps](double r) { return r >= eps; }));
  }
};

template <class Tracker>
Traversal farthest_point_traversal(Tracker& tracker, std::size_t start, double stop_below) {
  Traversal out;
  if (tracker.size() == 0) return out;
  tracker.reset();
  out.order.push_back(start);
  out.radii.push_back(kInfinity);
  tracker.add_center(start);
  // Lazy max-heap: every index has one entry whose key is >= its current distance.
  auto less = [](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
    return a.first < b.first || (a.first == b.first && a.second > b.second);
  };
  std::priority_queue<std::pair<double, std::size_t>, std::vector<std::pair<double, std::size_t>>, decltype(less)>
      heap(less);
  for (std::size_t i = 0; i < tracker.size(); ++i) heap.emplace(tracker.distance(i), i);
  while (!heap.empty()) {
    const auto [key, i] = heap.top();
    const double now = tracker.distance(i);
    heap.pop();
    if (now < key) {
      heap.emplace(now, i);
      continue;
    }
    if (now < stop_below || now == 0.0) break;
    out.order.push_back(i);
    out.radii.push_back(now);
    tracker.add_center(i);
  }
  return out;
}

/// Centre minimising max(d(b, .), d(c, .)) for a double sweep b -> c started at `from`.
template <class Tracker>
std::size_t double_sweep_center(Tracker& tracker, std::size_t from) {
  auto farthest = [&tracker] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < tracker.size(); ++i)
      if (tracker.distance(i) > tracker.distance(best)) best = i;
    return best;
  };
  tracker.reset();
  tracker.add_center(from);
  const std::size_t b = farthest();
  tracker.reset();
  tracker.add_center(b);
  std::vector<double> db(tracker.size());
  for (std::size_t i = 0; i < tracker.size(); ++i) db[i] = tracker.distance(i);
  const std::size_t c = farthest();
  tracker.reset();
  tracker.add_center(c);
  std::size_t best = 0;
  double best_val = kInfinity;
  for (std::size_t i = 0; i < tracker.size(); ++i) {
    const double v = std::max(db[i], tracker.distance(i));
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  return best;
}

namespace detail {

template <class Tracker>
std::vector<Traversal> cover_traversals(Tracker& tracker, double stop_below) {
  std::vector<Traversal> runs;
  runs.push_back(farthest_point_traversal(tracker, 0, stop_below));
  const std::size_t mid = double_sweep_center(tracker, 0);
  if (mid != 0) runs.push_back(farthest_point_traversal(tracker, mid, stop_below));
  return runs;
}

template <class Tracker>
CoverResult greedy_from(Tracker& tracker, double eps) {
  CoverResult out;
  out.eps = eps;
  out.method = CoverMethod::Greedy;
  if (tracker.size() == 0) return out;
  const auto runs = cover_traversals(tracker, eps);
  const Traversal* best = &runs.front();
  for (const auto& r : runs)
    if (r.count_at(eps) < best->count_at(eps)) best = &r;
  out.count = best->count_at(eps);
  for (std::size_t k = 0; k < out.count; ++k) out.centers.push_back(tracker.point(best->order[k]));
  return out;
}

template <class Tracker>
std::vector<std::size_t> greedy_counts_from(Tracker& tracker, std::span<const double> eps_list) {
  std::vector<std::size_t> out(eps_list.size(), 0);
  if (tracker.size() == 0 || eps_list.empty()) return out;
  const double lo = *std::min_element(eps_list.begin(), eps_list.end());
  const auto runs = cover_traversals(tracker, lo);
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    out[e] = runs.front().count_at(eps_list[e]);
    for (const auto& r : runs) out[e] = std::min(out[e], r.count_at(eps_list[e]));
  }
  return out;
}

template <class Tracker>
CoverResult packing_from(Tracker& tracker, double eps) {
  CoverResult out;
  out.eps = eps;
  out.method = CoverMethod::Packing;
  if (tracker.size() == 0) return out;
  const Traversal t = farthest_point_traversal(tracker, 0, 2.0 * eps);
  out.count = t.count_at(2.0 * eps);
  for (std::size_t k = 0; k < out.count; ++k) out.centers.push_back(tracker.point(t.order[k]));
  return out;
}

}  // namespace detail

/// Farthest-point greedy cover with centres in the set; the better of a
/// traversal from the first member and one from a double-sweep centre.
inline CoverResult greedy_cover(const CellSet& set, const WeightedGrid& graph, double eps) {
  require(eps > 0.0, "greedy_cover: eps must be positive");
  require(set.n == graph.spec().n, "greedy_cover: set does not match the grid");
  GridTracker tracker(graph, set.members());
  return detail::greedy_from(tracker, eps);
}

inline CoverResult greedy_cover(const FiniteMetric& metric, std::span<const std::size_t> set, double eps) {
  require(eps > 0.0, "greedy_cover: eps must be positive");
  MatrixTracker tracker(metric, set);
  return detail::greedy_from(tracker, eps);
}

/// Greedy cover sizes for several radii from a single pair of traversals.
inline std::vector<std::size_t> greedy_cover_counts(const CellSet& set, const WeightedGrid& graph,
                                                    std::span<const double> eps_list) {
  for (double e : eps_list) require(e > 0.0, "greedy_cover_counts: eps must be positive");
  GridTracker tracker(graph, set.members());
  return detail::greedy_counts_from(tracker, eps_list);
}

inline std::vector<std::size_t> greedy_cover_counts(const FiniteMetric& metric, std::span<const std::size_t> set,
                                                    std::span<const double> eps_list) {
  for (double e : eps_list) require(e > 0.0, "greedy_cover_counts: eps must be positive");
  MatrixTracker tracker(metric, set);
  return detail::greedy_counts_from(tracker, eps_list);
}

/// Greedy maximal packing: centres in the set at pairwise distance >= 2 eps.
inline CoverResult maximal_packing(const CellSet& set, const WeightedGrid& graph, double eps) {
  require(eps > 0.0, "maximal_packing: eps must be positive");
  require(set.n == graph.spec().n, "maximal_packing: set does not match the grid");
  GridTracker tracker(graph, set.members());
  return detail::packing_from(tracker, eps);
}

inline CoverResult maximal_packing(const FiniteMetric& metric, std::span<const std::size_t> set, double eps) {
  require(eps > 0.0, "maximal_packing: eps must be positive");
  MatrixTracker tracker(metric, set);
  return detail::packing_from(tracker, eps);
}

/// True if the open eps-balls about `centers` cover every member of `set`.
inline bool verify_cover(const CellSet& set, const WeightedGrid& graph, std::span<const CellIndex> centers,
                         double eps) {
  if (set.empty()) return true;
  if (centers.empty()) return false;
  DijkstraOptions opt;
  opt.radius = eps;
  const DistanceField d = run_dijkstra(graph, centers, opt);
  for (CellIndex c : set.members())
    if (!(d[c] < eps)) return false;
  return true;
}

inline bool verify_cover(const FiniteMetric& metric, std::span<const std::size_t> set,
                         std::span<const std::size_t> centers, double eps) {
  for (std::size_t p : set) {
    bool hit = false;
    for (std::size_t c : centers) hit = hit || metric(c, p) < eps;
    if (!hit) return false;
  }
  return true;
}

enum class CenterPolicy { InSet, Ambient };

inline constexpr std::size_t kExactCoverMaxSize = 15;

namespace detail {

struct Candidate {
  std::uint32_t mask;
  std::size_t point;
};

/// Smallest subfamily whose masks union to `full`, by size-ordered exhaustive search.
inline std::vector<std::size_t> smallest_cover(std::vector<Candidate> cands, std::uint32_t full) {
  if (full == 0) return {};
  // Keep one representative per mask and drop masks contained in another.
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return a.mask != b.mask ? a.mask < b.mask : a.point < b.point;
  });
  cands.erase(std::unique(cands.begin(), cands.end(),
                          [](const Candidate& a, const Candidate& b) { return a.mask == b.mask; }),
              cands.end());
  std::vector<Candidate> kept;
  for (const auto& c : cands) {
    if (c.mask == 0) continue;
    bool dominated = false;
    for (const auto& o : cands) dominated = dominated || (o.mask != c.mask && (c.mask & ~o.mask) == 0);
    if (!dominated) kept.push_back(c);
  }
  std::vector<std::size_t> pick;
  std::function<bool(std::size_t, std::uint32_t, std::size_t)> search = [&](std::size_t from, std::uint32_t covered,
                                                                            std::size_t left) {
    if (covered == full) return true;
    if (left == 0) return false;
    for (std::size_t i = from; i < kept.size(); ++i) {
      pick.push_back(i);
      if (search(i + 1, covered | kept[i].mask, left - 1)) return true;
      pick.pop_back();
    }
    return false;
  };
  for (std::size_t k = 1; k <= kept.size(); ++k) {
    pick.clear();
    if (search(0, 0, k)) {
      std::vector<std::size_t> out;
      for (std::size_t i : pick) out.push_back(kept[i].point);
      return out;
    }
  }
  throw NumericalError("exact_cover: candidate balls do not cover the set");
}

inline CoverResult exact_result(double eps, std::vector<std::size_t> centers) {
  CoverResult r;
  r.eps = eps;
  r.method = CoverMethod::ExactBruteForce;
  r.count = centers.size();
  r.centers.assign(centers.begin(), centers.end());
  return r;
}

}  // namespace detail

/// Minimum open-ball cover of a small set by exhaustive search. InSet draws
/// centres from the set itself; Ambient from every point of the space.
inline CoverResult exact_cover(const FiniteMetric& metric, std::span<const std::size_t> set, double eps,
                               CenterPolicy policy = CenterPolicy::InSet) {
  require(eps > 0.0, "exact_cover: eps must be positive");
  require(set.size() <= kExactCoverMaxSize, "exact_cover: set has more than 15 points");
  std::vector<std::size_t> pool;
  if (policy == CenterPolicy::InSet) {
    pool.assign(set.begin(), set.end());
  } else {
    for (std::size_t p = 0; p < metric.size(); ++p) pool.push_back(p);
  }
  std::vector<detail::Candidate> cands;
  for (std::size_t c : pool) {
    std::uint32_t m = 0;
    for (std::size_t t = 0; t < set.size(); ++t)
      if (metric(c, set[t]) < eps) m |= 1u << t;
    cands.push_back({m, c});
  }
  const std::uint32_t full = set.empty() ? 0u : (1u << set.size()) - 1u;
  return detail::exact_result(eps, detail::smallest_cover(std::move(cands), full));
}

inline CoverResult exact_cover(const CellSet& set, const WeightedGrid& graph, double eps,
                               CenterPolicy policy = CenterPolicy::InSet) {
  require(eps > 0.0, "exact_cover: eps must be positive");
  require(set.n == graph.spec().n, "exact_cover: set does not match the grid");
  const auto members = set.members();
  require(members.size() <= kExactCoverMaxSize, "exact_cover: set has more than 15 cells");
  // masks[c] = targets within eps of cell c; only cells near the set matter.
  std::vector<std::uint32_t> masks(graph.size(), 0);
  DijkstraOptions opt;
  opt.radius = eps;
  for (std::size_t t = 0; t < members.size(); ++t) {
    const CellIndex src[] = {members[t]};
    const DistanceField d = run_dijkstra(graph, src, opt);
    for (CellIndex c = 0; c < graph.size(); ++c)
      if (d[c] < eps) masks[c] |= 1u << t;
  }
  std::vector<detail::Candidate> cands;
  if (policy == CenterPolicy::InSet) {
    for (CellIndex c : members) cands.push_back({masks[c], c});
  } else {
    for (CellIndex c = 0; c < graph.size(); ++c)
      if (masks[c] != 0) cands.push_back({masks[c], c});
  }
  const std::uint32_t full = members.empty() ? 0u : (1u << members.size()) - 1u;
  return detail::exact_result(eps, detail::smallest_cover(std::move(cands), full));
}

inline std::size_t exact_cover_count(const FiniteMetric& metric, std::span<const std::size_t> set, double eps,
                                     CenterPolicy policy = CenterPolicy::InSet) {
  return exact_cover(metric, set, eps, policy).count;
}

inline std::size_t exact_cover_count(const CellSet& set, const WeightedGrid& graph, double eps,
                                     CenterPolicy policy = CenterPolicy::InSet) {
  return exact_cover(set, graph, eps, policy).count;
}

/// Members of the set with a 4-neighbour outside it or on the grid edge.
inline CellSet inner_boundary(const CellSet& set) {
  const std::size_t n = set.n;
  CellSet out(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const CellIndex c = k * n + j;
      if (!set.contains(c)) continue;
      const bool edge = j == 0 || k == 0 || j + 1 == n || k + 1 == n;
      if (edge || !set.contains(c - 1) || !set.contains(c + 1) || !set.contains(c - n) || !set.contains(c + n))
        out.insert(c);
    }
  }
  return out;
}

/// {z in set : D(z, boundary cells) < eps}.
inline CellSet boundary_neighborhood(const CellSet& set, const WeightedGrid& graph, double eps) {
  require(eps > 0.0, "boundary_neighborhood: eps must be positive");
  require(set.n == graph.spec().n, "boundary_neighborhood: set does not match the grid");
  const auto sources = inner_boundary(set).members();
  CellSet out(set.n);
  if (sources.empty()) return out;
  DijkstraOptions opt;
  opt.radius = eps;
  const DistanceField d = run_dijkstra(graph, sources, opt);
  for (CellIndex c : set.members())
    if (d[c] < eps) out.insert(c);
  return out;
}

struct ScalingFit {
  std::vector<double> log_eps;    // log of the scale variable (eps or r)
  std::vector<double> log_count;  // log of the measured quantity
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
  double r2 = 1.0;
};

inline void require_geometric(std::vector<double> scales, const char* who) {
  std::sort(scales.begin(), scales.end());
  for (std::size_t i = 0; i + 1 < scales.size(); ++i) {
    require(scales[i] > 0.0 && scales[i + 1] > scales[i], std::string(who) + ": scales must be distinct and positive");
  }
  const double step = std::log(scales[1] / scales[0]);
  for (std::size_t i = 1; i + 1 < scales.size(); ++i) {
    require(std::abs(std::log(scales[i + 1] / scales[i]) - step) <= 1e-6 * step,
            std::string(who) + ": scales must be geometrically spaced");
  }
}

/// Slope of log N against log(1/eps).
inline ScalingFit dimension_fit(std::span<const std::pair<double, double>> counts) {
  require(counts.size() >= 3, "dimension_fit: need at least 3 eps levels");
  std::vector<double> eps;
  for (const auto& [e, c] : counts) {
    require(c > 0.0, "dimension_fit: counts must be positive");
    eps.push_back(e);
  }
  require_geometric(eps, "dimension_fit");
  ScalingFit f;
  std::vector<double> x;
  for (const auto& [e, c] : counts) {
    f.log_eps.push_back(std::log(e));
    f.log_count.push_back(std::log(c));
    x.push_back(-std::log(e));
  }
  const auto lin = stats::ols(x, f.log_count);
  f.slope = lin.slope;
  f.intercept = lin.intercept;
  f.std_error = lin.stderr_slope;
  f.r2 = lin.r2;
  return f;
}

/// Slope of log y against log x for pooled (x, y) points.
inline ScalingFit power_law_fit(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size() && xs.size() >= 3, "power_law_fit: need at least 3 points");
  ScalingFit f;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(xs[i] > 0.0 && ys[i] > 0.0, "power_law_fit: values must be positive");
    f.log_eps.push_back(std::log(xs[i]));
    f.log_count.push_back(std::log(ys[i]));
  }
  const auto lin = stats::ols(f.log_eps, f.log_count);
  f.slope = lin.slope;
  f.intercept = lin.intercept;
  f.std_error = lin.stderr_slope;
  f.r2 = lin.r2;
  return f;
}

/// Cells whose centre lies in the inner half-grid |x - o|, |y - o| < extent/2.
inline CellSet inner_half(const GridSpec& spec) {
  return square_cells(spec, spec.origin, spec.extent() / 2.0);
}

struct BallVolumeResult {
  ScalingFit fit;
  std::vector<CellIndex> centers;          // centres kept
  std::vector<double> radii;
  std::vector<std::vector<double>> volumes;  // volumes[center][radius]
  std::vector<double> local_slopes;        // per-centre fitted exponent
  double sup_ratio = 0.0;                  // max over (z, r) of mu(B_r(z)) / r^slope
  double inf_ratio = 0.0;                  // min of the same
  std::vector<std::string> warnings;
};

/// Pooled fit of log mu(B_r(z)) against log r. A centre whose largest ball
/// leaves the inner half-grid is dropped with a warning.
inline BallVolumeResult ball_volume_scaling(const GridMeasure& measure, const WeightedGrid& graph,
                                            std::span<const CellIndex> centers, std::span<const double> radii) {
  require(measure.spec == graph.spec(), "ball_volume_scaling: measure and metric grids differ");
  require(radii.size() >= 3, "ball_volume_scaling: need at least 3 radii");
  require_geometric({radii.begin(), radii.end()}, "ball_volume_scaling");
  const double rmax = *std::max_element(radii.begin(), radii.end());
  const CellSet inner = inner_half(graph.spec());
  BallVolumeResult out;
  out.radii.assign(radii.begin(), radii.end());
  std::vector<double> xs;
  std::vector<double> ys;
  for (CellIndex z : centers) {
    const CellIndex src[] = {z};
    DijkstraOptions opt;
    opt.radius = rmax;
    const DistanceField d = run_dijkstra(graph, src, opt);
    bool escapes = false;
    for (CellIndex c = 0; c < graph.size() && !escapes; ++c) escapes = d[c] < rmax && !inner.contains(c);
    if (escapes) {
      out.warnings.push_back("ball_volume_scaling: dropped centre " + std::to_string(z) +
                             " (ball leaves the inner half-grid)");
      continue;
    }
    std::vector<double> vol(radii.size(), 0.0);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      CellSet ball(graph.spec().n);
      for (CellIndex c = 0; c < graph.size(); ++c)
        if (d[c] < radii[i]) ball.insert(c);
      vol[i] = measure_of(measure, ball);
      xs.push_back(radii[i]);
      ys.push_back(vol[i]);
    }
    out.local_slopes.push_back(power_law_fit(radii, vol).slope);
    out.centers.push_back(z);
    out.volumes.push_back(std::move(vol));
  }
  if (out.centers.empty()) throw ValidationError("ball_volume_scaling: every centre was dropped");
  out.fit = power_law_fit(xs, ys);
  out.sup_ratio = 0.0;
  out.inf_ratio = kInfinity;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double q = ys[i] / std::pow(xs[i], out.fit.slope);
    out.sup_ratio = std::max(out.sup_ratio, q);
    out.inf_ratio = std::min(out.inf_ratio, q);
  }
  return out;
}

struct ContentRow {
  double eps = 0.0;
  std::string region;
  std::size_t count = 0;
  double mass = 0.0;
  double ratio = 0.0;  // count * eps^d / mass
};

struct ContentRatioTable {
  std::vector<ContentRow> rows;
  std::vector<double> eps;
  std::vector<double> cv;  // per eps, across surviving regions
  std::vector<std::string> warnings;
};

inline bool region_inside(const GridSpec& spec, const CellSet& cells) { return cells.subset_of(inner_half(spec)); }

/// rho_i(eps) = N_eps(A_i) eps^d / mu(A_i) for every region and eps, plus the
/// per-eps coefficient of variation of rho across regions.
inline ContentRatioTable content_ratio_experiment(const GridMeasure& measure, const WeightedGrid& graph,
                                                  double d_gamma, std::span<const Region> regions,
                                                  std::span<const double> eps_list) {
  require(measure.spec == graph.spec(), "content_ratio_experiment: measure and metric grids differ");
  require(d_gamma > 0.0, "content_ratio_experiment: d_gamma must be positive");
  require(!regions.empty(), "content_ratio_experiment: no regions");
  require(!eps_list.empty(), "content_ratio_experiment: no eps levels");
  for (double e : eps_list) require(e > 0.0, "content_ratio_experiment: eps must be positive");
  const GridSpec& spec = graph.spec();
  const double total = measure.total();
  ContentRatioTable table;
  table.eps.assign(eps_list.begin(), eps_list.end());
  std::vector<std::vector<double>> ratios(eps_list.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const Region& reg = regions[i];
    const std::string name = reg.label.empty() ? "region" + std::to_string(i) : reg.label;
    const CellSet cells = reg.rasterize(spec);
    require(region_inside(spec, cells), "content_ratio_experiment: region " + name + " leaves the inner half-grid");
    const double mass = measure_of(measure, cells);
    if (!(mass >= 1e-6 * total) || cells.empty()) {
      table.warnings.push_back("content_ratio_experiment: dropped region " + name + " (mass below 1e-6 of total)");
      continue;
    }
    const auto counts = greedy_cover_counts(cells, graph, eps_list);
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
      const double rho = static_cast<double>(counts[e]) * std::pow(eps_list[e], d_gamma) / mass;
      table.rows.push_back({eps_list[e], name, counts[e], mass, rho});
      ratios[e].push_back(rho);
    }
  }
  if (ratios.front().empty()) throw ValidationError("content_ratio_experiment: every region was dropped");
  for (const auto& r : ratios) table.cv.push_back(stats::coefficient_of_variation(r));
  return table;
}

inline ContentRatioTable content_ratio_experiment(const GridField& field, double gamma, double d_gamma,
                                                  std::span<const Region> regions, std::span<const double> eps_list,
                                                  double mollify_eps = 0.0) {
  const double m = mollify_eps > 0.0 ? mollify_eps : 2.0 * field.spec.delta;
  const GridField smooth = heat_kernel_mollify(field, m);
  return content_ratio_experiment(gmc_from_mollified(smooth, gamma, m),
                                  lfpp_graph_from_mollified(smooth, gamma / d_gamma, m), d_gamma, regions, eps_list);
}

struct RatioTest {
  double r = 2.0;
  double eps = 0.0;      // the smaller scale
  double ratio = 0.0;    // b_{r eps} / b_eps
  double predicted = 0.0;  // r^{-delta}
};

struct RescalingCoefficients {
  std::vector<double> eps_grid;
  std::vector<double> b_values;
  double delta_dim = 0.0;
  double delta_stderr = 0.0;
  double c1 = 0.0;  // min b eps^delta
  double c2 = 0.0;  // max b eps^delta
  std::vector<RatioTest> ratio_tests;
};

inline constexpr std::size_t kMinRescalingSamples = 20;

/// counts[s][e] is the cover count of sample s at eps_grid[e].
inline RescalingCoefficients estimate_rescaling_coefficients(const std::vector<std::vector<double>>& counts,
                                                             std::span<const double> eps_grid,
                                                             std::size_t min_samples = kMinRescalingSamples) {
  require(counts.size() >= min_samples, "estimate_rescaling_coefficients: too few ensemble samples");
  require(eps_grid.size() >= 4, "estimate_rescaling_coefficients: need at least 4 eps levels");
  RescalingCoefficients out;
  out.eps_grid.assign(eps_grid.begin(), eps_grid.end());
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    double s = 0.0;
    for (const auto& row : counts) {
      require(row.size() == eps_grid.size(), "estimate_rescaling_coefficients: ragged count table");
      s += row[e];
    }
    out.b_values.push_back(s / static_cast<double>(counts.size()));
  }
  std::vector<std::pair<double, double>> pts;
  for (std::size_t e = 0; e < eps_grid.size(); ++e) pts.emplace_back(eps_grid[e], out.b_values[e]);
  const ScalingFit fit = dimension_fit(pts);
  out.delta_dim = fit.slope;
  out.delta_stderr = fit.std_error;
  out.c1 = kInfinity;
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    const double q = out.b_values[e] * std::pow(eps_grid[e], out.delta_dim);
    out.c1 = std::min(out.c1, q);
    out.c2 = std::max(out.c2, q);
  }
  for (double r : {2.0, 4.0}) {
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
      for (std::size_t f = 0; f < eps_grid.size(); ++f) {
        if (std::abs(eps_grid[f] - r * eps_grid[e]) <= 1e-9 * eps_grid[f]) {
          out.ratio_tests.push_back({r, eps_grid[e], out.b_values[f] / out.b_values[e], std::pow(r, -out.delta_dim)});
        }
      }
    }
  }
  return out;
}

}  // namespace lqglab
