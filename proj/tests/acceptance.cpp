// Acceptance run: one PASS/FAIL line per numbered criterion.
// Usage: lqglab_acceptance [criterion numbers...]   (default: all twelve)

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lqglab/lqglab.hpp"
#include "oracles.hpp"

using namespace lqglab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Two-sided normal quantile z with P(|Z| > z) = p, by bisection on erfc.
double two_sided_z(double p) {
  double lo = 0.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::numbers::sqrt2) > p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// 1. Exact sampler covariance against G for every pair at separation >= 4 delta.
Outcome criterion1() {
  const GridSpec spec(32, 1.0 / 16.0);
  const std::size_t draws = 10000;
  const auto sampler = shared_sampler<ExactGffSampler>(spec);
  const auto m = static_cast<Eigen::Index>(spec.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(draws), m);
  for (std::size_t s = 0; s < draws; ++s) {
    const GridField f = sampler->draw(s + 1);
    for (Eigen::Index c = 0; c < m; ++c) x(static_cast<Eigen::Index>(s), c) = f.values[static_cast<std::size_t>(c)];
  }
  const double N = static_cast<double>(draws);
  const Eigen::MatrixXd sum = x.transpose() * x;
  const Eigen::MatrixXd sq = x.cwiseProduct(x);
  const Eigen::MatrixXd sum4 = sq.transpose() * sq;

  std::size_t pairs = 0;
  std::size_t beyond3 = 0;
  double max_z = 0.0;
  double max_abs = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a + 1; b < m; ++b) {
      const Complex za = spec.center(static_cast<CellIndex>(a));
      const Complex zb = spec.center(static_cast<CellIndex>(b));
      if (std::abs(za - zb) < 4.0 * spec.delta - 1e-12) continue;
      const double mean = sum(a, b) / N;
      const double var = (sum4(a, b) / N - mean * mean) * N / (N - 1.0);
      const double se = std::sqrt(var / N);
      const double err = std::abs(mean - covariance_G(za, zb));
      const double z = err / se;
      max_abs = std::max(max_abs, err);
      max_z = std::max(max_z, z);
      if (z > 3.0) ++beyond3;
      ++pairs;
    }
  }
  // Family-wise bound: with this many pairs a per-pair 3-sigma rule fails
  // almost surely for an exact sampler, so the maximum is held to the
  // Bonferroni threshold at family-wise level 1e-3.
  const double zmax = two_sided_z(1e-3 / static_cast<double>(pairs));
  const double frac = static_cast<double>(beyond3) / static_cast<double>(pairs);
  return {max_z <= zmax,
          fmt("%zu pairs, max |z| = %.2f (family-wise bound %.2f), max abs error %.4f, "
              "%zu pairs beyond 3 SE (%.3f%%, nominal 0.270%%)",
              pairs, max_z, zmax, max_abs, beyond3, 100.0 * frac)};
}

// 2. Circle-average increments about the origin against N(0, dt).
Outcome criterion2() {
  const GridSpec spec(128, 1.0 / 32.0);
  const std::size_t samples = 1000;
  const double t_grid[] = {0.0, 1.0, 2.0};
  std::vector<std::vector<double>> inc(2);
  for (std::size_t s = 0; s < samples; ++s) {
    const GridField f = sample_gff_spectral(spec, 1000 + s);
    double prev = circle_average(f, spec.origin, std::exp(-t_grid[0]));
    for (std::size_t k = 1; k < 3; ++k) {
      const double cur = circle_average(f, spec.origin, std::exp(-t_grid[k]));
      inc[k - 1].push_back((cur - prev) / std::sqrt(t_grid[k] - t_grid[k - 1]));
      prev = cur;
    }
  }
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto ks = stats::ks_test(inc[k], stats::normal_cdf);
    ok = ok && ks.p_value >= 1e-3;
    detail += fmt("%st in [%g, %g]: D = %.4f, p = %.3g, sd = %.3f", k ? "; " : "", t_grid[k], t_grid[k + 1],
                  ks.statistic, ks.p_value, stats::stddev(inc[k]));
  }
  return {ok, detail};
}

// 3. Constant shifts: masses scale by e^{gamma C}, distances by e^{xi C}.
Outcome criterion3() {
  const GridSpec spec(64, 1.0 / 16.0);
  const double gamma = std::sqrt(8.0 / 3.0);
  const double xi = gamma / 4.0;
  const double eps = 2.0 * spec.delta;
  double mass_err = 0.0;
  double dist_err = 0.0;
  const auto regions = std::vector<Region>{Region::disk(spec.origin, 0.5), Region::square(spec.origin, 1.0)};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const GridField smooth = heat_kernel_mollify(sample_gff(spec, seed), eps);
    const GridMeasure m0 = gmc_from_mollified(smooth, gamma, eps);
    const WeightedGrid g0 = lfpp_graph_from_mollified(smooth, xi, eps);
    const CellIndex src[] = {spec.nearest_cell(spec.origin)};
    const DistanceField d0 = run_dijkstra(g0, src);
    for (double C : {-1.5, 0.5, 2.0}) {
      GridField lifted = smooth;
      for (double& v : lifted.values) v += C;
      const GridMeasure m1 = gmc_from_mollified(lifted, gamma, eps);
      const double mf = std::exp(gamma * C);
      mass_err = std::max(mass_err, std::abs(m1.total() / (mf * m0.total()) - 1.0));
      for (const auto& r : regions) {
        const CellSet cells = r.rasterize(spec);
        mass_err = std::max(mass_err, std::abs(measure_of(m1, cells) / (mf * measure_of(m0, cells)) - 1.0));
      }
      const WeightedGrid g1 = lfpp_graph_from_mollified(lifted, xi, eps);
      const DistanceField d1 = run_dijkstra(g1, src);
      const double df = std::exp(xi * C);
      for (CellIndex v = 0; v < d0.dist.size(); ++v)
        if (d0[v] > 0.0) dist_err = std::max(dist_err, std::abs(d1[v] / (df * d0[v]) - 1.0));
    }
  }
  return {mass_err <= 1e-12 && dist_err <= 1e-12,
          fmt("max relative error: mass %.2e, distance %.2e", mass_err, dist_err)};
}

// 4. Dijkstra against exhaustive path enumeration on small random grids.
Outcome criterion4() {
  std::mt19937_64 rng(4);
  std::size_t mismatches = 0;
  std::size_t compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 3);
    const WeightedGrid g = oracle::random_grid(n, rng, 0.25);
    for (CellIndex s = 0; s < g.size(); ++s) {
      const CellIndex src[] = {s};
      const DistanceField d = run_dijkstra(g, src);
      const auto e = oracle::enumerate_all_shortest(g, s);
      for (CellIndex t = 0; t < g.size(); ++t) {
        ++compared;
        if (d[t] != e[t]) ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt("%zu ordered pairs on 1000 grids, %zu mismatches", compared, mismatches)};
}

// 5. pack_eps <= N_eps <= pack_{eps/2} with exact minimum covers.
Outcome criterion5() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> size(3, kExactCoverMaxSize);
  std::uniform_real_distribution<double> eps_dist(0.8, 4.5);
  std::size_t violations = 0;
  std::size_t oracle_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = size(rng);
    const FiniteMetric m = oracle::random_metric(n, rng);
    const auto set = oracle::iota(n);
    const double eps = eps_dist(rng);
    const std::size_t cover = exact_cover_count(m, set, eps, CenterPolicy::InSet);
    if (cover != oracle::cover_dp(m, set, set, eps)) ++oracle_mismatch;
    const std::size_t pack = maximal_packing(m, set, eps).count;
    const std::size_t pack_half = maximal_packing(m, set, eps / 2.0).count;
    if (pack > cover || cover > pack_half) ++violations;
  }
  return {violations == 0 && oracle_mismatch == 0,
          fmt("1000 metrics with 3..15 points: %zu sandwich violations, %zu disagreements with the subset DP",
              violations, oracle_mismatch)};
}

// Shared LFPP ensemble for criteria 6 to 8.
struct LfppEnsemble {
  double ball_exponent = 0.0;
  std::vector<double> ball_slopes;
  std::vector<double> cv_medians;
  std::vector<double> content_eps;
  double unit = 0.0;
  RescalingCoefficients rescaling;
  std::vector<double> cover_eps;
  std::vector<std::string> warnings;
};

constexpr std::size_t kLfppSide = 1024;
constexpr std::size_t kLfppSamples = 20;

ExperimentConfig lfpp_config(const std::string& experiment, const std::string& cache) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.gamma = std::sqrt(8.0 / 3.0);
  c.d_gamma = 4.0;
  c.n = kLfppSide;
  c.delta = 4.0 / static_cast<double>(kLfppSide);
  for (std::uint64_t s = 1; s <= kLfppSamples; ++s) c.seeds.push_back(s);
  c.output_dir = "";
  c.cache_dir = cache;
  return c;
}

const LfppEnsemble& lfpp_ensemble() {
  static std::optional<LfppEnsemble> memo;
  if (memo) return *memo;
  const auto cache = (std::filesystem::temp_directory_path() / "lqglab_acceptance_fields").string();
  LfppEnsemble out;

  ExperimentConfig ball = lfpp_config("ball-volume", cache);
  const ResultRecord rb = run_experiment(ball);
  for (const auto& r : rb.rows) out.ball_slopes.push_back(r.at("slope").get<double>());
  out.ball_exponent = rb.aggregate.at("slope").at("median").get<double>();
  out.warnings.insert(out.warnings.end(), rb.warnings.begin(), rb.warnings.end());

  ExperimentConfig content = lfpp_config("content-ratio", cache);
  content.eps_list = {0.2, 0.1, 0.05};
  out.content_eps = content.eps_list;
  const ResultRecord rc = run_experiment(content);
  for (const auto& lvl : rc.aggregate.at("levels")) out.cv_medians.push_back(lvl.at("cv").at("median").get<double>());
  std::map<std::uint64_t, double> units;
  for (const auto& r : rc.rows)
    units[r.at("seed").get<std::uint64_t>()] =
        r.at("eps").get<double>() / content.eps_list.at(r.at("level").get<std::size_t>());
  std::vector<double> u;
  for (const auto& [seed, v] : units) u.push_back(v);
  out.unit = stats::median(u);
  out.warnings.insert(out.warnings.end(), rc.warnings.begin(), rc.warnings.end());

  // Cover counts at fixed eps, shared by every sample.
  ExperimentConfig dim = lfpp_config("dimension", cache);
  dim.eps_mode = "absolute";
  for (double f : {0.4, 0.2, 0.1, 0.05}) dim.eps_list.push_back(f * out.unit);
  out.cover_eps = dim.eps_list;
  const ResultRecord rd = run_experiment(dim);
  std::map<std::uint64_t, std::vector<double>> by_seed;
  for (const auto& r : rd.rows) by_seed[r.at("seed").get<std::uint64_t>()].push_back(r.at("count").get<double>());
  std::vector<std::vector<double>> counts;
  for (auto& [seed, v] : by_seed) counts.push_back(v);
  out.rescaling = estimate_rescaling_coefficients(counts, dim.eps_list);

  std::filesystem::remove_all(cache);
  memo = std::move(out);
  return *memo;
}

// 6. LFPP ball-volume exponent near d_gamma = 4.
Outcome criterion6() {
  const auto& e = lfpp_ensemble();
  const auto [lo, hi] = std::minmax_element(e.ball_slopes.begin(), e.ball_slopes.end());
  return {e.ball_exponent >= 3.3 && e.ball_exponent <= 4.7,
          fmt("median exponent %.3f over %zu samples (range %.3f to %.3f)", e.ball_exponent, e.ball_slopes.size(),
              *lo, *hi)};
}

// 7. Content ratio concentrates on the four quadrants as eps shrinks.
Outcome criterion7() {
  const auto& e = lfpp_ensemble();
  bool decreasing = e.cv_medians.size() == 3;
  for (std::size_t i = 1; i < e.cv_medians.size(); ++i) decreasing = decreasing && e.cv_medians[i] < e.cv_medians[i - 1];
  const bool final_ok = !e.cv_medians.empty() && e.cv_medians.back() <= 0.35;
  std::string detail = "median CV by level:";
  for (std::size_t i = 0; i < e.cv_medians.size(); ++i)
    detail += fmt(" %g->%.3f", e.content_eps[i], e.cv_medians[i]);
  return {decreasing && final_ok, detail};
}

// 8. Ratio tests b_{2 eps}/b_eps against 2^{-d} at the two smallest eps.
Outcome criterion8() {
  const auto& e = lfpp_ensemble();
  const double d = e.ball_exponent;
  const double predicted = std::pow(2.0, -d);
  std::vector<RatioTest> twos;
  for (const auto& t : e.rescaling.ratio_tests)
    if (t.r == 2.0) twos.push_back(t);
  std::sort(twos.begin(), twos.end(), [](const RatioTest& a, const RatioTest& b) { return a.eps < b.eps; });
  if (twos.size() < 2) return {false, "fewer than two ratio tests available"};
  bool ok = true;
  std::string detail = fmt("d = %.3f, 2^-d = %.4f, fitted cover exponent %.3f;", d, predicted, e.rescaling.delta_dim);
  for (std::size_t i = 0; i < 2; ++i) {
    const double rel = twos[i].ratio / predicted - 1.0;
    ok = ok && std::abs(rel) <= 0.2;
    detail += fmt(" eps %.4g: ratio %.4f (%+.1f%%)", twos[i].eps, twos[i].ratio, 100.0 * rel);
  }
  return {ok, detail};
}

// 9. Arcsine law for the contact intervals of the L component.
Outcome criterion9() {
  ExperimentConfig c;
  c.experiment = "arcsine";
  c.kappa_prime = 6.0;
  c.T = 1.0;
  c.intervals = 33;
  c.dt = 1.0 / (1000.0 * static_cast<double>(c.intervals));
  c.output_dir = "";
  for (std::uint64_t s = 1; s <= 10000; ++s) c.seeds.push_back(s);
  const ResultRecord r = run_experiment(c);
  const double worst = r.aggregate.at("max_abs_deviation").get<double>();
  std::size_t worst_k = 0;
  double w = -1.0;
  for (const auto& p : r.aggregate.at("profile")) {
    const double dev = std::abs(p.at("empirical").get<double>() - p.at("predicted").get<double>());
    if (dev > w) {
      w = dev;
      worst_k = p.at("k").get<std::size_t>();
    }
  }
  return {worst <= 0.02, fmt("10000 paths, k = 0..32: max |p_k - arcsine| = %.4f at k = %zu", worst, worst_k)};
}

// 10. Increment covariance of (L, R).
Outcome criterion10() {
  bool ok = true;
  std::string detail;
  const double a = 1.0;
  const double dt = 1e-3;
  for (double kp : {6.0, 8.0, 16.0}) {
    std::vector<double> ll;
    std::vector<double> rr;
    std::vector<double> lr;
    for (std::uint64_t s = 1; s <= 20; ++s) {
      const auto p = sample_lr(kp, a, 10.0, dt, s);
      for (std::size_t i = 0; i < p.steps(); ++i) {
        const double dl = p.L[i + 1] - p.L[i];
        const double dr = p.R[i + 1] - p.R[i];
        ll.push_back(dl * dl);
        rr.push_back(dr * dr);
        lr.push_back(dl * dr);
      }
    }
    const double rho = lr_correlation(kp);
    const double zl = std::abs(stats::mean(ll) - a * dt) / stats::standard_error(ll);
    const double zr = std::abs(stats::mean(rr) - a * dt) / stats::standard_error(rr);
    const double zc = std::abs(stats::mean(lr) - rho * a * dt) / stats::standard_error(lr);
    ok = ok && zl <= 3.0 && zr <= 3.0 && zc <= 3.0;
    detail += fmt("%skappa' %g: |z| = %.2f, %.2f, %.2f", detail.empty() ? "" : "; ", kp, zl, zr, zc);
  }
  return {ok, detail};
}

// 11. Mated-CRT ball growth exponent near 4.
Outcome criterion11() {
  ExperimentConfig c;
  c.experiment = "crt-dimension";
  c.kappa_prime = 6.0;
  c.T = 1.0;
  c.crt_eps = 1e-5;
  c.dt = 1e-6;
  c.output_dir = "";
  for (std::uint64_t s = 1; s <= 10; ++s) c.seeds.push_back(s);
  const ResultRecord r = run_experiment(c);
  const double med = r.aggregate.at("slope").at("median").get<double>();
  const double deg = r.rows.front().at("mean_degree").get<double>();
  const auto diam = r.rows.front().at("diameter").get<std::size_t>();
  return {med >= 3.3 && med <= 4.7,
          fmt("median exponent %.3f over %zu graphs of %zu cells (first graph: mean degree %.2f, diameter %zu)", med,
              r.rows.size(), r.rows.front().at("cells").get<std::size_t>(), deg, diam)};
}

// 12. Exponential functional mean.
Outcome criterion12() {
  ExperimentConfig c;
  c.experiment = "exp-functional";
  c.gamma = std::sqrt(8.0 / 3.0);
  c.d_gamma = 4.0;
  c.dt = 0.01;
  c.output_dir = "";
  for (std::uint64_t s = 1; s <= 10000; ++s) c.seeds.push_back(s);
  const ResultRecord r = run_experiment(c);
  const double mean = r.aggregate.at("mean").get<double>();
  const double se = r.aggregate.at("stderr").get<double>();
  const double pred = r.aggregate.at("predicted").get<double>();
  return {std::abs(mean - pred) <= 3.0 * se,
          fmt("mean %.4f +- %.4f vs %.4f (%.2f SE)", mean, se, pred, std::abs(mean - pred) / se)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3,  criterion4,
                                                       criterion5, criterion6, criterion7,  criterion8,
                                                       criterion9, criterion10, criterion11, criterion12};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  if (wanted.empty())
    for (int i = 1; i <= 12; ++i) wanted.insert(i);

  int failures = 0;
  for (int k : wanted) {
    if (k < 1 || k > 12) {
      std::fprintf(stderr, "no criterion %d\n", k);
      return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
