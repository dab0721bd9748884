#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lqglab/lqglab.hpp"

using namespace lqglab;

TEST(CovarianceG, Examples) {
  EXPECT_NEAR(covariance_G(0.3, 0.4), std::log(10.0), 1e-12);
  EXPECT_NEAR(covariance_G(2.0, 3.0), std::log(6.0), 1e-12);
  EXPECT_NEAR(covariance_G(0.0, std::polar(1.0, 0.7)), 0.0, 1e-15);
  EXPECT_THROW(covariance_G(0.5, 0.5), ValidationError);
}

TEST(Constants, QAndXi) {
  const auto a = constants_Q_xi(1.0, 2.5);
  EXPECT_DOUBLE_EQ(a.Q, 2.5);
  EXPECT_DOUBLE_EQ(a.xi, 0.4);
  const auto b = constants_Q_xi(std::sqrt(8.0 / 3.0), 4.0);
  EXPECT_NEAR(b.Q, 5.0 / std::sqrt(6.0), 1e-12);
  EXPECT_NEAR(b.xi, 0.408248290463863, 1e-12);
  EXPECT_GT(q_constant(1.999), 2.0);
  EXPECT_THROW(constants_Q_xi(1.0, 2.0), ValidationError);
  EXPECT_THROW(constants_Q_xi(2.0, 3.0), ValidationError);
}

TEST(ExactSampler, DeterministicAndGuarded) {
  const GridSpec s(16, 0.125);
  const auto a = sample_gff_exact(s, 42);
  const auto b = sample_gff_exact(s, 42);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, sample_gff_exact(s, 43).values);
  EXPECT_EQ(a.kind, FieldKind::WholePlaneGFF);
  EXPECT_THROW(sample_gff_exact(GridSpec(65, 0.01), 1), ValidationError);
}

TEST(ExactSampler, LatticeCovarianceIsPositiveDefinite) {
  for (std::size_t n : {4u, 8u, 16u, 32u}) {
    const GridSpec s(n, 2.0 / static_cast<double>(n));
    Eigen::LLT<Eigen::MatrixXd> llt(lattice_covariance(s));
    EXPECT_EQ(llt.info(), Eigen::Success) << "n = " << n;
  }
}

TEST(ExactSampler, MonteCarloCovarianceAndMean) {
  // Centres at multiples of 0.1 include 0.3 and 0.4 on the real axis.
  const GridSpec s(9, 0.1);
  const ExactGffSampler sampler(s);
  const CellIndex z = s.nearest_cell(0.3);
  const CellIndex w = s.nearest_cell(0.4);
  ASSERT_NEAR(std::abs(s.center(z) - Complex(0.3, 0.0)), 0.0, 1e-12);
  constexpr int kDraws = 100000;
  std::vector<double> prod(kDraws);
  std::vector<std::vector<double>> cells(s.size(), std::vector<double>(kDraws));
  for (int i = 0; i < kDraws; ++i) {
    const auto f = sampler.draw(static_cast<std::uint64_t>(i));
    prod[i] = f[z] * f[w];
    for (CellIndex c = 0; c < s.size(); ++c) cells[c][i] = f[c];
  }
  EXPECT_NEAR(stats::mean(prod), std::log(10.0), 3.0 * stats::standard_error(prod));
  for (CellIndex c = 0; c < s.size(); ++c) {
    EXPECT_NEAR(stats::mean(cells[c]), 0.0, 3.0 * stats::standard_error(cells[c])) << "cell " << c;
  }
}

TEST(SpectralSampler, Guards) {
  EXPECT_THROW(sample_gff_spectral(GridSpec(96, 1.0 / 32), 1), ValidationError);
  EXPECT_THROW(sample_gff_spectral(GridSpec(32, 1.0 / 8), 1), ValidationError);
  EXPECT_THROW(sample_gff_spectral(GridSpec(64, 1.0 / 64), 1), ValidationError);  // no unit circle
}

TEST(SpectralSampler, Deterministic) {
  const GridSpec s(64, 1.0 / 16);
  const auto a = sample_gff_spectral(s, 9);
  EXPECT_EQ(a.values, sample_gff_spectral(s, 9).values);
  EXPECT_NE(a.values, sample_gff_spectral(s, 10).values);
  EXPECT_NEAR(circle_average(a, 0.0, 1.0), 0.0, 1e-12);
}

// The spectral field is X - (unit circle average of X) with X stationary of
// covariance K(z - w) = log(R/|z - w|). Its exact covariance follows from the
// quadrature weights, which gives a deterministic bias bound against G.
TEST(SpectralSampler, ExactCovarianceCloseToGOnOverlapGrid) {
  const GridSpec s(64, 1.0 / 16);
  const double big_r = 4.0 * 128.0 * s.delta;
  auto K = [&](Complex a, Complex b) {
    const double d = std::abs(a - b);
    return d < 1e-12 ? std::log(big_r / s.delta) + kLatticeDiagonalBump : std::log(big_r / d);
  };
  // Quadrature nodes of the unit circle average with bilinear weights.
  std::vector<std::pair<Complex, double>> nodes;
  const auto count = static_cast<std::size_t>(std::ceil(2.0 * std::numbers::pi / s.delta));
  for (std::size_t i = 0; i < count; ++i) {
    const Complex p = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count));
    const double x = s.lattice_x(p);
    const double y = s.lattice_y(p);
    const double j0 = std::floor(x);
    const double k0 = std::floor(y);
    const double fx = x - j0;
    const double fy = y - k0;
    const double wq = 1.0 / static_cast<double>(count);
    auto at = [&](double j, double k) { return s.center(static_cast<std::size_t>(j), static_cast<std::size_t>(k)); };
    nodes.emplace_back(at(j0, k0), wq * (1 - fx) * (1 - fy));
    nodes.emplace_back(at(j0 + 1, k0), wq * fx * (1 - fy));
    nodes.emplace_back(at(j0, k0 + 1), wq * (1 - fx) * fy);
    nodes.emplace_back(at(j0 + 1, k0 + 1), wq * fx * fy);
  }
  double bb = 0.0;
  for (const auto& [p, wp] : nodes)
    for (const auto& [q, wq] : nodes) bb += wp * wq * K(p, q);
  std::vector<CellIndex> probes;
  for (std::size_t k = 2; k < s.n; k += 6)
    for (std::size_t j = 2; j < s.n; j += 6) probes.push_back(s.index(j, k));
  std::vector<double> a(probes.size(), 0.0);
  for (std::size_t i = 0; i < probes.size(); ++i)
    for (const auto& [p, wp] : nodes) a[i] += wp * K(s.center(probes[i]), p);
  double worst = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    for (std::size_t j = i + 1; j < probes.size(); ++j) {
      const Complex z = s.center(probes[i]);
      const Complex w = s.center(probes[j]);
      if (std::abs(z - w) < 4.0 * s.delta) continue;
      const double cov = K(z, w) - a[i] - a[j] + bb;
      worst = std::max(worst, std::abs(cov - covariance_G(z, w)));
    }
  }
  EXPECT_LE(worst, 0.1);
}

TEST(CircleAverage, ConstantAndOddFields) {
  const GridSpec s(32, 1.0 / 8);
  const auto c = field_from_function(s, [](Complex) { return 1.75; });
  const auto re = field_from_function(s, [](Complex z) { return z.real(); });
  for (double r : {0.25, 0.5, 1.0, 1.5}) {
    EXPECT_NEAR(circle_average(c, 0.0, r), 1.75, 1e-13);
    EXPECT_NEAR(circle_average(re, 0.0, r), 0.0, 1e-13);
  }
  EXPECT_THROW(circle_average(c, 0.0, 0.2), ValidationError);
  EXPECT_THROW(circle_average(c, 0.0, 1.99), ValidationError);
}

TEST(Mollify, ConstantLinearAndSpike) {
  const GridSpec s(64, 1.0 / 16);
  const double eps = 2.0 * s.delta;
  const auto c = heat_kernel_mollify(field_from_function(s, [](Complex) { return -0.5; }), eps);
  for (double v : c.values) EXPECT_NEAR(v, -0.5, 1e-14);
  EXPECT_EQ(c.kind, FieldKind::Derived);

  const auto lin = heat_kernel_mollify(field_from_function(s, [](Complex z) { return z.real(); }), eps);
  const auto reach = static_cast<std::size_t>(std::ceil(4.0 * eps / s.delta));
  for (std::size_t k = reach; k + reach < s.n; ++k)
    for (std::size_t j = reach; j + reach < s.n; ++j) EXPECT_NEAR(lin.at(j, k), s.center(j, k).real(), 1e-6);

  std::vector<double> v(s.size(), 0.0);
  const CellIndex z0 = s.index(32, 32);
  v[z0] = 1.0 / (s.delta * s.delta);  // unit mass
  const auto spike = heat_kernel_mollify(GridField(s, v), eps);
  for (CellIndex nb : {s.index(33, 32), s.index(33, 33), s.index(34, 31), s.index(32, 32)}) {
    const double r2 = std::norm(s.center(nb) - s.center(z0));
    const double p = std::exp(-r2 / (eps * eps)) / (std::numbers::pi * eps * eps);
    EXPECT_NEAR(spike[nb] * s.delta * s.delta, p * s.delta * s.delta, 1e-3 * p * s.delta * s.delta);
  }
  EXPECT_THROW(heat_kernel_mollify(c, 0.5 * s.delta), ValidationError);
}

TEST(RadialLateral, RadialFieldHasNoLateralPart) {
  const GridSpec s(64, 1.0 / 16);
  const auto f = field_from_function(s, [](Complex z) { return std::log(1.0 + std::abs(z)); });
  const auto parts = radial_lateral_decompose(f);
  double worst = 0.0;
  for (CellIndex c = 0; c < s.size(); ++c) {
    const double r = std::abs(s.center(c));
    if (r < 4.0 * s.delta || r > s.extent() - s.delta) continue;
    worst = std::max(worst, std::abs(parts.lateral[c]));
  }
  EXPECT_LT(worst, 2e-3);
}

TEST(RadialLateral, ReconstructionAndZeroLateralCircleAverages) {
  const GridSpec s(64, 1.0 / 16);
  const auto f = sample_gff(s, 3);
  const auto parts = radial_lateral_decompose(f);
  for (CellIndex c = 0; c < s.size(); ++c) {
    EXPECT_NEAR(parts.radial_at(std::abs(s.center(c))) + parts.lateral[c], f[c], 1e-12);
  }
  for (std::size_t i = 0; i < parts.radii.size(); i += 4) {
    const double r = parts.radii[i];
    if (r > s.extent() - s.delta) continue;
    // Cells straddle several tabulated radii when r is a few lattice steps,
    // so the rough radial profile leaks more into the lateral average there.
    const double tol = r >= 8.0 * s.delta ? 0.05 : 0.1;
    EXPECT_NEAR(circle_average(parts.lateral, 0.0, r), 0.0, tol) << "r = " << r;
  }
}

TEST(RadialLateral, RadialAndLateralUncorrelated) {
  const GridSpec s(64, 1.0 / 16);
  const CellIndex probe = s.nearest_cell(Complex(0.6, -0.3));
  constexpr int kDraws = 1500;
  std::vector<double> x(kDraws);
  std::vector<double> y(kDraws);
  for (int i = 0; i < kDraws; ++i) {
    const auto parts = radial_lateral_decompose(sample_gff(s, 1000 + i));
    x[i] = parts.radial_at(0.5);
    y[i] = parts.lateral[probe];
  }
  std::vector<double> prod(kDraws);
  const double mx = stats::mean(x);
  const double my = stats::mean(y);
  for (int i = 0; i < kDraws; ++i) prod[i] = (x[i] - mx) * (y[i] - my);
  EXPECT_NEAR(stats::mean(prod), 0.0, 3.0 * stats::standard_error(prod));
}

TEST(QuantumCone, RadialDriftAndConditioning) {
  const double gamma = std::sqrt(8.0 / 3.0);
  const double q = q_constant(gamma);
  constexpr int kPaths = 2000;
  std::vector<std::vector<double>> at(3, std::vector<double>(kPaths));
  for (int i = 0; i < kPaths; ++i) {
    const auto p = sample_cone_radial_process(gamma, -1.0, 3.0, kConePathStep, derive_stream(77, i));
    EXPECT_EQ(p.values[p.negative_steps], 0.0);
    for (std::size_t k = 1; k <= p.negative_steps; ++k) {
      const double s = static_cast<double>(k) * p.dt;
      const double bhat = p.values[p.negative_steps - k] + gamma * s;
      ASSERT_GT(bhat + (q - gamma) * s, 0.0);
    }
    for (int t = 1; t <= 3; ++t) at[t - 1][i] = p.value_at(t) - gamma * t;
  }
  for (const auto& v : at) EXPECT_NEAR(stats::mean(v), 0.0, 3.0 * stats::standard_error(v));
}

TEST(QuantumCone, CircleAverageEmbedding) {
  const GridSpec s(64, 1.0 / 16);
  const double gamma = std::sqrt(8.0 / 3.0);
  const auto h = sample_quantum_cone(s, gamma, 5);
  EXPECT_EQ(h.kind, FieldKind::QuantumCone);
  EXPECT_EQ(h.values, sample_quantum_cone(s, gamma, 5).values);

  // Removing the lateral part of the underlying whole-plane sample leaves a
  // radial profile: equal on cells related by the lattice symmetries.
  const auto lateral = radial_lateral_decompose(sample_gff(s, derive_stream(5, 10))).lateral;
  const std::size_t n = s.n;
  auto profile = [&](std::size_t j, std::size_t k) { return h.at(j, k) - lateral.at(j, k); };
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_NEAR(profile(j, k), profile(k, j), 1e-12);
      EXPECT_NEAR(profile(j, k), profile(n - 1 - j, k), 1e-12);
      EXPECT_NEAR(profile(j, k), profile(j, n - 1 - k), 1e-12);
    }
  }

  // The unit-circle average is pinned at 0 in the continuum. On the lattice
  // the profile is read off at |z| within a cell of 1, where its mean rises
  // on both sides, so the bias is positive and shrinks with the mesh.
  auto unit_bias = [&](std::size_t side, double delta) {
    std::vector<double> v;
    for (std::uint64_t seed = 1; seed <= 200; ++seed)
      v.push_back(circle_average(sample_quantum_cone(GridSpec(side, delta), gamma, seed), 0.0, 1.0));
    return std::pair{stats::mean(v), stats::standard_error(v)};
  };
  const auto [coarse, coarse_se] = unit_bias(64, 1.0 / 16);
  const auto [fine, fine_se] = unit_bias(128, 1.0 / 32);
  EXPECT_GT(coarse, 0.0);
  EXPECT_LT(fine, coarse - 2.0 * std::hypot(coarse_se, fine_se));
  EXPECT_LT(coarse, 0.2);
}

TEST(QuantumCone, Guards) {
  const GridSpec s(64, 1.0 / 16);
  EXPECT_THROW(sample_quantum_cone(s, 2.0, 1), ValidationError);
  EXPECT_THROW(sample_quantum_cone(GridSpec(64, 1.0 / 16, {0.5, 0.0}), 1.0, 1), ValidationError);
  EXPECT_THROW(sample_cone_radial_process(1.0, -1.0, 1.0, 1e-3, 1, 0), NumericalError);
}
