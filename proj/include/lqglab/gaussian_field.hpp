#pragma once

// Whole-plane Gaussian free field on a lattice: samplers, circle averages,
// heat-kernel mollification, the radial/lateral split and the quantum cone.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "rng.hpp"

namespace lqglab {

/// Whole-plane GFF covariance kernel normalised so that h_1(0) = 0.
inline double covariance_G(Complex z, Complex w) {
  const double sep = std::abs(z - w);
  if (sep == 0.0) throw ValidationError("covariance_G: kernel diverges on the diagonal z = w");
  return std::log(std::max(std::abs(z), 1.0) * std::max(std::abs(w), 1.0) / sep);
}

struct LqgConstants {
  double Q;
  double xi;
};

inline double q_constant(double gamma) {
  require(gamma > 0.0 && gamma < 2.0, "gamma must lie in (0, 2)");
  return gamma / 2.0 + 2.0 / gamma;
}

inline LqgConstants constants_Q_xi(double gamma, double d_gamma) {
  require(gamma > 0.0 && gamma < 2.0, "constants_Q_xi: gamma must lie in (0, 2)");
  require(d_gamma > 2.0, "constants_Q_xi: d_gamma must exceed 2 (it is the dimension of the surface)");
  return {q_constant(gamma), gamma / d_gamma};
}

/// Added to log(1/delta) on the lattice diagonal. The symbol of the lattice
/// kernel -log|v| (v != 0) has minimum -1.0562 at wavevector (pi, 0); any
/// bump above that makes both the dense and the circulant covariance positive
/// definite at every grid size.
inline constexpr double kLatticeDiagonalBump = 1.1;

inline double lattice_variance(Complex z, double delta) {
  return std::log(1.0 / delta) + 2.0 * std::log(std::max(std::abs(z), 1.0)) + kLatticeDiagonalBump;
}

inline Eigen::MatrixXd lattice_covariance(const GridSpec& spec) {
  const auto size = static_cast<Eigen::Index>(spec.size());
  Eigen::MatrixXd cov(size, size);
  for (Eigen::Index a = 0; a < size; ++a) {
    const Complex za = spec.center(static_cast<CellIndex>(a));
    cov(a, a) = lattice_variance(za, spec.delta);
    for (Eigen::Index b = 0; b < a; ++b) {
      const double g = covariance_G(za, spec.center(static_cast<CellIndex>(b)));
      cov(a, b) = g;
      cov(b, a) = g;
    }
  }
  return cov;
}

inline constexpr std::size_t kExactSamplerMaxSide = 64;

/// Dense Cholesky sampler. Factorises once; every draw is a pure function of the seed.
class ExactGffSampler {
 public:
  explicit ExactGffSampler(const GridSpec& spec) : spec_(spec) {
    if (spec.n > kExactSamplerMaxSide) {
      std::ostringstream msg;
      msg << "sample_gff_exact: n = " << spec.n << " exceeds " << kExactSamplerMaxSide
          << "; use the spectral sampler for large grids";
      throw ValidationError(msg.str());
    }
    const Eigen::MatrixXd cov = lattice_covariance(spec);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
      std::ostringstream msg;
      msg << "sample_gff_exact: covariance not positive definite, smallest eigenvalue "
          << eig.eigenvalues().minCoeff();
      throw NumericalError(msg.str());
    }
    lower_ = llt.matrixL();
  }

  [[nodiscard]] const GridSpec& spec() const { return spec_; }
  [[nodiscard]] const Eigen::MatrixXd& lower() const { return lower_; }

  [[nodiscard]] GridField draw(std::uint64_t seed) const {
    GaussianSource g(derive_stream(seed, 0));
    Eigen::VectorXd white(lower_.rows());
    for (Eigen::Index i = 0; i < white.size(); ++i) white[i] = g();
    const Eigen::VectorXd h = lower_.triangularView<Eigen::Lower>() * white;
    GridField f(spec_, std::vector<double>(h.data(), h.data() + h.size()), FieldKind::WholePlaneGFF);
    f.seed = seed;
    f.normalization_note = "exact Cholesky; Cov = G off the diagonal, log(1/delta)+2log max(|z|,1)+1.1 on it";
    return f;
  }

 private:
  GridSpec spec_;
  Eigen::MatrixXd lower_;
};

/// Process-wide memo of samplers keyed by grid; factorisations are reused
/// across draws and threads.
template <class Sampler>
std::shared_ptr<const Sampler> shared_sampler(const GridSpec& spec) {
  static std::mutex mutex;
  static std::vector<std::shared_ptr<const Sampler>> memo;
  const std::lock_guard lock(mutex);
  for (const auto& s : memo)
    if (s->spec() == spec) return s;
  auto s = std::make_shared<const Sampler>(spec);
  if (memo.size() >= 2) memo.erase(memo.begin());
  memo.push_back(s);
  return s;
}

inline GridField sample_gff_exact(const GridSpec& spec, std::uint64_t seed) {
  return shared_sampler<ExactGffSampler>(spec)->draw(seed);
}

/// Trapezoid rule on max(16, ceil(2 pi r / delta)) equispaced angles of the
/// bilinear interpolant.
inline double circle_average(const GridField& field, Complex z, double r) {
  const double delta = field.spec.delta;
  require(r >= 2.0 * delta, "circle_average: radius must be at least 2*delta");
  const auto count = std::max<std::size_t>(
      16, static_cast<std::size_t>(std::ceil(2.0 * std::numbers::pi * r / delta)));
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    const Complex w = z + std::polar(r, theta);
    if (!field.spec.interpolable(w)) {
      throw ValidationError("circle_average: circle leaves the grid");
    }
    sum += field.interpolate(w);
  }
  return sum / static_cast<double>(count);
}

inline bool circle_inside(const GridSpec& spec, Complex z, double r) {
  const double lo = spec.delta / 2.0 - spec.extent();
  const double hi = spec.extent() - spec.delta / 2.0;
  const Complex d = z - spec.origin;
  return d.real() - r >= lo && d.real() + r <= hi && d.imag() - r >= lo && d.imag() + r <= hi;
}

/// Circulant-embedding sampler: a stationary field with covariance
/// log(R/|z-w|) (diagonal log(R/delta) + bump) is synthesised on the doubled
/// torus, then its unit circle average about 0 is subtracted. The subtraction
/// turns the stationary kernel into G exactly (mean-value property of log).
class SpectralGffSampler {
 public:
  explicit SpectralGffSampler(const GridSpec& spec) : spec_(spec), side_(2 * spec.n) {
    require(is_power_of_two(spec.n), "sample_gff_spectral: n must be a power of two");
    require(spec.n >= 64, "sample_gff_spectral: n must be at least 64");
    require(circle_inside(spec, Complex(0.0, 0.0), 1.0),
            "sample_gff_spectral: the grid must contain the unit circle about 0");

    const double big_r = 4.0 * static_cast<double>(side_) * spec.delta;
    Fft2d fft(side_, side_);
    auto buf = fft.data();
    for (std::size_t b = 0; b < side_; ++b) {
      const double db = static_cast<double>(std::min(b, side_ - b));
      for (std::size_t a = 0; a < side_; ++a) {
        const double da = static_cast<double>(std::min(a, side_ - a));
        const double dist = std::hypot(da, db) * spec.delta;
        const double k = (a == 0 && b == 0) ? std::log(big_r / spec.delta) + kLatticeDiagonalBump
                                            : std::log(big_r / dist);
        buf[b * side_ + a] = k;
      }
    }
    fft.execute();
    amplitude_.resize(buf.size());
    double max_eig = 0.0;
    double min_eig = 0.0;
    for (auto v : buf) {
      max_eig = std::max(max_eig, v.real());
      min_eig = std::min(min_eig, v.real());
    }
    if (min_eig < -1e-9 * max_eig) {
      std::ostringstream msg;
      msg << "sample_gff_spectral: circulant embedding not positive semidefinite (min eigenvalue "
          << min_eig << ")";
      throw NumericalError(msg.str());
    }
    const double norm = static_cast<double>(side_);
    for (std::size_t i = 0; i < buf.size(); ++i) {
      amplitude_[i] = std::sqrt(std::max(buf[i].real(), 0.0)) / norm;
    }
  }

  [[nodiscard]] const GridSpec& spec() const { return spec_; }

  [[nodiscard]] GridField draw(std::uint64_t seed) const {
    GaussianSource g(derive_stream(seed, 1));
    Fft2d fft(side_, side_);
    auto buf = fft.data();
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double re = g();
      const double im = g();
      buf[i] = std::complex<double>(amplitude_[i] * re, amplitude_[i] * im);
    }
    fft.execute();
    std::vector<double> v(spec_.size());
    for (std::size_t k = 0; k < spec_.n; ++k) {
      for (std::size_t j = 0; j < spec_.n; ++j) v[spec_.index(j, k)] = buf[k * side_ + j].real();
    }
    GridField f(spec_, std::move(v), FieldKind::WholePlaneGFF);
    const double unit_average = circle_average(f, Complex(0.0, 0.0), 1.0);
    for (auto& x : f.values) x -= unit_average;
    f.seed = seed;
    f.normalization_note = "circulant embedding on 2n torus; unit circle average about 0 subtracted";
    return f;
  }

 private:
  GridSpec spec_;
  std::size_t side_;
  std::vector<double> amplitude_;
};

inline GridField sample_gff_spectral(const GridSpec& spec, std::uint64_t seed) {
  return shared_sampler<SpectralGffSampler>(spec)->draw(seed);
}

/// Exact sampler up to n = 64, spectral above.
inline GridField sample_gff(const GridSpec& spec, std::uint64_t seed) {
  if (spec.n <= kExactSamplerMaxSide) return sample_gff_exact(spec, seed);
  return sample_gff_spectral(spec, seed);
}

/// Convolution with p_{eps^2/2}(z) = exp(-|z|^2/eps^2)/(pi eps^2), truncated
/// at radius 4 eps and renormalised to unit mass over the in-grid taps.
inline GridField heat_kernel_mollify(const GridField& field, double eps) {
  const GridSpec& spec = field.spec;
  require(eps >= spec.delta, "heat_kernel_mollify: eps must be at least delta");
  const double reach = 4.0 * eps / spec.delta;
  const auto rad = static_cast<std::ptrdiff_t>(std::floor(reach));
  struct Tap {
    std::ptrdiff_t dx, dy;
    double w;
  };
  std::vector<Tap> taps;
  double total = 0.0;
  const double scale = spec.delta * spec.delta / (eps * eps);
  for (std::ptrdiff_t dy = -rad; dy <= rad; ++dy) {
    for (std::ptrdiff_t dx = -rad; dx <= rad; ++dx) {
      const auto r2 = static_cast<double>(dx * dx + dy * dy);
      if (r2 > reach * reach) continue;
      const double w = std::exp(-r2 * scale);
      taps.push_back({dx, dy, w});
      total += w;
    }
  }
  const auto n = static_cast<std::ptrdiff_t>(spec.n);
  std::vector<std::ptrdiff_t> flat(taps.size());
  for (std::size_t t = 0; t < taps.size(); ++t) flat[t] = taps[t].dy * n + taps[t].dx;

  std::vector<double> out(spec.size());
  const double* src = field.values.data();
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const bool row_inside = k >= rad && k + rad < n;
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const std::ptrdiff_t c = k * n + j;
      double acc = 0.0;
      if (row_inside && j >= rad && j + rad < n) {
        for (std::size_t t = 0; t < taps.size(); ++t) acc += taps[t].w * src[c + flat[t]];
        out[static_cast<std::size_t>(c)] = acc / total;
      } else {
        double mass = 0.0;
        for (const auto& tap : taps) {
          const auto jj = j + tap.dx;
          const auto kk = k + tap.dy;
          if (jj < 0 || kk < 0 || jj >= n || kk >= n) continue;
          acc += tap.w * src[kk * n + jj];
          mass += tap.w;
        }
        out[static_cast<std::size_t>(c)] = acc / mass;
      }
    }
  }
  GridField result(spec, std::move(out), FieldKind::Derived);
  result.gamma = field.gamma;
  result.seed = field.seed;
  std::ostringstream note;
  note << "heat-kernel mollification at eps=" << eps << " of " << to_string(field.kind) << " field";
  result.normalization_note = note.str();
  return result;
}

/// Circle averages about the grid origin tabulated on radii 2^{k/8}, and the
/// remainder field.
struct RadialLateralParts {
  std::vector<double> radii;
  std::vector<double> radial;
  GridField lateral;

  /// Linear in log r between tabulated radii; constant beyond either end.
  [[nodiscard]] double radial_at(double r) const {
    if (r <= radii.front()) return radial.front();
    if (r >= radii.back()) return radial.back();
    const auto it = std::upper_bound(radii.begin(), radii.end(), r);
    const auto hi = static_cast<std::size_t>(it - radii.begin());
    const std::size_t lo = hi - 1;
    const double f = std::log(r / radii[lo]) / std::log(radii[hi] / radii[lo]);
    return (1.0 - f) * radial[lo] + f * radial[hi];
  }
};

inline constexpr double kRadialLogStep = std::numbers::ln2 / 8.0;

inline RadialLateralParts radial_lateral_decompose(const GridField& field) {
  const GridSpec& spec = field.spec;
  const double r_min = 4.0 * spec.delta;
  const double r_max = spec.extent() - spec.delta / 2.0;
  require(r_max > r_min, "radial_lateral_decompose: grid too small for the annulus [4 delta, extent]");
  RadialLateralParts parts;
  const auto k_lo = static_cast<long>(std::ceil(std::log(r_min) / kRadialLogStep - 1e-9));
  const auto k_hi = static_cast<long>(std::floor(std::log(r_max) / kRadialLogStep + 1e-9));
  for (long k = k_lo; k <= k_hi; ++k) {
    const double r = std::min(std::exp(static_cast<double>(k) * kRadialLogStep), r_max);
    parts.radii.push_back(r);
    parts.radial.push_back(circle_average(field, spec.origin, r));
  }
  if (parts.radii.back() < r_max) {
    parts.radii.push_back(r_max);
    parts.radial.push_back(circle_average(field, spec.origin, r_max));
  }
  require(parts.radii.size() >= 2, "radial_lateral_decompose: fewer than two tabulated radii");
  std::vector<double> lateral(spec.size());
  for (CellIndex c = 0; c < spec.size(); ++c) {
    lateral[c] = field.values[c] - parts.radial_at(std::abs(spec.center(c) - spec.origin));
  }
  parts.lateral = GridField(spec, std::move(lateral), FieldKind::Derived);
  parts.lateral.seed = field.seed;
  parts.lateral.normalization_note = "lateral part (field minus circle-average part)";
  return parts;
}

/// The radial profile A_t of a quantum cone on an Euler grid in t = -log r.
struct ConeRadialPath {
  double t_min = 0.0;
  double dt = 1e-3;
  std::vector<double> values;   // A at t_min + i*dt
  std::size_t negative_steps = 0;  // values[negative_steps] is A_0 = 0
  std::size_t attempts = 0;
  double gamma = 0.0;

  [[nodiscard]] double value_at(double t) const {
    const double x = (t - t_min) / dt;
    if (x <= 0.0) return values.front();
    const auto top = static_cast<double>(values.size() - 1);
    if (x >= top) return values.back();
    const auto i = static_cast<std::size_t>(std::floor(x));
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * values[i] + f * values[i + 1];
  }
};

inline constexpr std::size_t kConeRejectionBudget = 100000;

/// t >= 0: A_t = B_t + gamma t. t < 0: A_t = Bhat_{-t} + gamma t with Bhat
/// conditioned (by rejection on the simulated horizon) on Bhat_s + (Q-gamma)s > 0.
inline ConeRadialPath sample_cone_radial_process(double gamma, double t_min, double t_max, double dt,
                                                 std::uint64_t seed,
                                                 std::size_t budget = kConeRejectionBudget) {
  const double q = q_constant(gamma);
  require(t_min <= 0.0 && t_max >= 0.0, "cone radial process: need t_min <= 0 <= t_max");
  require(dt > 0.0, "cone radial process: dt must be positive");
  const auto neg = static_cast<std::size_t>(std::ceil(-t_min / dt - 1e-12));
  const auto pos = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-12));
  GaussianSource g(seed);
  const double sd = std::sqrt(dt);

  ConeRadialPath path;
  path.dt = dt;
  path.t_min = -static_cast<double>(neg) * dt;
  path.negative_steps = neg;
  path.gamma = gamma;
  path.values.assign(neg + pos + 1, 0.0);

  std::vector<double> bhat(neg + 1, 0.0);
  bool accepted = neg == 0;
  std::size_t attempts = 0;
  while (!accepted) {
    if (attempts >= budget) {
      std::ostringstream msg;
      msg << "sample_quantum_cone: rejection budget of " << budget
          << " exhausted (acceptance rate 0/" << attempts << ")";
      throw NumericalError(msg.str());
    }
    ++attempts;
    accepted = true;
    for (std::size_t i = 1; i <= neg; ++i) {
      bhat[i] = bhat[i - 1] + sd * g();
      if (bhat[i] + (q - gamma) * static_cast<double>(i) * dt <= 0.0) {
        accepted = false;
        break;
      }
    }
  }
  path.attempts = attempts;
  for (std::size_t i = 1; i <= neg; ++i) {
    const double s = static_cast<double>(i) * dt;
    path.values[neg - i] = bhat[i] - gamma * s;
  }
  double b = 0.0;
  for (std::size_t i = 1; i <= pos; ++i) {
    b += sd * g();
    path.values[neg + i] = b + gamma * static_cast<double>(i) * dt;
  }
  return path;
}

inline constexpr double kConePathStep = 1e-3;

/// Circle-average embedded gamma-quantum cone: cone radial profile plus the
/// lateral part of an independent whole-plane GFF sample.
inline GridField sample_quantum_cone(const GridSpec& spec, double gamma, std::uint64_t seed) {
  require(gamma > 0.0 && gamma < 2.0, "sample_quantum_cone: gamma must lie in (0, 2)");
  require(spec.origin == Complex(0.0, 0.0), "sample_quantum_cone: grid must be centred at 0");
  require(circle_inside(spec, Complex(0.0, 0.0), 1.0),
          "sample_quantum_cone: grid must contain the unit circle");
  const GridField gff = sample_gff(spec, derive_stream(seed, 10));
  const RadialLateralParts parts = radial_lateral_decompose(gff);

  double r_lo = std::abs(spec.center(0));
  double r_hi = r_lo;
  for (CellIndex c = 0; c < spec.size(); ++c) {
    const double r = std::abs(spec.center(c));
    r_lo = std::min(r_lo, r);
    r_hi = std::max(r_hi, r);
  }
  const ConeRadialPath path = sample_cone_radial_process(gamma, -std::log(r_hi), -std::log(r_lo),
                                                         kConePathStep, derive_stream(seed, 11));
  std::vector<double> v(spec.size());
  for (CellIndex c = 0; c < spec.size(); ++c) {
    v[c] = path.value_at(-std::log(std::abs(spec.center(c)))) + parts.lateral.values[c];
  }
  GridField cone(spec, std::move(v), FieldKind::QuantumCone);
  cone.gamma = gamma;
  cone.seed = seed;
  std::ostringstream note;
  note << "circle-average embedded quantum cone; conditioning on horizon s<=" << -path.t_min
       << " accepted after " << path.attempts << " attempts";
  cone.normalization_note = note.str();
  return cone;
}

}  // namespace lqglab
