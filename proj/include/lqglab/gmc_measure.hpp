#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gaussian_field.hpp"
#include "grid.hpp"

namespace lqglab {

/// Per-cell masses of the discrete gamma-LQG area measure at mollification scale eps.
struct GridMeasure {
  GridSpec spec;
  std::vector<double> masses;
  double gamma = 0.0;
  double eps = 0.0;

  [[nodiscard]] double total() const;
};

/// Neumaier-compensated sum over the members of a mask (all cells when mask is null).
inline double compensated_mass(const std::vector<double>& masses, const CellSet* mask) {
  double sum = 0.0;
  double carry = 0.0;
  for (CellIndex c = 0; c < masses.size(); ++c) {
    if (mask != nullptr && !mask->contains(c)) continue;
    const double x = masses[c];
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + carry;
}

inline double GridMeasure::total() const { return compensated_mass(masses, nullptr); }

inline void check_gmc_parameters(const GridSpec& spec, double gamma, double eps) {
  require(gamma > 0.0 && gamma < 2.0, "gmc_from_field: gamma must lie in (0, 2)");
  require(eps >= spec.delta, "gmc_from_field: eps must be at least delta");
}

/// masses = eps^{gamma^2/2} exp(gamma h_eps) delta^2 from an already mollified field.
inline GridMeasure gmc_from_mollified(const GridField& mollified, double gamma, double eps) {
  check_gmc_parameters(mollified.spec, gamma, eps);
  GridMeasure m;
  m.spec = mollified.spec;
  m.gamma = gamma;
  m.eps = eps;
  m.masses.resize(mollified.values.size());
  const double prefactor = std::pow(eps, gamma * gamma / 2.0) * mollified.spec.delta * mollified.spec.delta;
  for (CellIndex c = 0; c < m.masses.size(); ++c) {
    m.masses[c] = prefactor * std::exp(gamma * mollified.values[c]);
    if (!std::isfinite(m.masses[c]) || m.masses[c] <= 0.0)
      throw NumericalError("gmc_from_field: cell mass overflowed or underflowed");
  }
  return m;
}

inline GridMeasure gmc_from_field(const GridField& field, double gamma, double eps) {
  check_gmc_parameters(field.spec, gamma, eps);
  return gmc_from_mollified(heat_kernel_mollify(field, eps), gamma, eps);
}

inline double measure_of(const GridMeasure& measure, const CellSet& cells) {
  require(cells.n == measure.spec.n, "measure_of: region grid does not match the measure");
  return compensated_mass(measure.masses, &cells);
}

enum class RegionShape { Disk, Square, Annulus, Mask };

/// A Borel set for the content experiments: an analytic shape rasterised on
/// demand (a cell belongs iff its centre does) or an explicit mask.
struct Region {
  RegionShape shape = RegionShape::Square;
  Complex center{0.0, 0.0};
  double size = 0.0;   // disk radius, square half-width, annulus inner radius
  double outer = 0.0;  // annulus outer radius
  CellSet mask;
  std::string label;

  static Region disk(Complex c, double radius, std::string name = "disk") {
    require(radius > 0.0, "Region: disk radius must be positive");
    return {RegionShape::Disk, c, radius, 0.0, {}, std::move(name)};
  }
  static Region square(Complex c, double half, std::string name = "square") {
    require(half > 0.0, "Region: square half-width must be positive");
    return {RegionShape::Square, c, half, 0.0, {}, std::move(name)};
  }
  static Region annulus(Complex c, double inner, double outer_radius, std::string name = "annulus") {
    require(inner >= 0.0 && outer_radius > inner, "Region: annulus needs 0 <= inner < outer");
    return {RegionShape::Annulus, c, inner, outer_radius, {}, std::move(name)};
  }
  static Region from_mask(CellSet cells, std::string name = "mask") {
    Region r;
    r.shape = RegionShape::Mask;
    r.mask = std::move(cells);
    r.label = std::move(name);
    return r;
  }

  [[nodiscard]] bool contains_point(Complex z) const {
    const Complex d = z - center;
    switch (shape) {
      case RegionShape::Disk: return std::abs(d) < size;
      case RegionShape::Square: return std::abs(d.real()) < size && std::abs(d.imag()) < size;
      case RegionShape::Annulus: {
        const double r = std::abs(d);
        return r >= size && r < outer;
      }
      case RegionShape::Mask: break;
    }
    throw ValidationError("Region: mask regions have no analytic membership");
  }

  [[nodiscard]] CellSet rasterize(const GridSpec& spec) const {
    if (shape == RegionShape::Mask) {
      require(mask.n == spec.n, "Region: mask does not match the grid");
      return mask;
    }
    CellSet out(spec.n);
    for (CellIndex c = 0; c < spec.size(); ++c) {
      if (contains_point(spec.center(c))) out.insert(c);
    }
    return out;
  }

  /// Bounding half-width about `center` (analytic shapes only).
  [[nodiscard]] double reach() const {
    switch (shape) {
      case RegionShape::Disk: return size;
      case RegionShape::Square: return size * std::numbers::sqrt2;
      case RegionShape::Annulus: return outer;
      case RegionShape::Mask: break;
    }
    return 0.0;
  }
};

/// Cells (on either side) whose 4-neighbourhood straddles membership.
inline CellSet boundary_mask(const CellSet& cells) {
  const std::size_t n = cells.n;
  CellSet out(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const CellIndex c = k * n + j;
      const bool in = cells.contains(c);
      const bool straddles = (j > 0 && cells.contains(c - 1) != in) ||
                             (j + 1 < n && cells.contains(c + 1) != in) ||
                             (k > 0 && cells.contains(c - n) != in) ||
                             (k + 1 < n && cells.contains(c + n) != in);
      if (straddles) out.insert(c);
    }
  }
  return out;
}

struct CoordinateChangeReport {
  double scale = 1.0;
  Complex shift{0.0, 0.0};
  std::vector<double> mass_original;   // mu_h(A) at mollification r*eps
  std::vector<double> mass_pulled;     // mu_{h~}(phi^{-1} A) at mollification eps
  std::vector<double> discrepancy;     // relative
  double max_discrepancy = 0.0;
  double median_discrepancy = 0.0;
};

inline bool lattice_compatible_scale(double r) {
  for (double s : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    if (r == s) return true;
  }
  return false;
}

/// Compares mu_h(A) with mu_{h~}(phi^{-1}(A)) for h~ = h(r . + z0) + Q log r over a
/// 2 x 2 battery of squares. The pulled-back measure at scale eps is compared
/// with the original at scale r*eps, which is where the two agree exactly for
/// mollified fields (the heat kernel rescales with the map).
inline CoordinateChangeReport coordinate_change_check(const GridField& field, double r, Complex z0,
                                                      double gamma, double eps) {
  const GridSpec& spec = field.spec;
  require(lattice_compatible_scale(r), "coordinate_change_check: r must be 2^k with |k| <= 2");
  require(gamma > 0.0 && gamma < 2.0, "coordinate_change_check: gamma must lie in (0, 2)");
  require(eps >= spec.delta && r * eps >= spec.delta,
          "coordinate_change_check: eps and r*eps must both be at least delta");
  const double q = q_constant(gamma);
  const double ext = spec.extent();
  const Complex o = spec.origin;

  // Region window: inside h's grid (margin for mollification at r*eps) and
  // inside phi(h~ grid) (margin for mollification at eps).
  const double m1 = 4.0 * r * eps + spec.delta;
  const double m2 = 4.0 * eps + spec.delta;
  double lo_x = std::max(o.real() - ext + m1, r * (o.real() - ext + m2) + z0.real());
  double hi_x = std::min(o.real() + ext - m1, r * (o.real() + ext - m2) + z0.real());
  double lo_y = std::max(o.imag() - ext + m1, r * (o.imag() - ext + m2) + z0.imag());
  double hi_y = std::min(o.imag() + ext - m1, r * (o.imag() + ext - m2) + z0.imag());

  // Snap tile edges to h~ cell edges whose images are h cell edges.
  const double step = spec.delta * std::max(1.0, 1.0 / r);
  auto snap_up = [&](double a) {
    const double base = o.real() - ext;
    return base + std::ceil((a - base) / step - 1e-9) * step;
  };
  auto snap_down = [&](double a) {
    const double base = o.real() - ext;
    return base + std::floor((a - base) / step + 1e-9) * step;
  };
  auto snap_up_y = [&](double a) {
    const double base = o.imag() - ext;
    return base + std::ceil((a - base) / step - 1e-9) * step;
  };
  auto snap_down_y = [&](double a) {
    const double base = o.imag() - ext;
    return base + std::floor((a - base) / step + 1e-9) * step;
  };
  // Window in h~ coordinates.
  const double wx0 = snap_up((lo_x - z0.real()) / r);
  const double wx1 = snap_down((hi_x - z0.real()) / r);
  const double wy0 = snap_up_y((lo_y - z0.imag()) / r);
  const double wy1 = snap_down_y((hi_y - z0.imag()) / r);
  const auto tiles_x = static_cast<long>(std::floor((wx1 - wx0) / step + 1e-9));
  const auto tiles_y = static_cast<long>(std::floor((wy1 - wy0) / step + 1e-9));
  if (tiles_x < 2 || tiles_y < 2) {
    throw ValidationError("coordinate_change_check: compared region escapes one of the grids");
  }

  // Resampled field on the same lattice.
  std::vector<double> pulled(spec.size());
  const double top_x = o.real() + ext - spec.delta / 2.0;
  const double bot_x = o.real() - ext + spec.delta / 2.0;
  const double top_y = o.imag() + ext - spec.delta / 2.0;
  const double bot_y = o.imag() - ext + spec.delta / 2.0;
  const bool identity = r == 1.0 && z0 == Complex(0.0, 0.0);
  for (CellIndex c = 0; c < spec.size(); ++c) {
    if (identity) {
      pulled[c] = field.values[c];
      continue;
    }
    const Complex w = r * spec.center(c) + z0;
    const Complex clamped(std::clamp(w.real(), bot_x, top_x), std::clamp(w.imag(), bot_y, top_y));
    pulled[c] = field.interpolate(clamped) + q * std::log(r);
  }
  const GridField tilde(spec, std::move(pulled), FieldKind::Derived);
  const GridMeasure mu_tilde = gmc_from_field(tilde, gamma, eps);
  const GridMeasure mu = gmc_from_field(field, gamma, r * eps);

  CoordinateChangeReport report;
  report.scale = r;
  report.shift = z0;
  const long half_x = tiles_x / 2;
  const long half_y = tiles_y / 2;
  for (int ty = 0; ty < 2; ++ty) {
    for (int tx = 0; tx < 2; ++tx) {
      const double ax0 = wx0 + static_cast<double>(tx * half_x) * step;
      const double ax1 = wx0 + static_cast<double>((tx + 1) * half_x) * step;
      const double ay0 = wy0 + static_cast<double>(ty * half_y) * step;
      const double ay1 = wy0 + static_cast<double>((ty + 1) * half_y) * step;
      CellSet pre(spec.n);
      CellSet img(spec.n);
      for (CellIndex c = 0; c < spec.size(); ++c) {
        const Complex z = spec.center(c);
        if (z.real() > ax0 && z.real() < ax1 && z.imag() > ay0 && z.imag() < ay1) pre.insert(c);
        const Complex u = (z - z0) / r;
        if (u.real() > ax0 && u.real() < ax1 && u.imag() > ay0 && u.imag() < ay1) img.insert(c);
      }
      const double a = measure_of(mu, img);
      const double b = measure_of(mu_tilde, pre);
      report.mass_original.push_back(a);
      report.mass_pulled.push_back(b);
      report.discrepancy.push_back(std::abs(b - a) / a);
    }
  }
  std::vector<double> sorted = report.discrepancy;
  std::sort(sorted.begin(), sorted.end());
  report.max_discrepancy = sorted.back();
  report.median_discrepancy = 0.5 * (sorted[1] + sorted[2]);
  return report;
}

}  // namespace lqglab
