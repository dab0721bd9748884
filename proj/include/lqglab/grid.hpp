#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace lqglab {

using Complex = std::complex<double>;
using CellIndex = std::size_t;

/// Square lattice of n x n cells of side `delta` centred at `origin`.
/// Cell (j, k) has centre origin + ((j+1/2)delta - extent) + i((k+1/2)delta - extent)
/// and flat index k*n + j (row-major, rows along the imaginary axis).
struct GridSpec {
  std::size_t n = 2;
  double delta = 1.0;
  Complex origin{0.0, 0.0};

  GridSpec() = default;
  GridSpec(std::size_t cells, double spacing, Complex centre = {0.0, 0.0})
      : n(cells), delta(spacing), origin(centre) {
    require(n >= 2, "GridSpec: n must be at least 2");
    require(delta > 0.0 && std::isfinite(delta), "GridSpec: delta must be positive");
  }

  [[nodiscard]] double extent() const { return static_cast<double>(n) * delta / 2.0; }
  [[nodiscard]] std::size_t size() const { return n * n; }
  [[nodiscard]] CellIndex index(std::size_t j, std::size_t k) const { return k * n + j; }
  [[nodiscard]] std::size_t col(CellIndex c) const { return c % n; }
  [[nodiscard]] std::size_t row(CellIndex c) const { return c / n; }

  [[nodiscard]] Complex center(std::size_t j, std::size_t k) const {
    const double e = extent();
    return origin + Complex((static_cast<double>(j) + 0.5) * delta - e,
                            (static_cast<double>(k) + 0.5) * delta - e);
  }
  [[nodiscard]] Complex center(CellIndex c) const { return center(col(c), row(c)); }

  /// Continuous lattice coordinates: cell centres sit at integer values.
  [[nodiscard]] double lattice_x(Complex z) const {
    return (z.real() - origin.real() + extent()) / delta - 0.5;
  }
  [[nodiscard]] double lattice_y(Complex z) const {
    return (z.imag() - origin.imag() + extent()) / delta - 0.5;
  }

  /// True if z lies in the convex hull of the cell centres (bilinear domain).
  [[nodiscard]] bool interpolable(Complex z) const {
    const double x = lattice_x(z);
    const double y = lattice_y(z);
    const double top = static_cast<double>(n - 1);
    return x >= 0.0 && y >= 0.0 && x <= top && y <= top;
  }

  /// Cell whose square contains z (clamped to the grid).
  [[nodiscard]] CellIndex nearest_cell(Complex z) const {
    auto clamp_idx = [this](double v) {
      const double r = std::floor(v + 0.5);
      if (r < 0.0) return std::size_t{0};
      if (r > static_cast<double>(n - 1)) return n - 1;
      return static_cast<std::size_t>(r);
    };
    return index(clamp_idx(lattice_x(z)), clamp_idx(lattice_y(z)));
  }

  [[nodiscard]] bool on_edge(CellIndex c) const {
    const auto j = col(c);
    const auto k = row(c);
    return j == 0 || k == 0 || j + 1 == n || k + 1 == n;
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.n == b.n && a.delta == b.delta && a.origin == b.origin;
  }
};

enum class FieldKind : std::uint8_t { WholePlaneGFF = 0, QuantumCone = 1, Derived = 2 };

inline const char* to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::WholePlaneGFF: return "gff";
    case FieldKind::QuantumCone: return "cone";
    case FieldKind::Derived: return "derived";
  }
  return "unknown";
}

/// A real field sampled at cell centres, with the provenance of the sample.
struct GridField {
  GridSpec spec;
  std::vector<double> values;
  FieldKind kind = FieldKind::Derived;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::string normalization_note;

  GridField() = default;
  GridField(GridSpec s, std::vector<double> v, FieldKind k = FieldKind::Derived)
      : spec(s), values(std::move(v)), kind(k) {
    require(values.size() == spec.size(), "GridField: value count must equal n*n");
  }

  [[nodiscard]] double at(std::size_t j, std::size_t k) const { return values[spec.index(j, k)]; }
  [[nodiscard]] double operator[](CellIndex c) const { return values[c]; }

  /// Bilinear interpolation between cell centres.
  [[nodiscard]] double interpolate(Complex z) const {
    const double x = spec.lattice_x(z);
    const double y = spec.lattice_y(z);
    const double top = static_cast<double>(spec.n - 1);
    if (!(x >= 0.0 && y >= 0.0 && x <= top && y <= top)) {
      throw ValidationError("interpolate: point outside the grid");
    }
    auto j0 = static_cast<std::size_t>(std::floor(x));
    auto k0 = static_cast<std::size_t>(std::floor(y));
    if (j0 + 1 >= spec.n) j0 = spec.n - 2;
    if (k0 + 1 >= spec.n) k0 = spec.n - 2;
    const double fx = x - static_cast<double>(j0);
    const double fy = y - static_cast<double>(k0);
    return (1 - fx) * (1 - fy) * at(j0, k0) + fx * (1 - fy) * at(j0 + 1, k0) +
           (1 - fx) * fy * at(j0, k0 + 1) + fx * fy * at(j0 + 1, k0 + 1);
  }
};

template <class F>
GridField field_from_function(const GridSpec& spec, F&& f) {
  std::vector<double> v(spec.size());
  for (CellIndex c = 0; c < spec.size(); ++c) v[c] = f(spec.center(c));
  return GridField(spec, std::move(v), FieldKind::Derived);
}

/// Membership mask over the cells of an n x n grid.
struct CellSet {
  std::size_t n = 0;
  std::vector<std::uint8_t> mask;

  CellSet() = default;
  explicit CellSet(std::size_t side) : n(side), mask(side * side, 0) {}

  [[nodiscard]] bool contains(CellIndex c) const { return mask[c] != 0; }
  void insert(CellIndex c) { mask[c] = 1; }
  void erase(CellIndex c) { mask[c] = 0; }

  [[nodiscard]] std::size_t count() const {
    std::size_t total = 0;
    for (auto m : mask) total += m != 0;
    return total;
  }
  [[nodiscard]] bool empty() const { return count() == 0; }

  [[nodiscard]] std::vector<CellIndex> members() const {
    std::vector<CellIndex> out;
    for (CellIndex c = 0; c < mask.size(); ++c) {
      if (mask[c]) out.push_back(c);
    }
    return out;
  }

  [[nodiscard]] bool subset_of(const CellSet& other) const {
    for (CellIndex c = 0; c < mask.size(); ++c) {
      if (mask[c] && !other.mask[c]) return false;
    }
    return true;
  }

  friend bool operator==(const CellSet&, const CellSet&) = default;
};

inline CellSet set_difference(const CellSet& a, const CellSet& b) {
  CellSet out(a.n);
  for (CellIndex c = 0; c < a.mask.size(); ++c) out.mask[c] = a.mask[c] && !b.mask[c];
  return out;
}

inline CellSet set_union(const CellSet& a, const CellSet& b) {
  CellSet out(a.n);
  for (CellIndex c = 0; c < a.mask.size(); ++c) out.mask[c] = a.mask[c] || b.mask[c];
  return out;
}

inline CellSet full_set(std::size_t n) {
  CellSet s(n);
  std::fill(s.mask.begin(), s.mask.end(), std::uint8_t{1});
  return s;
}

/// Cells whose centre lies in the axis-aligned square |x - cx|, |y - cy| < half.
inline CellSet square_cells(const GridSpec& spec, Complex centre, double half) {
  CellSet s(spec.n);
  for (CellIndex c = 0; c < spec.size(); ++c) {
    const Complex d = spec.center(c) - centre;
    if (std::abs(d.real()) < half && std::abs(d.imag()) < half) s.insert(c);
  }
  return s;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace lqglab
