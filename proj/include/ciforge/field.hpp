#pragma once
// Periodic grid fields on the unit 3-torus.  The torus is [0,1)^3 so integer
// wavevectors m give exactly periodic phases e^{2*pi*i m.x}; all physical
// wavenumbers are 2*pi*m.
#include <array>
#include <cstddef>
#include <vector>

#include "ciforge/common.hpp"

namespace ciforge {

struct Grid {
  int n = 0;                          // points per axis, power of two, >= 16
  double dealias_fraction = 2.0 / 3.0;  // 2/3-rule cutoff for quadratic terms

  double spacing() const { return 1.0 / n; }
  std::size_t size() const { return static_cast<std::size_t>(n) * n * n; }
  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n + j) * n + k;  // k fastest
  }
  V3 point(int i, int j, int k) const {
    double h = spacing();
    return {i * h, j * h, k * h};
  }
  // Largest mode magnitude kept by the 2/3 rule.
  int dealias_kmax() const { return static_cast<int>(n * dealias_fraction / 2.0); }
  bool operator==(const Grid&) const = default;
};

Grid make_grid(int n);  // validates n: power of two, >= 16

// Internal scratch grids (3n/2 padding for alias-free products) may have
// non-power-of-two sizes; still even and >= 16.
Grid scratch_grid(int n);

// NC = 1 scalar, 3 vector, 6 symmetric tensor (00,11,22,01,02,12), or any
// other component count used internally (e.g. 9 for Jacobians).
template <int NC>
struct FieldT {
  Grid grid;
  double time_tag = 0.0;
  std::array<std::vector<double>, NC> c;

  FieldT() = default;
  explicit FieldT(Grid g, double t = 0.0) : grid(g), time_tag(t) {
    for (auto& v : c) v.assign(grid.size(), 0.0);
  }
  static constexpr int components = NC;
};

using ScalarField = FieldT<1>;
using VectorField = FieldT<3>;
using SymTensorField = FieldT<6>;

// Pointwise magnitude weights: off-diagonal tensor components count twice in
// the Frobenius norm.  Any other NC uses unit weights.
template <int NC>
constexpr std::array<double, NC> magnitude_weights() {
  std::array<double, NC> w{};
  for (int i = 0; i < NC; ++i) w[i] = 1.0;
  if constexpr (NC == 6) w = {1, 1, 1, 2, 2, 2};
  if constexpr (NC == 12) w = {1, 1, 1, 2, 2, 2, 1, 1, 1, 2, 2, 2};
  return w;
}

template <int NC>
V3 vector_at(const FieldT<NC>& f, std::size_t i) {
  static_assert(NC == 3);
  return {f.c[0][i], f.c[1][i], f.c[2][i]};
}
inline Sym3 tensor_at(const SymTensorField& f, std::size_t i) {
  return Sym3{{f.c[0][i], f.c[1][i], f.c[2][i], f.c[3][i], f.c[4][i], f.c[5][i]}};
}
inline void set_tensor(SymTensorField& f, std::size_t i, const Sym3& s) {
  for (int k = 0; k < 6; ++k) f.c[k][i] = s.c[k];
}
inline void set_vector(VectorField& f, std::size_t i, V3 v) {
  f.c[0][i] = v.x;
  f.c[1][i] = v.y;
  f.c[2][i] = v.z;
}

// Component means (integral over the unit torus), compensated summation.
template <int NC>
std::array<double, NC> mean(const FieldT<NC>& f) {
  std::array<double, NC> m{};
  for (int k = 0; k < NC; ++k)
    m[k] = kahan_sum(f.c[k].data(), f.c[k].size()) / static_cast<double>(f.grid.size());
  return m;
}

// Max pointwise magnitude (abs / Euclidean / Frobenius by component count).
template <int NC>
double norm0(const FieldT<NC>& f) {
  const auto w = magnitude_weights<NC>();
  double best = 0.0;
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < NC; ++k) s += w[k] * f.c[k][i] * f.c[k][i];
    if (s > best) best = s;
  }
  return std::sqrt(best);
}

template <int NC>
void axpy(FieldT<NC>& y, double alpha, const FieldT<NC>& x) {
  require(y.grid == x.grid, "field shape", "axpy on mismatched grids");
  for (int k = 0; k < NC; ++k)
    for (std::size_t i = 0; i < y.c[k].size(); ++i) y.c[k][i] += alpha * x.c[k][i];
}

template <int NC>
void scale(FieldT<NC>& y, double alpha) {
  for (int k = 0; k < NC; ++k)
    for (double& v : y.c[k]) v *= alpha;
}

// Uniformly sampled field history on one time interval.
template <class F>
struct TimeSlab {
  std::vector<double> times;  // strictly increasing
  std::vector<F> slices;

  std::size_t index_of(double t, double tol = 1e-12) const {
    for (std::size_t i = 0; i < times.size(); ++i)
      if (std::abs(times[i] - t) <= tol) return i;
    fail("slab lookup", "time " + std::to_string(t) + " not materialized in slab");
  }
  const F& at(double t, double tol = 1e-12) const { return slices[index_of(t, tol)]; }
};

// Kinetic energy (1/2) * integral of |v|^2 over the unit torus.
double kinetic_energy(const VectorField& v);

}  // namespace ciforge
