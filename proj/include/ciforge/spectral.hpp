#pragma once
// FFT-backed calculus on the unit torus.
//
// Conventions (fixed project-wide):
//   f(x) = sum_m fhat(m) e^{2 pi i m.x},  fhat(m) = (1/n^3) * DFT_forward(f).
// Half-complex storage (real input): index (i,j,k) with k in [0, n/2];
// axis modes m = i for i <= n/2 else i - n.
//
// Differentiation multiplies by (2 pi i m); Nyquist planes (|m| = n/2) carry
// a sign-ambiguous mode and are zeroed by every derivative operator.
// Fields produced by resampling or dealiasing never populate Nyquist bins.
#include <complex>
#include <vector>

#include "ciforge/field.hpp"

namespace ciforge {

template <int NC>
struct SpectrumT {
  int n = 0;
  double time_tag = 0.0;
  std::array<std::vector<std::complex<double>>, NC> c;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * n * (n / 2 + 1);
  }
  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n + j) * (n / 2 + 1) + k;
  }
};
using ScalarSpectrum = SpectrumT<1>;
using VectorSpectrum = SpectrumT<3>;
using SymTensorSpectrum = SpectrumT<6>;

// Signed mode for full-length axis index i in [0, n).
inline int mode_of(int i, int n) { return i <= n / 2 ? i : i - n; }
// Derivative multiplier mode: zero on the Nyquist plane.
inline double deriv_mode(int i, int n) {
  return (2 * i == n) ? 0.0 : static_cast<double>(mode_of(i, n));
}

namespace detail {
// Thread-safe FFT engine with per-thread cached plans for each grid size.
struct FftEngine;
FftEngine& fft_engine(int n);
void fft_forward(FftEngine&, const double* in, std::complex<double>* out);
void fft_backward(FftEngine&, const std::complex<double>* in, double* out);
}  // namespace detail

template <int NC>
SpectrumT<NC> analyze(const FieldT<NC>& f);
template <int NC>
FieldT<NC> synthesize(const SpectrumT<NC>& s, double time_tag);
template <int NC>
FieldT<NC> synthesize(const SpectrumT<NC>& s) {
  return synthesize(s, s.time_tag);
}

// Zero every coefficient with any axis |mode| exceeding the 2/3 cutoff.
template <int NC>
void dealias_spectrum(SpectrumT<NC>& s, double fraction = 2.0 / 3.0);
template <int NC>
FieldT<NC> dealias(const FieldT<NC>& f);

// Band-limited grid change (both directions).  Source content on or above
// the smaller grid's Nyquist plane is discarded; every producer in this
// project keeps content strictly inside the band, so the change is exact.
template <int NC>
FieldT<NC> resample(const FieldT<NC>& f, int n_target);

// Derivatives (spectral, Nyquist-zeroed).
VectorField gradient(const ScalarField& f);
ScalarField divergence(const VectorField& v);
VectorField curl(const VectorField& v);
VectorField divergence(const SymTensorField& s);   // row divergence d_j S^{ij}
FieldT<9> gradient(const VectorField& v);          // (dv^i/dx_j) at 3*i + j
SymTensorField symmetric_gradient(const VectorField& v);
ScalarField laplacian(const ScalarField& f);

// Pointwise products evaluated on a 3n/2 padded grid, truncated back to the
// stored band of grid n (exact for band-limited factors; the 3/2 rule keeps
// quadratic content up to n/2 alias-free).
SymTensorField outer_product(const VectorField& a, const VectorField& b);
VectorField advect(const VectorField& v, const VectorField& w);  // (v . grad) w
ScalarField multiply(const ScalarField& a, const ScalarField& b);
VectorField multiply(const ScalarField& a, const VectorField& b);

// Componentwise transport (v . grad) g for any component count.
template <int NC>
FieldT<NC> advect_components(const VectorField& v, const FieldT<NC>& g);

// Fraction of spectral L2 mass with any axis |mode| >= limit (diagnostics).
template <int NC>
double band_mass_above(const FieldT<NC>& f, int limit);

}  // namespace ciforge
