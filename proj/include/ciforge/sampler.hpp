#pragma once
// Off-grid evaluation of band-limited periodic fields.
//
// The field is resampled (exactly, by zero padding in Fourier space) onto a
// fine grid with at least `points_per_wavelength` nodes per wavelength of its
// highest significant mode, then evaluated with degree-11 tensor-product
// Lagrange interpolation on that grid.  At 12 points per wavelength the
// stencil error of a unit mode is below 1e-12, so the sampler inherits
// spectral accuracy; at points coinciding with fine-grid nodes the Lagrange
// weights collapse to {0,1} and the node value is reproduced exactly.
#include <array>
#include <vector>

#include "ciforge/field.hpp"

namespace ciforge {

// Fine-grid size the sampler would pick for f: the smallest power of two
// >= points_per_wavelength x (largest significant axis mode), at least 32.
// Modes below 1e-13 of the spectral peak are ignored.
template <int NC>
int natural_fine_n(const FieldT<NC>& f, int points_per_wavelength = 12);

// Degree-11 Lagrange evaluation of raw fine-grid data (component-major,
// k-fastest, size fine_n^3 per component) at one point; wraps periodically.
template <int NC>
std::array<double, NC> sample_raw(const std::array<std::vector<double>, NC>& data,
                                  int fine_n, const V3& x);

template <int NC>
class SpectralSampler {
 public:
  // force_fine_n (power of two) overrides the natural size upward, letting
  // callers give several samplers a common fine grid; the natural size still
  // wins if larger.  Faults "sampler resolution" past max_fine_n.
  explicit SpectralSampler(const FieldT<NC>& f, int points_per_wavelength = 12,
                           int max_fine_n = 512, int force_fine_n = 0);

  std::array<double, NC> operator()(const V3& x) const {
    return sample_raw<NC>(data_, fine_n_, x);
  }

  int fine_n() const { return fine_n_; }
  const std::array<std::vector<double>, NC>& fine_data() const { return data_; }

 private:
  int fine_n_ = 0;
  std::array<std::vector<double>, NC> data_;
};

using ScalarSampler = SpectralSampler<1>;
using VectorSampler = SpectralSampler<3>;

inline V3 sample_vector(const SpectralSampler<3>& s, const V3& x) {
  auto v = s(x);
  return {v[0], v[1], v[2]};
}

}  // namespace ciforge
