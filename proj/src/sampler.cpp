#include "ciforge/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ciforge/spectral.hpp"

namespace ciforge {
namespace {

constexpr int kOrder = 12;  // stencil points per axis (polynomial degree 11)

constexpr std::array<double, kOrder> lagrange_denominators() {
  std::array<double, kOrder> d{};
  for (int j = 0; j < kOrder; ++j) {
    double p = 1.0;
    for (int k = 0; k < kOrder; ++k)
      if (k != j) p *= static_cast<double>(j - k);
    d[j] = p;
  }
  return d;
}

// Weights for nodes 0..11 at local coordinate s (s in [5,6) for interior
// points; exactly integral s yields an exact {0,1} weight pattern because the
// numerator and denominator are then the same exact integer product).
void lagrange_weights(double s, double* w) {
  static constexpr std::array<double, kOrder> denom = lagrange_denominators();
  double prefix[kOrder];
  double suffix[kOrder];
  prefix[0] = 1.0;
  for (int j = 1; j < kOrder; ++j) prefix[j] = prefix[j - 1] * (s - (j - 1));
  suffix[kOrder - 1] = 1.0;
  for (int j = kOrder - 2; j >= 0; --j) suffix[j] = suffix[j + 1] * (s - (j + 1));
  for (int j = 0; j < kOrder; ++j) w[j] = prefix[j] * suffix[j] / denom[j];
}

int pow2_at_least(int v) {
  int p = 16;
  while (p < v) p *= 2;
  return p;
}

}  // namespace

template <int NC>
int natural_fine_n(const FieldT<NC>& f, int points_per_wavelength) {
  const auto s = analyze(f);
  const int n = s.n;
  double peak = 0.0;
  for (int c = 0; c < NC; ++c)
    for (const auto& z : s.c[c]) peak = std::max(peak, std::abs(z));
  const double tol = peak * 1e-13;
  int band = 0;
  for (int i = 0; i < n; ++i) {
    const int m1 = std::abs(mode_of(i, n));
    for (int j = 0; j < n; ++j) {
      const int m2 = std::abs(mode_of(j, n));
      for (int k = 0; k <= n / 2; ++k) {
        const int m = std::max({m1, m2, k});
        if (m <= band) continue;
        const std::size_t id = s.idx(i, j, k);
        for (int c = 0; c < NC; ++c)
          if (std::abs(s.c[c][id]) > tol) {
            band = m;
            break;
          }
      }
    }
  }
  return pow2_at_least(std::max(32, band * points_per_wavelength));
}

template <int NC>
std::array<double, NC> sample_raw(const std::array<std::vector<double>, NC>& data,
                                  int fine_n, const V3& x) {
  const int U = fine_n;
  const double u[3] = {x.x * U, x.y * U, x.z * U};
  int wrapped[3][kOrder];
  double w[3][kOrder];
  for (int a = 0; a < 3; ++a) {
    const double fl = std::floor(u[a]);
    lagrange_weights(u[a] - fl + (kOrder / 2 - 1), w[a]);
    const long long base = static_cast<long long>(fl) - (kOrder / 2 - 1);
    for (int j = 0; j < kOrder; ++j) {
      long long v = (base + j) % U;
      if (v < 0) v += U;
      wrapped[a][j] = static_cast<int>(v);
    }
  }
  const std::size_t UU = static_cast<std::size_t>(U) * U;
  std::array<double, NC> out{};
  for (int c = 0; c < NC; ++c) {
    const double* d = data[c].data();
    double acc_i = 0.0;
    for (int i = 0; i < kOrder; ++i) {
      const double* plane = d + wrapped[0][i] * UU;
      double acc_j = 0.0;
      for (int j = 0; j < kOrder; ++j) {
        const double* row = plane + static_cast<std::size_t>(wrapped[1][j]) * U;
        double acc_k = 0.0;
        for (int k = 0; k < kOrder; ++k) acc_k += w[2][k] * row[wrapped[2][k]];
        acc_j += w[1][j] * acc_k;
      }
      acc_i += w[0][i] * acc_j;
    }
    out[c] = acc_i;
  }
  return out;
}

template <int NC>
SpectralSampler<NC>::SpectralSampler(const FieldT<NC>& f, int points_per_wavelength,
                                     int max_fine_n, int force_fine_n) {
  fine_n_ = std::max(natural_fine_n(f, points_per_wavelength), force_fine_n);
  if (fine_n_ > max_fine_n)
    fail("sampler resolution",
         "field content needs a fine grid of " + std::to_string(fine_n_) +
             " points per axis, above the limit " + std::to_string(max_fine_n));
  FieldT<NC> fine = resample(f, fine_n_);
  data_ = std::move(fine.c);
}

template int natural_fine_n<1>(const FieldT<1>&, int);
template int natural_fine_n<3>(const FieldT<3>&, int);
template std::array<double, 1> sample_raw<1>(const std::array<std::vector<double>, 1>&,
                                             int, const V3&);
template std::array<double, 3> sample_raw<3>(const std::array<std::vector<double>, 3>&,
                                             int, const V3&);
template class SpectralSampler<1>;
template class SpectralSampler<3>;

}  // namespace ciforge
