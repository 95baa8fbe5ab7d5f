#include "ciforge/mollify.hpp"

#include <cmath>

#include "ciforge/spectral.hpp"

namespace ciforge {
namespace {

// Fourier multiplier of the discretely normalized kernel: DFT(K)_m / DFT(K)_0.
// Real by symmetry of the sampled kernel; stored as complex for uniformity.
std::vector<std::complex<double>> kernel_multiplier(const Grid& g, double ell) {
  require(ell >= 2.0 * g.spacing(), "mollify scale",
          "ell = " + std::to_string(ell) + " under-resolves the kernel (needs >= 2/n = " +
              std::to_string(2.0 * g.spacing()) + ")");
  require(ell < 0.25, "mollify scale",
          "ell = " + std::to_string(ell) + " too large for unambiguous support on the torus");
  ScalarField K(g);
  const int n = g.n;
  for (int i = 0; i < n; ++i) {
    double x = i <= n / 2 ? i * g.spacing() : (i - n) * g.spacing();
    for (int j = 0; j < n; ++j) {
      double y = j <= n / 2 ? j * g.spacing() : (j - n) * g.spacing();
      for (int k = 0; k < n; ++k) {
        double z = k <= n / 2 ? k * g.spacing() : (k - n) * g.spacing();
        double r2 = (x * x + y * y + z * z) / (ell * ell);
        K.c[0][g.idx(i, j, k)] = r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
      }
    }
  }
  auto s = analyze(K);
  std::complex<double> dc = s.c[0][0];
  require(std::abs(dc) > 0.0, "mollify scale", "kernel vanished after sampling");
  std::vector<std::complex<double>> mult(s.size());
  for (std::size_t i = 0; i < mult.size(); ++i) mult[i] = s.c[0][i] / dc;
  mult[0] = 1.0;  // exact mean preservation
  return mult;
}

}  // namespace

template <int NC>
FieldT<NC> mollify(const FieldT<NC>& f, double ell) {
  auto mult = kernel_multiplier(f.grid, ell);
  auto s = analyze(f);
  for (int c = 0; c < NC; ++c)
    for (std::size_t i = 0; i < mult.size(); ++i) s.c[c][i] *= mult[i];
  return synthesize(s, f.time_tag);
}

double cet_commutator(const ScalarField& f, const ScalarField& g, double ell) {
  auto out = multiply(mollify(f, ell), mollify(g, ell));
  axpy(out, -1.0, mollify(multiply(f, g), ell));
  return norm0(out);
}

#define CIFORGE_INSTANTIATE(NC) template FieldT<NC> mollify<NC>(const FieldT<NC>&, double);
CIFORGE_INSTANTIATE(1)
CIFORGE_INSTANTIATE(3)
CIFORGE_INSTANTIATE(6)
#undef CIFORGE_INSTANTIATE

}  // namespace ciforge
