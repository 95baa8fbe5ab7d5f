#include "ciforge/field.hpp"

namespace ciforge {

Grid make_grid(int n) {
  require(n >= 16, "grid size", "n must be >= 16, got " + std::to_string(n));
  require((n & (n - 1)) == 0, "grid size", "n must be a power of two, got " + std::to_string(n));
  Grid g;
  g.n = n;
  return g;
}

Grid scratch_grid(int n) {
  require(n >= 16 && n % 2 == 0, "grid size", "scratch grid must be even and >= 16");
  Grid g;
  g.n = n;
  return g;
}

double kinetic_energy(const VectorField& v) {
  std::size_t N = v.grid.size();
  std::vector<double> sq(N);
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += v.c[k][i] * v.c[k][i];
    sq[i] = s;
  }
  return 0.5 * kahan_sum(sq.data(), N) / static_cast<double>(N);
}

}  // namespace ciforge
