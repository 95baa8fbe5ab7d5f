#include "ciforge/holder.hpp"

#include <cmath>

#include "ciforge/spectral.hpp"

namespace ciforge {
namespace {

constexpr int kDirections[13][3] = {
    {1, 0, 0}, {0, 1, 0}, {0, 0, 1},                           // axes
    {1, 1, 0}, {1, -1, 0}, {1, 0, 1}, {1, 0, -1}, {0, 1, 1}, {0, 1, -1},  // face diagonals
    {1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {-1, 1, 1},             // body diagonals
};

// Enumerates multi-indices (j1,j2,j3) with j1+j2+j3 == order.
template <class Body>
void for_each_multi_index(int order, Body body) {
  for (int j1 = order; j1 >= 0; --j1)
    for (int j2 = order - j1; j2 >= 0; --j2) body(j1, j2, order - j1 - j2);
}

template <int NC>
double max_shift_difference(const FieldT<NC>& f, int s1, int s2, int s3) {
  const int n = f.grid.n;
  const auto w = magnitude_weights<NC>();
  std::vector<double> partial(worker_count(), 0.0);
  parallel_for_indexed(n, [&](std::size_t lo, std::size_t hi, std::size_t worker) {
    double best = 0.0;
    for (int i = static_cast<int>(lo); i < static_cast<int>(hi); ++i) {
      int ip = (i + s1 % n + n) % n;
      for (int j = 0; j < n; ++j) {
        int jp = (j + s2 % n + n) % n;
        for (int k = 0; k < n; ++k) {
          int kp = (k + s3 % n + n) % n;
          std::size_t a = f.grid.idx(i, j, k);
          std::size_t b = f.grid.idx(ip, jp, kp);
          double s = 0.0;
          for (int c = 0; c < NC; ++c) {
            double d = f.c[c][b] - f.c[c][a];
            s += w[c] * d * d;
          }
          if (s > best) best = s;
        }
      }
    }
    partial[worker] = std::max(partial[worker], best);
  });
  double best = 0.0;
  for (double p : partial) best = std::max(best, p);
  return std::sqrt(best);
}

}  // namespace

template <int NC>
FieldT<NC> partial_derivative(const FieldT<NC>& f, int j1, int j2, int j3) {
  require(j1 >= 0 && j2 >= 0 && j3 >= 0, "derivative order", "negative derivative order");
  if (j1 + j2 + j3 == 0) return f;
  auto s = analyze(f);
  const int n = s.n;
  const double two_pi = 6.283185307179586476925286766559;
  const int jtot = j1 + j2 + j3;
  // (2 pi i)^jtot = (2 pi)^jtot * i^jtot; i^jtot cycles (1, i, -1, -i).
  const double amp = std::pow(two_pi, jtot);
  const std::complex<double> iph[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const std::complex<double> phase = amp * iph[jtot % 4];
  for (int i = 0; i < n; ++i) {
    double m1 = j1 > 0 ? deriv_mode(i, n) : 1.0;
    double f1 = j1 > 0 ? std::pow(m1, j1) : 1.0;
    for (int j = 0; j < n; ++j) {
      double m2 = j2 > 0 ? deriv_mode(j, n) : 1.0;
      double f2 = j2 > 0 ? std::pow(m2, j2) : 1.0;
      for (int k = 0; k <= n / 2; ++k) {
        double m3 = (2 * k == n) ? 0.0 : k;
        double f3 = j3 > 0 ? std::pow(m3, j3) : 1.0;
        std::complex<double> mult = phase * (f1 * f2 * f3);
        std::size_t id = s.idx(i, j, k);
        for (int c = 0; c < NC; ++c) s.c[c][id] *= mult;
      }
    }
  }
  return synthesize(s, f.time_tag);
}

template <int NC>
double derivative_sup(const FieldT<NC>& f, int order) {
  if (order == 0) return norm0(f);
  double best = 0.0;
  for_each_multi_index(order, [&](int j1, int j2, int j3) {
    best = std::max(best, norm0(partial_derivative(f, j1, j2, j3)));
  });
  return best;
}

template <int NC>
double holder_seminorm(const FieldT<NC>& f, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "holder exponent",
          "seminorm exponent must lie in (0,1), got " + std::to_string(alpha));
  const int n = f.grid.n;
  const double h = f.grid.spacing();
  double best = 0.0;
  for (const auto& dir : kDirections) {
    const double dlen = std::sqrt(static_cast<double>(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]));
    for (int step = 1; step * h * dlen <= 0.25 && step < n; step *= 2) {
      double dist = step * h * dlen;
      double diff = max_shift_difference(f, dir[0] * step, dir[1] * step, dir[2] * step);
      best = std::max(best, diff / std::pow(dist, alpha));
    }
  }
  return best;
}

template <int NC>
double holder_norm(const FieldT<NC>& f, double s) {
  require(s >= 0.0, "holder exponent", "norm exponent must be >= 0");
  int m = static_cast<int>(std::floor(s));
  double alpha = s - m;
  // Guard against floating exponents like 1.9999999999 meant as 2.
  if (alpha > 1.0 - 1e-12) {
    m += 1;
    alpha = 0.0;
  }
  double total = 0.0;
  for (int j = 0; j <= m; ++j) total += derivative_sup(f, j);
  if (alpha > 0.0) {
    if (m == 0) return total + holder_seminorm(f, alpha);  // no derivative copies
    double semi = 0.0;
    for_each_multi_index(m, [&](int j1, int j2, int j3) {
      semi = std::max(semi, holder_seminorm(partial_derivative(f, j1, j2, j3), alpha));
    });
    total += semi;
  }
  return total;
}

#define CIFORGE_INSTANTIATE(NC)                                            \
  template FieldT<NC> partial_derivative<NC>(const FieldT<NC>&, int, int, int); \
  template double derivative_sup<NC>(const FieldT<NC>&, int);              \
  template double holder_seminorm<NC>(const FieldT<NC>&, double);          \
  template double holder_norm<NC>(const FieldT<NC>&, double);

CIFORGE_INSTANTIATE(1)
CIFORGE_INSTANTIATE(3)
CIFORGE_INSTANTIATE(6)
CIFORGE_INSTANTIATE(9)
CIFORGE_INSTANTIATE(12)
#undef CIFORGE_INSTANTIATE

}  // namespace ciforge
