// Tube families: geometry, amplitude maps, mode tables, derived constants.
//
// Oracles derived by hand before implementation:
//  * the cross-sectional mean of g(u) = (1-u^2)^6 (1-8u^2) vanishes exactly:
//    int_0^1 g(u) u du = (1/2)[int_0^1 (1-w)^6 dw - 8 int_0^1 (1-w)^6 w dw]
//    = (1/2)[1/7 - 8/56] = 0, so the grid correction coefficients are tiny;
//  * torus distance of two skew rational lines with directions d1, d2 and
//    offsets p1, p2 is |reduce(n.(p1-p2))| / |n| with n the primitive integer
//    cross product (the lattice of images shifts the numerator by integers);
//  * parallel strands of one periodic line with direction d are separated by
//    the shortest nonzero perpendicular projection of the integer lattice;
//  * a direction set of axes plus only the three positive face diagonals
//    pins each diagonal amplitude to one off-diagonal entry of the target
//    (the coefficient map is a bijection on Sym(3)), so a single negative
//    off-diagonal entry forces a negative squared amplitude;
//  * q = (i k x W_hat)/|k|^2 satisfies (i k) x q = W_hat whenever
//    k . W_hat = 0, by the double cross product expansion;
//  * d/dt sqrt(c(R + t E)) = (row . vec6(E)) / (2 sqrt(c(R))).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <vector>

#include "ciforge/common.hpp"
#include "ciforge/field.hpp"
#include "ciforge/mikado.hpp"
#include "ciforge/spectral.hpp"

using namespace ciforge;

namespace {

// One family shared by the whole suite: production radius, a retained band
// covering two dyadic decay shells, and the default build grid.
const MikadoFamily& family() {
  static const MikadoFamily f = build_family(9, 0.0724, 64, 192);
  return f;
}

Sym3 identity_offset(const std::array<double, 6>& e) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  Sym3 r = Sym3::identity();
  for (int q = 0; q < 3; ++q) r.c[q] += e[q];
  for (int q = 3; q < 6; ++q) r.c[q] += e[q] * inv_sqrt2;
  return r;
}

// Uniform draw from the Frobenius ball of radius rho around the identity.
Sym3 random_near_id(Rng& rng, double rho) {
  std::array<double, 6> e;
  double n2 = 0.0;
  for (double& x : e) {
    x = rng.normal();
    n2 += x * x;
  }
  const double s = rho * std::pow(rng.uniform(), 1.0 / 6.0) / std::sqrt(n2);
  for (double& x : e) x *= s;
  return identity_offset(e);
}

Sym3 unit_outer(const V3& u) {
  return Sym3{{u.x * u.x, u.y * u.y, u.z * u.z, u.x * u.y, u.x * u.z, u.y * u.z}};
}

double dist_from_id(const Sym3& r) { return frobenius(r - Sym3::identity()); }

// Independent torus line-distance oracle (integer directions, |d| small).
double oracle_line_distance(const std::array<int, 3>& d1, const V3& p1,
                            const std::array<int, 3>& d2, const V3& p2) {
  const long long nx = static_cast<long long>(d1[1]) * d2[2] - static_cast<long long>(d1[2]) * d2[1];
  const long long ny = static_cast<long long>(d1[2]) * d2[0] - static_cast<long long>(d1[0]) * d2[2];
  const long long nz = static_cast<long long>(d1[0]) * d2[1] - static_cast<long long>(d1[1]) * d2[0];
  REQUIRE((nx || ny || nz));  // frozen direction set has no parallel pair
  long long g = std::gcd(std::gcd(std::abs(nx), std::abs(ny)), std::abs(nz));
  const double ux = static_cast<double>(nx) / g, uy = static_cast<double>(ny) / g,
               uz = static_cast<double>(nz) / g;
  const double t = (p1.x - p2.x) * ux + (p1.y - p2.y) * uy + (p1.z - p2.z) * uz;
  const double red = t - std::round(t);
  return std::abs(red) / std::sqrt(ux * ux + uy * uy + uz * uz);
}

double oracle_self_distance(const std::array<int, 3>& d) {
  const double len2 = static_cast<double>(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  double best = 1e9;
  for (int m1 = -2; m1 <= 2; ++m1)
    for (int m2 = -2; m2 <= 2; ++m2)
      for (int m3 = -2; m3 <= 2; ++m3) {
        if (!m1 && !m2 && !m3) continue;
        const double along = (m1 * d[0] + m2 * d[1] + m3 * d[2]) / len2;
        const double px = m1 - along * d[0], py = m2 - along * d[1], pz = m3 - along * d[2];
        const double dist = std::sqrt(px * px + py * py + pz * pz);
        if (dist > 1e-12) best = std::min(best, dist);
      }
  return best;
}

// Read the spectrum entry for a signed mode from half-complex storage.
std::complex<double> spectrum_at(const VectorSpectrum& sp, int cc, std::array<int, 3> k) {
  const int n = sp.n;
  if (k[2] > 0 || (k[2] == 0 && (k[1] > 0 || (k[1] == 0 && k[0] > 0))))
    return sp.c[cc][sp.idx((k[0] % n + n) % n, (k[1] % n + n) % n, k[2])];
  return std::conj(
      sp.c[cc][sp.idx(((-k[0]) % n + n) % n, ((-k[1]) % n + n) % n, -k[2])]);
}

}  // namespace

TEST_CASE("frozen tube placement keeps certified separations") {
  const MikadoFamily& f = family();
  REQUIRE(f.tubes.size() == 9);
  const double h = 1.0 / f.grid_n;

  double min_pair = 1e9;
  for (std::size_t i = 0; i < f.tubes.size(); ++i)
    for (std::size_t j = i + 1; j < f.tubes.size(); ++j)
      min_pair = std::min(min_pair, oracle_line_distance(f.tubes[i].axis, f.tubes[i].base,
                                                         f.tubes[j].axis, f.tubes[j].base));
  MESSAGE("min pairwise line distance ", min_pair);
  CHECK(min_pair >= 0.1578);
  // Surface gap between closest tubes clears the sampling scale.
  CHECK(min_pair - 2.0 * f.tubes[0].radius >= 2.4 * h);

  for (const MikadoTube& t : f.tubes) {
    CHECK(oracle_self_distance(t.axis) >= 0.70);
    // Reduction frame is an orthogonal integer basis of the normal plane.
    CHECK(t.fu[0] * t.axis[0] + t.fu[1] * t.axis[1] + t.fu[2] * t.axis[2] == 0);
    CHECK(t.fv[0] * t.axis[0] + t.fv[1] * t.axis[1] + t.fv[2] * t.axis[2] == 0);
    CHECK(t.fu[0] * t.fv[0] + t.fu[1] * t.fv[1] + t.fu[2] * t.fv[2] == 0);
    CHECK(norm(t.unit) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(t.radius == 0.0724);
  }
}

TEST_CASE("amplitude map reproduces prescribed tensors on its certified ball") {
  const MikadoFamily& f = family();
  CHECK(f.domain_radius == doctest::Approx(0.4485666749).epsilon(1e-8));
  CHECK(f.shrunken);
  CHECK(f.margin > 1e-3);

  Rng rng(401);
  for (int trial = 0; trial < 50; ++trial) {
    const Sym3 r = random_near_id(rng, 0.44);
    const auto c = gamma_sq(f, r);
    Sym3 sum;
    for (std::size_t j = 0; j < f.tubes.size(); ++j) {
      CHECK(c[j] > 0.0);
      sum = sum + c[j] * unit_outer(f.tubes[j].unit);
    }
    CHECK(frobenius(sum - r) <= 1e-12);
  }

  // Requests outside the certified ball are refused, naming the tensor.
  Sym3 far = Sym3::identity();
  far.c[3] = 0.5;  // Frobenius distance sqrt(2)/2 > certified radius
  CHECK_THROWS_WITH_AS(gamma_sq(f, far), doctest::Contains("Γ positivity fails on 𝒩"), Fault);
  CHECK_THROWS_WITH_AS(gamma_sq(f, far), doctest::Contains("R = [diag"), Fault);
}

TEST_CASE("six-direction families are rejected with a failing tensor") {
  CHECK_THROWS_WITH_AS(build_family(6, 0.0724, 16, 64),
                       doctest::Contains("Γ positivity fails on 𝒩"), Fault);
  CHECK_THROWS_WITH_AS(build_family(6, 0.0724, 16, 64), doctest::Contains("R = [diag"), Fault);
}

TEST_CASE("geometry and band preconditions fault with their anchors") {
  // Radius large enough that the two closest lines overlap.
  CHECK_THROWS_WITH_AS(build_family(9, 0.09, 16, 64), doctest::Contains("tubes intersect"),
                       Fault);
  // Radius below the resolution floor of the build grid.
  CHECK_THROWS_WITH_AS(build_family(9, 0.01, 16, 192), doctest::Contains("tube radius"), Fault);
  CHECK_THROWS_WITH_AS(build_family(5, 0.0724, 16, 64), doctest::Contains("direction set"),
                       Fault);
  CHECK_THROWS_WITH_AS(build_family(9, 0.0724, 16, 50), doctest::Contains("grid size"), Fault);
  CHECK_THROWS_WITH_AS(build_family(9, 0.0724, 100, 192), doctest::Contains("mode band"), Fault);
}

TEST_CASE("profiles are normalized, mean free, and pairwise disjoint") {
  const MikadoFamily& f = family();
  for (const MikadoTube& t : f.tubes) {
    CHECK(std::abs(t.mean_psi) <= 1e-15);
    CHECK(std::abs(t.mean_psi2 - 1.0) <= 1e-13);
    CHECK(std::abs(t.corr) <= 1e-6);  // analytic cross-sectional mean is zero
    CHECK(t.norm > 1.0);
  }

  // Disjoint supports and coarse-grid energies in one sweep: at every node
  // of a 96-grid at most one tube is nonzero, so all cross products vanish
  // identically, and each tube's energy quadrature stays near one.
  const int n = 96;
  const Grid g = scratch_grid(n);
  std::array<double, 9> energy{};
  double cross_mass = 0.0;
  int worst_count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const V3 x = g.point(i, j, k);
        int hit = 0;
        double first = 0.0;
        for (std::size_t tj = 0; tj < f.tubes.size(); ++tj) {
          const double p = tube_profile(f.tubes[tj], x);
          if (p != 0.0) {
            cross_mass += std::abs(first * p);
            first = p;
            ++hit;
            energy[tj] += p * p;
          }
        }
        worst_count = std::max(worst_count, hit);
      }
  CHECK(worst_count <= 1);
  CHECK(cross_mass == 0.0);
  for (double& e : energy) e /= static_cast<double>(g.size());
  for (std::size_t tj = 0; tj < f.tubes.size(); ++tj)
    CHECK(energy[tj] == doctest::Approx(1.0).epsilon(5e-6));
}

TEST_CASE("sampled family is divergence free with exact zero mean") {
  const MikadoFamily& f = family();
  const Sym3 id = Sym3::identity();

  VectorField w = w_field(f, id, 96);
  CHECK(norm0(w) > 10.0);
  const double div_w = norm0(divergence(w));
  MESSAGE("sampled divergence of the combined field ", div_w);
  CHECK(div_w <= 1e-10);

  // Pointwise quadratic tensor (disjoint supports make this exact), whose
  // row divergence also vanishes because every retained mode of a tube is
  // orthogonal to that tube's axis.
  SymTensorField t(w.grid);
  for (std::size_t p = 0; p < w.grid.size(); ++p) {
    const double wx = w.c[0][p], wy = w.c[1][p], wz = w.c[2][p];
    t.c[0][p] = wx * wx;
    t.c[1][p] = wy * wy;
    t.c[2][p] = wz * wz;
    t.c[3][p] = wx * wy;
    t.c[4][p] = wx * wz;
    t.c[5][p] = wy * wz;
  }
  const double div_t = norm0(divergence(t));
  MESSAGE("sampled divergence of the quadratic tensor ", div_t);
  CHECK(div_t <= 1e-8);

  // Structural guarantee behind both residuals, for every admissible tensor
  // at once: retained modes live in their tube's normal plane exactly.
  for (const MikadoTube& tube : f.tubes)
    for (const MikadoMode& m : tube.modes) {
      REQUIRE(m.k[0] * tube.axis[0] + m.k[1] * tube.axis[1] + m.k[2] * tube.axis[2] == 0);
      REQUIRE((m.k[0] || m.k[1] || m.k[2]));
      REQUIRE(std::max({std::abs(m.k[0]), std::abs(m.k[1]), std::abs(m.k[2])}) <= f.kmax);
    }

  // Mean of the samples on the build grid, and agreement with the sum of
  // per-tube means (the fields add pointwise on disjoint supports).
  VectorField wb = w_field(f, id, f.grid_n);
  const auto mw = mean(wb);
  const auto c = gamma_sq(f, id);
  V3 structural{0.0, 0.0, 0.0};
  for (std::size_t j = 0; j < f.tubes.size(); ++j)
    structural = structural + (std::sqrt(c[j]) * f.tubes[j].mean_psi) * f.tubes[j].unit;
  for (int cc = 0; cc < 3; ++cc) {
    CHECK(std::abs(mw[cc]) <= 1e-12);
    CHECK(std::abs(mw[cc] - structural[cc]) <= 1e-15);
  }
}

TEST_CASE("second moments match the prescribed tensor") {
  const MikadoFamily& f = family();
  const Sym3 id = Sym3::identity();

  // Build-grid quadrature reproduces the identity to roundoff.
  const Sym3 m = second_moment(f, id);
  CHECK(frobenius(m - id) <= 1e-12);

  // Coarser quadrature agrees to the resolution of the profile.
  const Sym3 m96 = second_moment(f, id, 96);
  CHECK(frobenius(m96 - id) <= 5e-6);

  // A rotated target away from the identity.
  Rng rng(402);
  const Sym3 r = random_near_id(rng, 0.4);
  const Sym3 mr = second_moment(f, r);
  CHECK(frobenius(mr - r) <= 1e-12);
}

TEST_CASE("mode tables reconstruct the sampled field inside the tail bound") {
  const MikadoFamily& f = family();
  const Sym3 id = Sym3::identity();
  const int n = f.grid_n;
  const MikadoFourier fd = fourier_data(f, id);
  CHECK(fd.entries.size() > 100000);
  CHECK(frobenius(fd.mode0 - id) <= 1e-12);

  // Aggregate the table by wavevector (several tubes share one k).
  std::map<std::array<int, 3>, std::array<std::complex<double>, 3>> table;
  for (const auto& e : fd.entries) {
    auto& v = table[e.k];
    v[0] += e.a * e.axis.x;
    v[1] += e.a * e.axis.y;
    v[2] += e.a * e.axis.z;
  }

  VectorSpectrum sp;
  {
    VectorField w = w_field(f, id, n);
    sp = analyze(w);
  }
  double worst = 0.0;
  for (const auto& [k, v] : table)
    for (int cc = 0; cc < 3; ++cc) worst = std::max(worst, std::abs(v[cc] - spectrum_at(sp, cc, k)));
  MESSAGE("aggregated mode table vs sampled spectrum ", worst);
  CHECK(worst <= 1e-12);

  // Remove the retained band (both explicit mirrors on the k3 = 0 plane)
  // plus the mean; what remains is the discarded content, which must stay
  // inside the tail bound derived from the measured decay.
  for (const auto& [k, v] : table) {
    if (k[2] > 0) {
      const std::size_t at = sp.idx((k[0] % n + n) % n, (k[1] % n + n) % n, k[2]);
      for (int cc = 0; cc < 3; ++cc) sp.c[cc][at] = 0.0;
    } else if (k[2] == 0) {
      const std::size_t at = sp.idx((k[0] % n + n) % n, (k[1] % n + n) % n, 0);
      const std::size_t mir = sp.idx(((-k[0]) % n + n) % n, ((-k[1]) % n + n) % n, 0);
      for (int cc = 0; cc < 3; ++cc) {
        sp.c[cc][at] = 0.0;
        sp.c[cc][mir] = 0.0;
      }
    }
  }
  for (int cc = 0; cc < 3; ++cc) sp.c[cc][sp.idx(0, 0, 0)] = 0.0;
  const double discarded = norm0(synthesize(sp));
  MESSAGE("discarded-band sup ", discarded, " vs tail bound ", fd.tail);
  CHECK(discarded <= fd.tail);
  CHECK(fd.tail <= 10.0);  // bound itself stays a small fraction of |W|_0
}

TEST_CASE("mode coefficients decay like a smooth profile") {
  const MikadoFamily& f = family();
  const MikadoFourier fd = fourier_data(f, Sym3::identity());

  double recomputed_cbar = 0.0;
  std::array<double, 3> shell{0.0, 0.0, 0.0};
  for (const auto& e : fd.entries) {
    const double kn = std::sqrt(static_cast<double>(e.k[0]) * e.k[0] +
                                static_cast<double>(e.k[1]) * e.k[1] +
                                static_cast<double>(e.k[2]) * e.k[2]);
    const double a = std::abs(e.a);
    recomputed_cbar = std::max(recomputed_cbar, a * kn * kn * kn * kn * kn);
    if (kn >= 16 && kn < 32)
      shell[0] = std::max(shell[0], a);
    else if (kn >= 32 && kn < 64)
      shell[1] = std::max(shell[1], a);
    else if (kn >= 64)
      shell[2] = std::max(shell[2], a);
  }
  CHECK(fd.cbar == doctest::Approx(recomputed_cbar).epsilon(1e-14));

  // Least-squares log2 slope through the three dyadic shell maxima.
  const double s1 = std::log2(shell[1] / shell[0]);
  const double s2 = std::log2(shell[2] / shell[1]);
  const double slope = 0.5 * (s1 + s2);
  MESSAGE("dyadic shell maxima ", shell[0], " ", shell[1], " ", shell[2], "; slope ", slope);
  CHECK(slope <= -6.0);
}

TEST_CASE("geometric constants dominate the table and obey their identities") {
  const MikadoFamily& f = family();
  const GeometricConstants g32 = geometric_constants(f, 32);
  const GeometricConstants g64 = geometric_constants(f, 64);

  // m is exactly the advertised multiple of the retained lattice sum.
  CHECK(g32.m == 64.0 * g32.cbar * g32.lattice_sum);
  CHECK(g64.m == 64.0 * g64.cbar * g64.lattice_sum);
  CHECK(g32.lattice_sum > 16.0);
  CHECK(g64.lattice_sum > g32.lattice_sum);
  CHECK(g64.lattice_sum < 16.6);  // full-lattice sum of |k|^-4 is about 16.53

  // The sampled maximum includes every per-tube analytic maximizer
  // R = Id + rho * unvec(row)/|row|, so it equals the closed form.
  double closed = 0.0;
  for (std::size_t j = 0; j < f.tubes.size(); ++j) {
    double a0 = f.gamma_map[j][0] + f.gamma_map[j][1] + f.gamma_map[j][2];
    double len = 0.0;
    for (int q = 0; q < 6; ++q) len += f.gamma_map[j][q] * f.gamma_map[j][q];
    len = std::sqrt(len);
    double c5 = 0.0;
    for (const MikadoMode& m : f.tubes[j].modes) {
      if (std::max({std::abs(m.k[0]), std::abs(m.k[1]), std::abs(m.k[2])}) > 64) continue;
      const double kn = std::sqrt(static_cast<double>(m.k[0]) * m.k[0] +
                                  static_cast<double>(m.k[1]) * m.k[1] +
                                  static_cast<double>(m.k[2]) * m.k[2]);
      c5 = std::max(c5, std::abs(m.psi_hat) * kn * kn * kn * kn * kn);
    }
    closed = std::max(closed, std::sqrt(a0 + f.domain_radius * len) * c5);
  }
  CHECK(g64.cbar == doctest::Approx(closed).epsilon(1e-12));

  // The certified maximum dominates any single evaluation of the table.
  CHECK(g64.cbar >= fourier_data(f, Sym3::identity()).cbar);

  // Doubling the retained band moves m by less than the analytic tail, and
  // the decay constant itself is already stable at the smaller band.
  MESSAGE("m at caps 32/64: ", g32.m, " ", g64.m, "; tail ", g32.tail);
  CHECK(std::abs(g64.m - g32.m) <= g32.tail);
  CHECK(std::abs(g64.cbar - g32.cbar) <= 1e-12 * g32.cbar);
}

TEST_CASE("curl potentials invert the retained modes") {
  const MikadoFamily& f = family();
  const Sym3 id = Sym3::identity();
  const MikadoFourier fd = fourier_data(f, id);

  std::map<std::array<int, 3>, std::array<std::complex<double>, 3>> table;
  for (const auto& e : fd.entries) {
    auto& v = table[e.k];
    v[0] += e.a * e.axis.x;
    v[1] += e.a * e.axis.y;
    v[2] += e.a * e.axis.z;
  }

  // Hand case k = e3: the potential is i(-W_y, W_x, 0).
  {
    const std::array<int, 3> k{0, 0, 1};
    const auto w = table.at(k);
    const auto q = potential_form(f, id, k);
    const std::complex<double> i1(0.0, 1.0);
    CHECK(std::abs(q[0] - i1 * (-w[1])) <= 1e-15);
    CHECK(std::abs(q[1] - i1 * w[0]) <= 1e-15);
    CHECK(std::abs(q[2]) <= 1e-15);
    CHECK(std::abs(w[0]) > 1e-6);  // the mode is genuinely populated
  }

  // Round trip and orthogonality across a spread of modes.
  double worst_rt = 0.0, worst_orth = 0.0;
  std::size_t step = fd.entries.size() / 20;
  for (std::size_t idx = 0, cnt = 0; idx < fd.entries.size() && cnt < 20; idx += step, ++cnt) {
    const auto& k = fd.entries[idx].k;
    const auto w = table.at(k);
    const auto q = potential_form(f, id, k);
    const std::complex<double> i1(0.0, 1.0);
    const std::complex<double> rx =
        i1 * (static_cast<double>(k[1]) * q[2] - static_cast<double>(k[2]) * q[1]);
    const std::complex<double> ry =
        i1 * (static_cast<double>(k[2]) * q[0] - static_cast<double>(k[0]) * q[2]);
    const std::complex<double> rz =
        i1 * (static_cast<double>(k[0]) * q[1] - static_cast<double>(k[1]) * q[0]);
    worst_rt = std::max({worst_rt, std::abs(rx - w[0]), std::abs(ry - w[1]), std::abs(rz - w[2])});
    worst_orth = std::max(worst_orth,
                          std::abs(static_cast<double>(k[0]) * q[0] +
                                   static_cast<double>(k[1]) * q[1] +
                                   static_cast<double>(k[2]) * q[2]));
  }
  MESSAGE("potential round trip ", worst_rt, ", orthogonality ", worst_orth);
  CHECK(worst_rt <= 1e-12);
  CHECK(worst_orth <= 1e-15);

  CHECK_THROWS_WITH_AS(potential_form(f, id, {0, 0, 0}), doctest::Contains("potential form"),
                       Fault);
}

TEST_CASE("amplitude derivatives match finite differences") {
  const MikadoFamily& f = family();
  Rng rng(403);
  double worst = 0.0;
  std::array<double, 2> err{0.0, 0.0};
  for (int trial = 0; trial < 3; ++trial) {
    const Sym3 r = random_near_id(rng, 0.3);
    std::array<double, 6> dir;
    double d2 = 0.0;
    for (double& x : dir) {
      x = rng.normal();
      d2 += x * x;
    }
    for (double& x : dir) x /= std::sqrt(d2);
    const Sym3 e = identity_offset(dir) - Sym3::identity();

    const auto c0 = gamma_sq(f, r);
    for (std::size_t j = 0; j < f.tubes.size(); ++j) {
      double row_dot = 0.0;
      for (int q = 0; q < 6; ++q) row_dot += f.gamma_map[j][q] * dir[q];
      const double analytic = row_dot / (2.0 * std::sqrt(c0[j]));
      for (int lvl = 0; lvl < 2; ++lvl) {
        const double h = lvl == 0 ? 1e-4 : 5e-5;
        const auto cp = gamma_sq(f, r + h * e);
        const auto cm = gamma_sq(f, r + (-h) * e);
        const double fd = (std::sqrt(cp[j]) - std::sqrt(cm[j])) / (2.0 * h);
        err[lvl] = std::max(err[lvl], std::abs(fd - analytic));
        if (lvl == 0) worst = std::max(worst, std::abs(fd - analytic) / (1.0 + std::abs(analytic)));
      }
    }
  }
  MESSAGE("derivative error at h and h/2: ", err[0], " ", err[1], "; order ",
          std::log2(err[0] / err[1]));
  CHECK(worst <= 1e-6);
  CHECK(err[1] <= err[0]);
}

TEST_CASE("family summary serializes to a reloadable report") {
  const MikadoFamily& f = family();
  const auto path = std::filesystem::temp_directory_path() / "mikado_family.json";
  dump_family(f, path.string());

  std::ifstream in(path);
  REQUIRE(in.good());
  const nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["grid_n"] == 192);
  CHECK(j["kmax"] == 64);
  CHECK(j["shrunken"] == true);
  CHECK(j["domain_radius"].get<double>() == doctest::Approx(f.domain_radius).epsilon(1e-14));
  REQUIRE(j["tubes"].size() == 9);
  REQUIRE(j["gamma_map"].size() == 9);
  for (std::size_t tj = 0; tj < 9; ++tj) {
    CHECK(j["tubes"][tj]["radius"].get<double>() == 0.0724);
    CHECK(j["tubes"][tj]["axis"][0].get<int>() == f.tubes[tj].axis[0]);
    CHECK(j["tubes"][tj]["mode_count"].get<std::size_t>() == f.tubes[tj].modes.size());
    for (int q = 0; q < 6; ++q)
      CHECK(j["gamma_map"][tj][q].get<double>() ==
            doctest::Approx(f.gamma_map[tj][q]).epsilon(1e-14));
  }
  std::filesystem::remove(path);
}
