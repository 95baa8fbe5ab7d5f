#pragma once
// Families of steady pipe flows on the torus: disjoint periodic tubes with
// smooth compactly supported cross-sections, each aligned with a rational
// direction, combined so that the quadratic moment of the family reproduces a
// prescribed symmetric tensor near the identity.  Provides closed-form
// pointwise evaluation, the retained Fourier mode tables, the derived
// geometric constants, and the curl potential of individual modes.
#include <array>
#include <complex>
#include <string>
#include <vector>

#include "ciforge/common.hpp"
#include "ciforge/field.hpp"

namespace ciforge {

// One tube: a periodic line x = base + s*axis carrying the radial profile
//   psi(x) = norm * (g(u) + corr * g2(u)),  u = dist(x, line)/radius,
//   g(u) = (1-u^2)^6 (1-8u^2),  g2(u) = (1-u^2)^7,
// where corr makes the discrete mean of psi on the build grid vanish and norm
// makes the discrete mean of psi^2 equal one.  fu/fv span the plane
// perpendicular to axis; projections of the integer lattice onto them are
// 1/|fu| and 1/|fv| periodic, which gives an exact nearest-image reduction.
struct MikadoMode {
  std::array<int, 3> k;
  std::complex<double> psi_hat;   // retained mode of psi
  std::complex<double> psi2_hat;  // retained mode of psi^2
};

struct MikadoTube {
  std::array<int, 3> axis;  // integer direction of the center line
  std::array<int, 3> fu;    // integer perpendicular, in-plane reduction axis
  std::array<int, 3> fv;    // integer perpendicular, second reduction axis
  V3 unit;                  // axis normalized
  V3 base;                  // point on the center line
  double radius = 0.0;
  double corr = 0.0;       // coefficient of the support-matched correction
  double norm = 0.0;       // amplitude giving unit discrete energy
  double mean_psi = 0.0;   // discrete mean of psi on the build grid
  double mean_psi2 = 0.0;  // discrete mean of psi^2 on the build grid
  double c5 = 0.0;         // max over retained k of |psi_hat| |k|^5
  double tail = 0.0;       // sup-norm bound on the discarded mode content
  std::vector<MikadoMode> modes;  // all retained k != 0 with k . axis == 0
};

struct MikadoFamily {
  std::vector<MikadoTube> tubes;
  // Row j gives the coefficient map c_j(R) = row . vec6(R); the squared tube
  // amplitudes solve sum_j c_j(R) axis_j axis_j^T = R exactly.
  std::vector<std::array<double, 6>> gamma_map;
  double domain_radius = 0.0;  // certified Frobenius radius around Id
  double margin = 0.0;         // min over tubes of inf c_j on that ball
  bool shrunken = false;       // certified ball smaller than radius 1/2
  int kmax = 0;                // retained Fourier band (max |k|_inf)
  int grid_n = 0;              // build/verification grid
};

// Isometric embedding of a symmetric tensor: (S00, S11, S22, sqrt2*S01,
// sqrt2*S02, sqrt2*S12), so Euclidean balls match Frobenius balls.
std::array<double, 6> sym_to_vec(const Sym3& s);

// Builds the family: positivity certification of the coefficient map, exact
// tube-line geometry checks, profile sampling on the build grid, and Fourier
// mode extraction.  j_directions selects the direction set: 9 (default
// production set, certified on a slightly shrunken ball and flagged) or 6
// (minimal Sym(3)-spanning set, whose coefficient map provably loses
// positivity inside the radius-1/2 ball and therefore faults).
MikadoFamily build_family(int j_directions, double tube_radius = 0.0724,
                          int kmax = 32, int grid_n = 192);

// psi_j at an arbitrary point (closed form, exact nearest-image reduction).
double tube_profile(const MikadoTube& t, const V3& x);

// Squared amplitudes c_j(R); faults if any is nonpositive or R leaves the
// certified ball.
std::vector<double> gamma_sq(const MikadoFamily& f, const Sym3& r);

// W(R, x) and the pointwise tensor W (x) W (disjoint supports: one tube).
V3 mikado_w(const MikadoFamily& f, const Sym3& r, const V3& x);
Sym3 mikado_ww(const MikadoFamily& f, const Sym3& r, const V3& x);

// W(R, .) sampled on an n^3 grid with the exact integer-index reduction.
VectorField w_field(const MikadoFamily& f, const Sym3& r, int n);

// Grid quadrature of W (x) W; n = 0 uses the build grid.
Sym3 second_moment(const MikadoFamily& f, const Sym3& r, int n = 0);

// One Fourier entry of the family at a given R: the scalar coefficient a of
// the wave a * A e^{i k.xi} (A the real unit tube axis, A.k = 0) and the
// scalar cw of the quadratic tensor mode C_k = cw * (A (x) A), C_k k = 0.
struct MikadoFourierEntry {
  std::array<int, 3> k;
  int tube = 0;
  std::complex<double> a;
  V3 axis;
  std::complex<double> cw;
};

struct MikadoFourier {
  std::vector<MikadoFourierEntry> entries;  // k != 0, both half-spaces
  Sym3 mode0;         // zeroth mode of W (x) W; equals R
  double cbar = 0.0;  // max |a| |k|^5 over the entries
  double tail = 0.0;  // sup bound on the resynthesis error of the truncation
};

MikadoFourier fourier_data(const MikadoFamily& f, const Sym3& r);

// C-bar = max over sampled R in the certified ball (the per-tube analytic
// maximizers are included in the sample) and retained |k|_inf <= cap of
// |a_k(R)| |k|^5; m = 64 * cbar * lattice_sum with lattice_sum the retained
// sum of |k|^-4, and tail an analytic bound on the discarded part of m.
struct GeometricConstants {
  double cbar = 0.0;
  double m = 0.0;
  double lattice_sum = 0.0;
  double tail = 0.0;
};

GeometricConstants geometric_constants(const MikadoFamily& f, int kmax_cap = 0);

// Curl potential of the combined mode at k in the e^{i k.xi} convention:
// q = (i k x W_hat(k)) / |k|^2, so that (i k) x q = W_hat(k).
std::array<std::complex<double>, 3> potential_form(const MikadoFamily& f,
                                                   const Sym3& r,
                                                   const std::array<int, 3>& k);

// Reproducibility dump: directions, shifts, radius, profile coefficients,
// coefficient map, certified ball, and retained-band summary.
void dump_family(const MikadoFamily& f, const std::string& path);

}  // namespace ciforge
