// The level-to-level iteration: bad-set bookkeeping, blended exact local
// solutions that relocate the stress into short temporal ramps, the
// oscillatory pipe-flow corrector that cancels it there, and the verification
// pass measuring the inductive estimates and set properties.
#include "ciforge/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciforge/calculus.hpp"
#include "ciforge/holder.hpp"
#include "ciforge/io.hpp"
#include "ciforge/mollify.hpp"
#include "ciforge/spectral.hpp"

namespace ciforge {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Degree-7 smoothstep: C^3 contact at both ends, strictly increasing inside.
double sstep(double u) { return u * u * u * u * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u))); }
double sstep_d(double u) {
  const double a = u * (1.0 - u);
  return 140.0 * a * a * a;
}
double sstep_d2(double u) {
  const double a = u * (1.0 - u);
  return 420.0 * a * a * (1.0 - 2.0 * u);
}

// Unit ramp of width r centered at c: 0 left of c - r/2, 1 right of c + r/2.
// Complementary window pairs evaluate it with bitwise-identical (c, r), so
// telescoping sums cancel to roundoff.
double ustep(double t, double c, double r) {
  const double u = (t - c) / r + 0.5;
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return sstep(u);
}
double ustep_d(double t, double c, double r) {
  const double u = (t - c) / r + 0.5;
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return sstep_d(u) / r;
}

// Blend profile of the seed pair: 1 on the first 2/5 of the horizon, 0 on the
// last 2/5, one falling smoothstep across the middle fifth.
double blend_eta(double t, double T) {
  const double u = (t / T - 0.4) * 5.0;
  if (u <= 0.0) return 1.0;
  if (u >= 1.0) return 0.0;
  return 1.0 - sstep(u);
}
double blend_eta_d(double t, double T) {
  const double u = (t / T - 0.4) * 5.0;
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return -sstep_d(u) * 5.0 / T;
}

double c1_norm(const VectorField& v) { return norm0(v) + derivative_sup(v, 1); }

V3 mean_v3(const VectorField& v) {
  const auto m = mean(v);
  return {m[0], m[1], m[2]};
}

void subtract_mean(VectorField& f) {
  const auto m = mean(f);
  for (int k = 0; k < 3; ++k)
    for (double& x : f.c[k]) x -= m[k];
}

// Symmetric anti-divergence through the vector potential: z solves
// curl z = f for the (analytically) mean-zero input, and the curl route
// returns the traceless potential whose divergence reproduces f.  The
// roundoff-level discrete mean is removed first so degenerate differences
// cannot trip the mean gate of the multiplier.
SymTensorField anti_divergence_potential(VectorField f) {
  subtract_mean(f);
  VectorField z = biot_savart(f);
  return rcurl(z);
}

using Mat3 = std::array<V3, 3>;  // rows

Mat3 rows_of(const FieldT<9>& g, std::size_t p, bool add_identity) {
  Mat3 e;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      e[static_cast<std::size_t>(i)][j] =
          g.c[static_cast<std::size_t>(3 * i + j)][p] + (add_identity && i == j ? 1.0 : 0.0);
  return e;
}

V3 mat_apply(const Mat3& a, V3 v) { return {dot(a[0], v), dot(a[1], v), dot(a[2], v)}; }

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
  return r;
}

Mat3 mat_transpose(const Mat3& a) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r[i][static_cast<int>(j)] = a[j][static_cast<int>(i)];
  return r;
}

Mat3 mat_inverse(const Mat3& a) {
  const V3 c0 = cross(a[1], a[2]), c1 = cross(a[2], a[0]), c2 = cross(a[0], a[1]);
  const double s = 1.0 / dot(a[0], c0);
  Mat3 inv;
  inv[0] = {s * c0.x, s * c1.x, s * c2.x};
  inv[1] = {s * c0.y, s * c1.y, s * c2.y};
  inv[2] = {s * c0.z, s * c1.z, s * c2.z};
  return inv;
}

Mat3 mat_of_sym(const Sym3& s) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[static_cast<std::size_t>(i)][j] = s(i, j);
  return m;
}

double frob_dist_to_id(const Sym3& s) {
  Sym3 d = s;
  d.c[Sym3::I00] -= 1.0;
  d.c[Sym3::I11] -= 1.0;
  d.c[Sym3::I22] -= 1.0;
  return frobenius(d);
}

nlohmann::json check_json(const CheckRecord& c) {
  return {{"name", c.name},   {"lhs", c.lhs},   {"rhs", c.rhs},
          {"slack", c.slack}, {"pass", c.pass}, {"strict", c.strict}};
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Cutoffs

namespace {
// Gluing window edges are the shared ramp centers, looked up by value so that
// adjacent windows evaluate the unit ramp with the same double.
double nearest_center(const std::vector<double>& centers, double x) {
  auto it = std::lower_bound(centers.begin(), centers.end(), x);
  if (it == centers.end()) return centers.back();
  if (it == centers.begin()) return centers.front();
  return (x - *(it - 1) <= *it - x) ? *(it - 1) : *it;
}
}  // namespace

double Cutoffs::eval(int i, double t) const {
  if (i < 0 || i >= static_cast<int>(plateau.size())) return 0.0;
  const auto& pl = plateau[static_cast<std::size_t>(i)];
  if (kind == Kind::glue) {
    const double cl = nearest_center(centers, pl.first);
    const double cr = nearest_center(centers, pl.second);
    return ustep(t, cl, ramp) - ustep(t, cr, ramp);
  }
  const double el = pl.first - 0.5 * ramp;
  const double er = pl.second + 0.5 * ramp;
  return ustep(t, el, ramp) - ustep(t, er, ramp);
}

double Cutoffs::eval_dt(int i, double t) const {
  if (i < 0 || i >= static_cast<int>(plateau.size())) return 0.0;
  const auto& pl = plateau[static_cast<std::size_t>(i)];
  if (kind == Kind::glue) {
    const double cl = nearest_center(centers, pl.first);
    const double cr = nearest_center(centers, pl.second);
    return ustep_d(t, cl, ramp) - ustep_d(t, cr, ramp);
  }
  const double el = pl.first - 0.5 * ramp;
  const double er = pl.second + 0.5 * ramp;
  return ustep_d(t, el, ramp) - ustep_d(t, er, ramp);
}

double Cutoffs::eval_sum(double t) const {
  double s = 0.0;
  for (std::size_t i = 0; i < plateau.size(); ++i) s += eval(static_cast<int>(i), t);
  return s;
}

int Cutoffs::window_at(double t) const {
  for (std::size_t i = 0; i < plateau.size(); ++i)
    if (eval(static_cast<int>(i), t) > 0.0) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------------------
// Bad sets

double BadSet::measure() const {
  double s = 0.0;
  for (const auto& iv : intervals) s += iv.second - iv.first;
  return s;
}

bool BadSet::contains(double t) const {
  for (const auto& iv : intervals)
    if (t > iv.first && t < iv.second) return true;
  return false;
}

double BadSet::dist_to_good(double t) const {
  for (const auto& iv : intervals)
    if (t > iv.first && t < iv.second) return std::min(t - iv.first, iv.second - t);
  return 0.0;
}

bool BadSet::in_real_bad(double t) const { return dist_to_good(t) > tau; }

BadSet make_badset(int level, double t_begin, double t_end, double tau,
                   std::vector<std::pair<double, double>> intervals) {
  require(t_end > t_begin, "bad set", "ambient window is empty");
  require(tau > 0.0, "bad set", "tau must be positive");
  const double span_tol = 1e-9 * (t_end - t_begin);
  double prev_hi = t_begin;
  for (const auto& iv : intervals) {
    require(iv.second > iv.first, "bad set", "interval reversed");
    require(iv.first >= prev_hi - span_tol, "bad set", "intervals overlap or out of order");
    const double len = iv.second - iv.first;
    // Deep in the cascade 5*tau shrinks toward the spacing of representable
    // endpoints, so allow a few ulps of the endpoint magnitude on top of the
    // relative budget.
    const double len_tol =
        1e-9 * 5.0 * tau +
        8.0 * std::numeric_limits<double>::epsilon() *
            std::max(std::abs(iv.first), std::abs(iv.second));
    require(std::abs(len - 5.0 * tau) <= len_tol, "bad set",
            "interval length " + fmt(len) + " differs from five tau = " + fmt(5.0 * tau));
    require(iv.first >= t_begin - span_tol && iv.second <= t_end + span_tol, "bad set",
            "interval leaves the ambient window");
    prev_hi = iv.second;
  }
  BadSet b;
  b.level = level;
  b.t_begin = t_begin;
  b.t_end = t_end;
  b.tau = tau;
  b.intervals = std::move(intervals);
  return b;
}

bool good_set_nested(const BadSet& prev, const BadSet& next) {
  const double tol = 1e-12 * (prev.t_end - prev.t_begin);
  for (const auto& ni : next.intervals) {
    bool inside = false;
    for (const auto& pi : prev.intervals)
      if (ni.first >= pi.first - tol && ni.second <= pi.second + tol) {
        inside = true;
        break;
      }
    if (!inside) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Window plan

namespace {
// Ramp centers of one planned interval: midway between consecutive nodes,
// plus one center half a node spacing outside each end node.  All gaps
// between consecutive centers equal the node spacing exactly.
std::vector<double> ramp_centers_of(const WindowGeometry& g, double theta) {
  std::vector<double> m;
  m.push_back(g.t_nodes.front() - 0.5 * theta);
  for (std::size_t i = 1; i < g.t_nodes.size(); ++i)
    m.push_back(0.5 * (g.t_nodes[i - 1] + g.t_nodes[i]));
  m.push_back(g.t_nodes.back() + 0.5 * theta);
  return m;
}
}  // namespace

std::vector<WindowGeometry> window_plan(const BadSet& bad, const SchemeParams& params,
                                        int slices_per_tau) {
  require(slices_per_tau >= 4, "window plan", "need at least 4 slices per tau");
  const QScales next = scales(params, bad.level + 1);
  const double theta = next.theta_q, tau1 = next.tau_q, tauq = bad.tau;
  require(theta > 0.0 && tau1 > 0.0 && tau1 < theta, "window plan",
          "node spacing must dominate the ramp width (theta = " + fmt(theta) +
              ", tau = " + fmt(tau1) + ")");
  require(theta > 5.0 * tau1, "window plan",
          "dilated ramps of adjacent nodes would overlap (theta = " + fmt(theta) +
              " <= 5 tau = " + fmt(5.0 * tau1) + ")");
  std::vector<WindowGeometry> plan;
  for (std::size_t w = 0; w < bad.intervals.size(); ++w) {
    WindowGeometry g;
    g.interval_index = static_cast<int>(w);
    g.j_lo = bad.intervals[w].first;
    g.j_hi = bad.intervals[w].second;
    g.jhat_lo = g.j_lo + tauq;
    g.jhat_hi = g.j_hi - tauq;
    int n = static_cast<int>(std::ceil((g.jhat_hi - g.jhat_lo) / theta - 1e-12));
    if (g.jhat_lo + n * theta < g.jhat_hi - 1e-12 * tauq) ++n;
    require(n >= 1, "window plan",
            "eroded interval shorter than one node spacing (3 tau_q = " + fmt(3.0 * tauq) +
                " vs theta = " + fmt(theta) + ")");
    for (int i = 0; i <= n; ++i) g.t_nodes.push_back(g.jhat_lo + i * theta);
    const auto m = ramp_centers_of(g, theta);
    const double margin_lo = (m.front() - 2.5 * tau1) - g.j_lo;
    const double margin_hi = g.j_hi - (m.back() + 2.5 * tau1);
    require(margin_lo > 0.0 && margin_hi > 0.0, "window plan",
            "dilated ramps leave the interval: margins " + fmt(margin_lo) + ", " +
                fmt(margin_hi) + " (erosion too small against spacing and overshoot)");
    for (double c : m) g.ramps.emplace_back(c - 0.5 * tau1, c + 0.5 * tau1);
    plan.push_back(std::move(g));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Pair access and residuals

const SymTensorField* stress_at(const EulerReynoldsPair& pair, std::size_t vi) {
  if (vi >= pair.v.times.size()) return nullptr;
  const double t = pair.v.times[vi];
  const auto& ts = pair.R.times;
  auto it = std::lower_bound(ts.begin(), ts.end(), t - 1e-12);
  if (it != ts.end() && std::abs(*it - t) <= 1e-12)
    return &pair.R.slices[static_cast<std::size_t>(it - ts.begin())];
  return nullptr;
}

namespace {

struct Run {
  std::size_t a = 0, b = 0;  // inclusive slice range with uniform spacing
  double dt = 0.0;
};

std::vector<Run> uniform_runs(const std::vector<double>& times) {
  std::vector<Run> runs;
  const std::size_t n = times.size();
  std::size_t a = 0;
  while (a + 1 < n) {
    const double dt = times[a + 1] - times[a];
    std::size_t b = a + 1;
    while (b + 1 < n && std::abs((times[b + 1] - times[b]) - dt) <= 1e-9 * dt) ++b;
    if (b - a >= 2) runs.push_back({a, b, dt});
    a = b;
  }
  return runs;
}

double run_residual(const EulerReynoldsPair& pair, const Run& r,
                    const std::vector<ScalarField>* pressure_override) {
  std::vector<double> ts(pair.v.times.begin() + static_cast<long>(r.a),
                         pair.v.times.begin() + static_cast<long>(r.b) + 1);
  std::vector<VectorField> vv(pair.v.slices.begin() + static_cast<long>(r.a),
                              pair.v.slices.begin() + static_cast<long>(r.b) + 1);
  std::vector<ScalarField> pp;
  if (pressure_override)
    pp = *pressure_override;
  else
    pp.assign(pair.p.slices.begin() + static_cast<long>(r.a),
              pair.p.slices.begin() + static_cast<long>(r.b) + 1);
  bool any_stress = false;
  std::vector<SymTensorField> rr;
  rr.reserve(ts.size());
  const Grid grid = pair.v.slices[0].grid;
  for (std::size_t i = r.a; i <= r.b; ++i) {
    if (const SymTensorField* s = stress_at(pair, i)) {
      rr.push_back(*s);
      any_stress = true;
    } else {
      rr.emplace_back(grid);
    }
  }
  return euler_reynolds_residual(ts, vv, any_stress ? &rr : nullptr, &pp);
}

// Truncation-error scale of the centered time stencil on one uniform run:
// (dt^2 / 6) * max third time derivative, the latter estimated from the
// stored slices by a centered third difference.  Returns -1 when the run is
// too short to estimate.
double run_fd_bound(const EulerReynoldsPair& pair, const Run& r) {
  if (r.b - r.a < 4) return -1.0;
  const Grid grid = pair.v.slices[0].grid;
  double d3 = 0.0;
  for (std::size_t j = r.a + 2; j + 2 <= r.b; ++j) {
    VectorField acc(grid);
    axpy(acc, 1.0, pair.v.slices[j + 2]);
    axpy(acc, -2.0, pair.v.slices[j + 1]);
    axpy(acc, 2.0, pair.v.slices[j - 1]);
    axpy(acc, -1.0, pair.v.slices[j - 2]);
    d3 = std::max(d3, norm0(acc) / (2.0 * r.dt * r.dt * r.dt));
  }
  return r.dt * r.dt / 6.0 * d3;
}

}  // namespace

std::vector<double> segment_residuals(const EulerReynoldsPair& pair) {
  std::vector<double> out;
  for (const Run& r : uniform_runs(pair.v.times)) out.push_back(run_residual(pair, r, nullptr));
  return out;
}

double pair_residual(const EulerReynoldsPair& pair) {
  double m = 0.0;
  for (double r : segment_residuals(pair)) m = std::max(m, r);
  return m;
}

// ---------------------------------------------------------------------------
// Initial pair

namespace {

bool steady_input(const TimeSlab<EulerState>& s) { return s.times.size() == 1; }

const VectorField& input_v(const TimeSlab<EulerState>& s, double t) {
  if (steady_input(s)) return s.slices[0].v;
  return s.at(t).v;
}

void validate_inputs(const TimeSlab<EulerState>& v1, const TimeSlab<EulerState>& v2,
                     const InitialOptions& opts, InitialReport& rep) {
  require(!v1.times.empty() && !v2.times.empty(), "slab mismatch", "empty input slab");
  require(v1.slices[0].v.grid == v2.slices[0].v.grid, "slab mismatch", "input grids differ");
  if (!steady_input(v1) || !steady_input(v2)) {
    require(v1.times.size() == v2.times.size(), "slab mismatch",
            "input slabs sample different time counts");
    for (std::size_t i = 0; i < v1.times.size(); ++i)
      require(std::abs(v1.times[i] - v2.times[i]) <= 1e-12, "slab mismatch",
              "input slabs sample different times");
  }
  const V3 m1 = mean_v3(v1.slices[0].v), m2 = mean_v3(v2.slices[0].v);
  require(norm(m1 - m2) <= opts.mean_tol, "means differ",
          "input velocity means differ by " + fmt(norm(m1 - m2)));
  auto input_residual = [](const TimeSlab<EulerState>& s) {
    if (steady_input(s)) return norm0(euler_rhs(s.slices[0].v));
    return euler_reynolds_residual(s, nullptr);
  };
  rep.input_residual_1 = input_residual(v1);
  rep.input_residual_2 = input_residual(v2);
  auto ok = [&](double r, const VectorField& v) {
    return r <= opts.euler_tol * std::max(1.0, norm0(v));
  };
  require(ok(rep.input_residual_1, v1.slices[0].v), "inputs not Euler",
          "first input residual " + fmt(rep.input_residual_1));
  require(ok(rep.input_residual_2, v2.slices[0].v), "inputs not Euler",
          "second input residual " + fmt(rep.input_residual_2));
}

}  // namespace

InitialReport initial_epsilon(const TimeSlab<EulerState>& v1, const TimeSlab<EulerState>& v2,
                              const SchemeParams& params, const InitialOptions& opts) {
  InitialReport rep;
  validate_inputs(v1, v2, opts, rep);
  const double T = params.T;

  // Probe times: the stored grid for slab inputs; for steady inputs the
  // constant wings plus a dense sweep of the blend ramp.
  std::vector<double> probes;
  const bool steady = steady_input(v1) && steady_input(v2);
  if (steady) {
    probes.push_back(0.0);
    for (int i = 0; i <= 64; ++i) probes.push_back(T * (0.4 + 0.2 * i / 64.0));
    probes.push_back(T);
  } else {
    probes = v1.times;
  }

  const Grid grid = v1.slices[0].v.grid;
  SymTensorField pot, quad;
  bool cached = false;
  for (double t : probes) {
    const VectorField& a = input_v(v1, t);
    const VectorField& b = input_v(v2, t);
    const double eta = blend_eta(t, T), etad = blend_eta_d(t, T);
    VectorField diff = a;
    axpy(diff, -1.0, b);
    VectorField blend = b;
    axpy(blend, eta, diff);
    rep.norm_v0_c0 = std::max(rep.norm_v0_c0, norm0(blend));
    rep.norm_v0_c1 = std::max(rep.norm_v0_c1, c1_norm(blend));
    if (etad != 0.0 || eta * (1.0 - eta) != 0.0) {
      if (!steady || !cached) {
        pot = anti_divergence_potential(diff);
        quad = outer_product(diff, diff);
        cached = true;
      }
      SymTensorField r0(grid, t);
      axpy(r0, etad, pot);
      axpy(r0, -eta * (1.0 - eta), quad);
      rep.norm_R0 = std::max(rep.norm_R0, norm0(r0));
    }
  }

  const QScales s0 = scales(params, 0), s1 = scales(params, 1);
  const double stress_bound =
      s1.delta_q * std::pow(s0.lambda_q, -(params.gamma + 3.0 * params.alpha));
  const double c1_bound = params.M * std::sqrt(s0.delta_q) * s0.lambda_q;
  const double c0_bound = 1.0 - std::sqrt(s0.delta_q);
  require(c0_bound > 0.0, "inputs not Euler", "level-0 amplitude bound is not positive");
  const double inf = std::numeric_limits<double>::infinity();
  rep.ratios = {rep.norm_R0 > 0 ? std::sqrt(stress_bound / rep.norm_R0) : inf,
                rep.norm_v0_c1 > 0 ? c1_bound / rep.norm_v0_c1 : inf,
                rep.norm_v0_c0 > 0 ? c0_bound / rep.norm_v0_c0 : inf};
  rep.ratios_alt = {rep.ratios[0], rep.norm_v0_c0 > 0 ? c1_bound / rep.norm_v0_c0 : inf,
                    rep.norm_v0_c1 > 0 ? c0_bound / rep.norm_v0_c1 : inf};
  rep.epsilon = std::min({rep.ratios[0], rep.ratios[1], rep.ratios[2]});
  rep.epsilon_alt = std::min({rep.ratios_alt[0], rep.ratios_alt[1], rep.ratios_alt[2]});
  require(rep.epsilon > 0.0, "inputs not Euler", "degenerate inputs give no scale factor");
  rep.t_effective = std::isfinite(rep.epsilon) ? T / rep.epsilon : 0.0;
  return rep;
}

std::vector<double> initial_time_grid(const SchemeParams& params, double epsilon,
                                      int slices_per_tau) {
  require(epsilon > 0.0 && std::isfinite(epsilon), "slab mismatch",
          "scale factor must be positive and finite");
  const double T_eff = params.T / epsilon;
  const double tau0 = T_eff / 15.0;
  const double j_lo = T_eff / 3.0, j_hi = 2.0 * T_eff / 3.0;

  std::vector<double> wings;
  for (int i = 0; i <= 12; ++i) wings.push_back(j_lo * i / 12.0);
  for (int i = 0; i <= 12; ++i) wings.push_back(j_hi + (T_eff - j_hi) * i / 12.0);

  // Body of the grid across the seeded interval.  When the gluing geometry
  // fits this horizon, the backbone spacing divides the node spacing of the
  // next level by a power of two (so planned nodes land on stored slices
  // bitwise) and each planned ramp gets a fine uniform window; otherwise a
  // plain uniform sampling of the middle third is used.
  std::vector<double> body;
  std::vector<std::pair<double, double>> fine_spans;
  double fine_dt = tau0 / slices_per_tau;
  bool planned = false;
  try {
    BadSet bad = make_badset(0, 0.0, T_eff, tau0, {{j_lo, j_hi}});
    const auto plan = window_plan(bad, params, slices_per_tau);
    const QScales s1 = scales(params, 1);
    const double dt_f = s1.tau_q / slices_per_tau;
    fine_dt = dt_f;
    int mb = 1;
    while (mb * tau0 < s1.theta_q * slices_per_tau) mb *= 2;
    const double dt_b = s1.theta_q / mb;

    const WindowGeometry& g = plan[0];
    const int k_back = static_cast<int>(std::floor((g.jhat_lo - j_lo) / dt_b));
    const int k_fwd = static_cast<int>(std::floor((j_hi - g.jhat_lo) / dt_b));
    for (int k = -k_back; k <= k_fwd; ++k) body.push_back(g.jhat_lo + k * dt_b);
    for (double t : g.t_nodes) body.push_back(t);

    const int K = (3 * slices_per_tau) / 2 + 2;
    for (const auto& ramp : g.ramps) {
      const double m = 0.5 * (ramp.first + ramp.second);
      fine_spans.emplace_back(m - (K + 0.4) * dt_f, m + (K + 0.4) * dt_f);
      for (int k = -K; k <= K; ++k) {
        const double t = m + k * dt_f;
        if (t > 0.0 && t < T_eff) body.push_back(t);
      }
    }
    planned = true;
  } catch (const Fault&) {
    planned = false;
  }
  if (!planned) {
    body.clear();
    fine_spans.clear();
    const int nb =
        std::max(2, static_cast<int>(std::ceil((j_hi - j_lo) / (tau0 / slices_per_tau))));
    for (int k = 0; k <= nb; ++k) body.push_back(j_lo + (j_hi - j_lo) * k / nb);
  }

  // A coarse point interior to a fine span would break its uniform spacing;
  // keep only points on the span's own lattice there.
  std::vector<double> grid;
  auto keep = [&](double t) {
    for (const auto& sp : fine_spans)
      if (t > sp.first && t < sp.second) {
        const double m = 0.5 * (sp.first + sp.second);
        const double k = (t - m) / fine_dt;
        return std::abs(k - std::round(k)) <= 1e-6;
      }
    return true;
  };
  for (double t : wings)
    if (keep(t)) grid.push_back(t);
  for (double t : body)
    if (keep(t)) grid.push_back(t);

  std::sort(grid.begin(), grid.end());
  std::vector<double> out;
  for (double t : grid)
    if (out.empty() || t - out.back() > 1e-6 * fine_dt) out.push_back(t);
  for (double& t : out) t *= epsilon;  // expressed in input-slab time
  return out;
}

InitialPair make_initial_pair(const TimeSlab<EulerState>& v1, const TimeSlab<EulerState>& v2,
                              const SchemeParams& params, const InitialOptions& opts) {
  InitialReport rep = initial_epsilon(v1, v2, params, opts);
  const double eps = opts.epsilon_override > 0.0 ? opts.epsilon_override : rep.epsilon;
  require(eps > 0.0 && std::isfinite(eps), "inputs not Euler",
          "no finite scale factor; pass epsilon_override for degenerate seeds");
  rep.epsilon = eps;
  rep.t_effective = params.T / eps;
  const double T = params.T, T_eff = rep.t_effective;

  const std::vector<double> in_times = initial_time_grid(params, eps, opts.slices_per_tau);
  const Grid grid = v1.slices[0].v.grid;
  const bool steady = steady_input(v1) && steady_input(v2);
  if (!steady) {
    for (double t : in_times) {
      bool found = false;
      for (double s : v1.times)
        if (std::abs(s - t) <= 1e-12) {
          found = true;
          break;
        }
      require(found, "slab mismatch",
              "inputs not materialized at required time " + fmt(t) +
                  " (materialize them on initial_time_grid with this scale factor)");
    }
  }

  EulerReynoldsPair pair;
  pair.q = 0;
  SymTensorField pot, quad;
  bool cached = false;
  for (double t : in_times) {
    const double s = t / eps;
    const VectorField& a = input_v(v1, t);
    const VectorField& b = input_v(v2, t);
    const double eta = blend_eta(t, T), etad = blend_eta_d(t, T);
    VectorField diff = a;
    axpy(diff, -1.0, b);
    VectorField vs = b;
    axpy(vs, eta, diff);
    scale(vs, eps);
    vs.time_tag = s;

    // The stretched pair samples the blend at t = eps * s with amplitude eps
    // on the velocity and eps^2 on the stress.
    const bool ramp_on = (etad != 0.0) || (eta * (1.0 - eta) != 0.0);
    SymTensorField rs;
    bool has_stress = false;
    if (ramp_on) {
      if (!steady || !cached) {
        pot = anti_divergence_potential(diff);
        quad = outer_product(diff, diff);
        cached = true;
      }
      rs = SymTensorField(grid, s);
      axpy(rs, eps * eps * etad, pot);
      axpy(rs, -eps * eps * eta * (1.0 - eta), quad);
      // Identical inputs blend to an exact solution; keep that path stress-free.
      has_stress = norm0(rs) > 0.0;
    }

    ScalarField ps(grid, s);
    if (opts.pressure) {
      ps = has_stress ? solve_pressure(vs, rs) : solve_pressure(vs, SymTensorField(grid));
      ps.time_tag = s;
    }

    pair.v.times.push_back(s);
    pair.v.slices.push_back(std::move(vs));
    pair.p.times.push_back(s);
    pair.p.slices.push_back(std::move(ps));
    if (has_stress) {
      pair.R.times.push_back(s);
      pair.R.slices.push_back(std::move(rs));
    }
  }
  pair.mean_v = mean_v3(pair.v.slices[0]);

  InitialPair out;
  out.pair = std::move(pair);
  std::vector<std::pair<double, double>> seed{{T_eff / 3.0, 2.0 * T_eff / 3.0}};
  if (out.pair.R.times.empty()) seed.clear();  // nothing to glue: empty bad set
  out.bad = make_badset(0, 0.0, T_eff, T_eff / 15.0, std::move(seed));
  out.effective = params;
  out.effective.T = T_eff;
  out.report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// Marching local solutions

namespace {

struct MarchResult {
  TimeSlab<EulerState> slab;
  int hops = 0;
};

// Exact local solution seeded at (seed, t0), recorded at the requested times.
// The trajectory is continued across existence-horizon hops, each hop staying
// inside the guard recomputed at its base; a blow-up check at every record
// point mirrors the single-shot solver's guard.
MarchResult march_node(const VectorField& seed, double t0, std::vector<double> record,
                       const GlueOptions& opts, double dt_cap) {
  MarchResult out;
  const double spacing = seed.grid.spacing();
  const double v1_limit = 1e3 * std::max(c1_norm(seed), 1e-300);
  std::sort(record.begin(), record.end());

  auto horizon = [&](const VectorField& v) {
    return opts.horizon_safety * 0.1 /
           std::max(holder_norm(v, 1.0 + opts.guard_alpha), 1e-300);
  };

  std::vector<std::pair<double, EulerState>> acc;
  auto sweep = [&](int dir) {
    std::vector<double> targets;
    for (double t : record)
      if ((dir > 0 && t >= t0 - 1e-15) || (dir < 0 && t < t0 - 1e-15)) targets.push_back(t);
    if (dir < 0) std::reverse(targets.begin(), targets.end());
    if (targets.empty()) return;

    EulerState cur;
    cur.v = seed;
    cur.t = t0;
    double hop_base = t0;
    double budget = horizon(cur.v);
    ++out.hops;
    for (double t : targets) {
      while (std::abs(t - cur.t) > 1e-13) {
        const double remain = std::abs(t - cur.t);
        double allowed = budget - std::abs(cur.t - hop_base);
        if (allowed <= 1e-12 * std::max(1.0, std::abs(t0))) {
          ++out.hops;
          hop_base = cur.t;
          budget = horizon(cur.v);
          allowed = budget;
        }
        const double dt_cfl = 0.995 * opts.cfl * spacing / std::max(norm0(cur.v), 1e-300);
        const double adt = std::min({remain, dt_cfl, allowed, dt_cap});
        const bool arrives = adt >= remain - 1e-15;
        StepOptions so;
        so.cfl = opts.cfl;
        so.pressure = arrives;
        cur = step(cur, dir > 0 ? adt : -adt, nullptr, so);
        if (arrives) cur.t = t;  // absorb accumulated roundoff of the walk
      }
      require(c1_norm(cur.v) <= v1_limit, "Prop B.1 guard",
              "local solution gradient grew past the blow-up guard");
      if (cur.p.grid.n == 0) {
        cur.p = solve_pressure(cur.v, SymTensorField(seed.grid));
        cur.p.time_tag = cur.t;
      }
      acc.emplace_back(t, cur);
    }
  };
  sweep(-1);
  sweep(+1);
  std::sort(acc.begin(), acc.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  for (auto& e : acc) {
    out.slab.times.push_back(e.first);
    out.slab.slices.push_back(std::move(e.second));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gluing

GlueResult glue(const EulerReynoldsPair& pair, const BadSet& bad, const SchemeParams& params,
                const GlueOptions& opts) {
  const int q = pair.q;
  require(bad.level == q, "bad set", "bad set level does not match the pair");
  require(!pair.v.times.empty(), "slab mismatch", "empty velocity slab");
  const QScales scq = scales(params, q), scn = scales(params, q + 1);
  const double theta = scn.theta_q, tau1 = scn.tau_q;
  const Grid grid = pair.v.slices[0].grid;

  GlueResult res;
  res.plan = window_plan(bad, params, opts.slices_per_tau);
  res.report.structure_only = !check_chain(params, q).all_pass;
  res.report.residual_budget = 1e-3 * scn.delta_q;
  res.report.size_budget = 10.0 * tau1 / theta;

  // Mollification scale: the chain value, raised when the grid cannot
  // resolve it.
  res.report.ell_requested = scq.ell_q;
  double ell = scq.ell_q;
  if (ell < 2.0 * grid.spacing()) {
    ell = 2.5 * grid.spacing();
    res.report.ell_clipped = true;
  }
  res.report.ell = ell;

  // Output slabs start as copies; only slices inside the bad intervals are
  // replaced, so good-set slices remain bitwise identical to the input.
  res.pair.q = q;
  res.pair.mean_v = pair.mean_v;
  res.pair.v = pair.v;
  res.pair.p = pair.p;

  Cutoffs cuts;
  cuts.kind = Cutoffs::Kind::glue;
  cuts.ramp = 0.5 * tau1;

  std::vector<std::pair<double, double>> next_intervals;
  double max_stress = 0.0;

  for (const WindowGeometry& g : res.plan) {
    const auto m = ramp_centers_of(g, theta);
    const std::size_t first_window = cuts.plateau.size();
    for (double c : m) cuts.centers.push_back(c);
    for (std::size_t i = 0; i + 1 < m.size(); ++i) {
      cuts.plateau.emplace_back(m[i] + 0.5 * cuts.ramp, m[i + 1] - 0.5 * cuts.ramp);
      cuts.support.emplace_back(m[i] - 0.5 * cuts.ramp, m[i + 1] + 0.5 * cuts.ramp);
    }
    for (double c : m) next_intervals.emplace_back(c - 2.5 * tau1, c + 2.5 * tau1);

    // Exact local solutions from the mollified field at each node, recorded
    // on the stored times its window touches.
    std::vector<TimeSlab<EulerState>> nodes;
    for (std::size_t i = 0; i < g.t_nodes.size(); ++i) {
      const double ti = g.t_nodes[i];
      VectorField vseed = mollify(pair.v.at(ti), ell);
      vseed.time_tag = ti;
      const double lo = m[i] - 0.5 * cuts.ramp, hi = m[i + 1] + 0.5 * cuts.ramp;
      std::vector<double> rec;
      for (double t : pair.v.times)
        if (t > lo - 1e-13 && t < hi + 1e-13) rec.push_back(t);
      bool has_seed_time = false;
      for (double t : rec)
        if (std::abs(t - ti) <= 1e-13) has_seed_time = true;
      if (!has_seed_time) rec.push_back(ti);
      const double dt_cap = std::max((hi - lo) / std::max(1, opts.solve_min_steps), 1e-9 * tau1);
      MarchResult mr = march_node(vseed, ti, std::move(rec), opts, dt_cap);
      res.report.hops += mr.hops;
      ++res.report.local_solves;
      // Stability probe: the marched solution against the mollified input at
      // the farthest recorded time.
      const double tpr = mr.slab.times.back();
      VectorField dv = mr.slab.slices.back().v;
      axpy(dv, -1.0, mollify(pair.v.at(tpr), ell));
      res.report.vi_vs_vell = std::max(res.report.vi_vs_vell, norm0(dv));
      nodes.push_back(std::move(mr.slab));
    }

    // Blend the pair with the local solutions on every stored time of this
    // interval.  Window weights telescope from shared unit ramps, so plateau
    // slices are exact copies of one local solution.
    for (std::size_t vi = 0; vi < res.pair.v.times.size(); ++vi) {
      const double t = res.pair.v.times[vi];
      if (t < g.j_lo - 1e-13 || t > g.j_hi + 1e-13) continue;
      std::vector<std::pair<std::size_t, double>> active;
      for (std::size_t i = 0; i < g.t_nodes.size(); ++i) {
        const double w = ustep(t, m[i], cuts.ramp) - ustep(t, m[i + 1], cuts.ramp);
        if (w != 0.0) active.emplace_back(i, w);
      }
      if (active.empty()) continue;  // outside every window: keep the copy
      const double base =
          1.0 - (ustep(t, m.front(), cuts.ramp) - ustep(t, m.back(), cuts.ramp));
      VectorField vbar(grid, t);
      ScalarField pbar(grid, t);
      if (base != 0.0) {
        axpy(vbar, base, pair.v.slices[vi]);
        axpy(pbar, base, pair.p.slices[vi]);
      }
      for (const auto& [i, w] : active) {
        const EulerState& st = nodes[i].at(t);
        axpy(vbar, w, st.v);
        axpy(pbar, w, st.p);
      }
      res.pair.v.slices[vi] = std::move(vbar);
      res.pair.p.slices[vi] = std::move(pbar);
    }

    // Stress on the ramps: the rising window derivative times the
    // anti-divergence of the solution jump, plus the quadratic correction.
    for (std::size_t vi = 0; vi < res.pair.v.times.size(); ++vi) {
      const double t = res.pair.v.times[vi];
      int k = -1;
      for (std::size_t r = 0; r < m.size(); ++r)
        if (t > m[r] - 0.5 * cuts.ramp && t < m[r] + 0.5 * cuts.ramp) {
          k = static_cast<int>(r);
          break;
        }
      if (k < 0) continue;
      const double ur = ustep(t, m[static_cast<std::size_t>(k)], cuts.ramp);
      const double urd = ustep_d(t, m[static_cast<std::size_t>(k)], cuts.ramp);
      if (urd == 0.0 && ur * (1.0 - ur) == 0.0) continue;
      const int last = static_cast<int>(m.size()) - 1;
      VectorField diff(grid, t);
      double detad = urd;
      if (k == 0) {
        diff = nodes.front().at(t).v;
        axpy(diff, -1.0, pair.v.slices[vi]);
      } else if (k == last) {
        diff = nodes.back().at(t).v;
        axpy(diff, -1.0, pair.v.slices[vi]);
        detad = -urd;
      } else {
        diff = nodes[static_cast<std::size_t>(k)].at(t).v;
        axpy(diff, -1.0, nodes[static_cast<std::size_t>(k) - 1].at(t).v);
      }
      SymTensorField rbar(grid, t);
      if (detad != 0.0) axpy(rbar, detad, anti_divergence_potential(diff));
      if (ur * (1.0 - ur) != 0.0) axpy(rbar, -ur * (1.0 - ur), outer_product(diff, diff));
      const double rn = norm0(rbar);
      if (rn > 0.0) {
        max_stress = std::max(max_stress, rn);
        res.pair.R.times.push_back(t);
        res.pair.R.slices.push_back(std::move(rbar));
      }
    }

    nodes.clear();  // free the local solutions of this interval

    // Partition of unity across the covered stretch (windows of other
    // intervals are exactly zero here).
    const double cover_lo = m.front() + 0.5 * cuts.ramp;
    const double cover_hi = m.back() - 0.5 * cuts.ramp;
    for (double t : res.pair.v.times)
      if (t >= cover_lo && t <= cover_hi) {
        double s = 0.0;
        for (std::size_t i = first_window; i < cuts.plateau.size(); ++i)
          s += cuts.eval(static_cast<int>(i), t);
        res.report.partition_defect = std::max(res.report.partition_defect, std::abs(s - 1.0));
      }
  }
  res.report.window_count = static_cast<int>(cuts.plateau.size());
  require(res.report.partition_defect <= opts.partition_tol, "partition of unity",
          "window sum deviates from one by " + fmt(res.report.partition_defect));

  // Keep the stress slab sorted (interval processing appends in order, but
  // guard against any interleaving).
  {
    std::vector<std::size_t> ord(res.pair.R.times.size());
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](std::size_t x, std::size_t y) {
      return res.pair.R.times[x] < res.pair.R.times[y];
    });
    TimeSlab<SymTensorField> sorted;
    for (std::size_t i : ord) {
      sorted.times.push_back(res.pair.R.times[i]);
      sorted.slices.push_back(std::move(res.pair.R.slices[i]));
    }
    res.pair.R = std::move(sorted);
  }

  // Support leakage: every materialized stress slice must sit inside a
  // planned ramp interval (absent slices are exact zeros by representation).
  double leak = 0.0;
  for (std::size_t ri = 0; ri < res.pair.R.times.size(); ++ri) {
    const double t = res.pair.R.times[ri];
    bool inside = false;
    for (const WindowGeometry& g : res.plan)
      for (const auto& ramp : g.ramps)
        if (t > ramp.first && t < ramp.second) inside = true;
    if (!inside) leak = std::max(leak, norm0(res.pair.R.slices[ri]));
  }
  res.report.support_leak = leak;
  require(leak <= opts.support_tol * std::max(max_stress, 1.0), "support leakage",
          "stress escaped the ramp intervals by " + fmt(leak));

  // Good-set slices are exact copies by construction; measure it.
  for (std::size_t vi = 0; vi < res.pair.v.times.size(); ++vi) {
    if (bad.contains(res.pair.v.times[vi])) continue;
    for (int c = 0; c < 3; ++c)
      if (!std::equal(res.pair.v.slices[vi].c[c].begin(), res.pair.v.slices[vi].c[c].end(),
                      pair.v.slices[vi].c[c].begin())) {
        VectorField d = res.pair.v.slices[vi];
        axpy(d, -1.0, pair.v.slices[vi]);
        res.report.good_set_mismatch = std::max(res.report.good_set_mismatch, norm0(d));
      }
  }

  res.next_bad = make_badset(q + 1, bad.t_begin, bad.t_end, tau1, std::move(next_intervals));
  res.report.size_ratio =
      res.next_bad.measure() / std::max(bad.measure(), 1e-300);

  // Analytic window-derivative scales normalized by the next ramp width.
  {
    const double r = cuts.ramp;
    const double u2 = 0.5 * (1.0 - 1.0 / std::sqrt(5.0));
    res.report.cutoff_derivative_scale = {1.0, sstep_d(0.5) / r * tau1,
                                          std::abs(sstep_d2(u2)) / (r * r) * tau1 * tau1};
  }

  // Relaxed residual over the touched stretches, with the pressure re-solved
  // from the blended velocity and stress.
  double residual_max = 0.0;
  for (const Run& run : uniform_runs(res.pair.v.times)) {
    const double ta = res.pair.v.times[run.a], tb = res.pair.v.times[run.b];
    bool touches = false;
    for (const WindowGeometry& g : res.plan)
      if (tb > g.j_lo && ta < g.j_hi) touches = true;
    if (!touches) continue;
    std::vector<ScalarField> reproj;
    reproj.reserve(run.b - run.a + 1);
    for (std::size_t i = run.a; i <= run.b; ++i) {
      const SymTensorField* s = stress_at(res.pair, i);
      reproj.push_back(s ? solve_pressure(res.pair.v.slices[i], *s)
                         : solve_pressure(res.pair.v.slices[i], SymTensorField(grid)));
    }
    residual_max = std::max(residual_max, run_residual(res.pair, run, &reproj));
  }
  res.report.residual = residual_max;

  // Window values sampled on the touched slab times, for inspection.
  for (double t : res.pair.v.times)
    if (bad.contains(t)) cuts.sample_times.push_back(t);
  cuts.values.assign(cuts.plateau.size(), {});
  for (std::size_t i = 0; i < cuts.plateau.size(); ++i) {
    cuts.values[i].reserve(cuts.sample_times.size());
    for (double t : cuts.sample_times)
      cuts.values[i].push_back(cuts.eval(static_cast<int>(i), t));
  }
  res.cutoffs = std::move(cuts);
  return res;
}

// ---------------------------------------------------------------------------
// Perturbation

namespace {

// One retained pipe-flow mode (canonical half-space representative; the
// conjugate partner is accounted for by doubling the real part).
struct WaveEntry {
  int tube = 0;
  std::array<int, 3> ki{};  // integer wavevector
  V3 k;                     // the same as doubles
  double k2 = 0.0;
  V3 kxa;  // k x unit axis
  V3 axis;  // unit tube axis
  std::complex<double> psi;
};

// Largest |k| component over the retained band (phase tables are built up to
// this order).
int max_component(const std::vector<WaveEntry>& entries) {
  int km = 0;
  for (const WaveEntry& we : entries)
    km = std::max({km, std::abs(we.ki[0]), std::abs(we.ki[1]), std::abs(we.ki[2])});
  return km;
}

// e^{i s m} for m = 0..km from repeated multiplication; negative orders are
// conjugates.  One sincos per axis instead of one per retained mode.
void fill_phase_table(std::complex<double>* tab, int km, double s) {
  tab[0] = {1.0, 0.0};
  const std::complex<double> base = std::polar(1.0, s);
  for (int m = 1; m <= km; ++m) tab[m] = tab[m - 1] * base;
}

inline std::complex<double> table_phase(const std::complex<double>* tab, int k) {
  return k >= 0 ? tab[k] : std::conj(tab[-k]);
}

bool canonical_mode(const std::array<int, 3>& k) {
  return k[2] > 0 || (k[2] == 0 && (k[1] > 0 || (k[1] == 0 && k[0] > 0)));
}

std::vector<WaveEntry> collect_entries(const MikadoFamily& family, int kmax_w) {
  std::vector<WaveEntry> out;
  for (std::size_t j = 0; j < family.tubes.size(); ++j) {
    const MikadoTube& tube = family.tubes[j];
    for (const MikadoMode& mde : tube.modes) {
      if (std::abs(mde.k[0]) > kmax_w || std::abs(mde.k[1]) > kmax_w ||
          std::abs(mde.k[2]) > kmax_w)
        continue;
      if (!canonical_mode(mde.k)) continue;
      WaveEntry w;
      w.tube = static_cast<int>(j);
      w.ki = mde.k;
      w.k = {static_cast<double>(mde.k[0]), static_cast<double>(mde.k[1]),
             static_cast<double>(mde.k[2])};
      w.k2 = dot(w.k, w.k);
      w.axis = tube.unit;
      w.kxa = cross(w.k, tube.unit);
      w.psi = mde.psi_hat;
      out.push_back(w);
    }
  }
  return out;
}

// Stress linearly interpolated in time between stored slices (absent slices
// are exact zeros).
SymTensorField stress_lerp(const EulerReynoldsPair& pair, double t) {
  const Grid grid = pair.v.slices[0].grid;
  const auto& ts = pair.v.times;
  auto hi = std::lower_bound(ts.begin(), ts.end(), t);
  if (hi != ts.end() && std::abs(*hi - t) <= 1e-12) {
    const SymTensorField* s = stress_at(pair, static_cast<std::size_t>(hi - ts.begin()));
    SymTensorField out = s ? *s : SymTensorField(grid, t);
    out.time_tag = t;
    return out;
  }
  require(hi != ts.begin() && hi != ts.end(), "slab lookup",
          "stress interpolation outside the slab at t = " + fmt(t));
  const std::size_t ib = static_cast<std::size_t>(hi - ts.begin()), ia = ib - 1;
  const double w = (t - ts[ia]) / (ts[ib] - ts[ia]);
  SymTensorField out(grid, t);
  if (const SymTensorField* s = stress_at(pair, ia)) axpy(out, 1.0 - w, *s);
  if (const SymTensorField* s = stress_at(pair, ib)) axpy(out, w, *s);
  return out;
}

struct KernelStats {
  double dev = 0.0;        // max Frobenius deviation of the flow gradient from Id
  double dist = 0.0;       // max Frobenius distance of the conjugated stress from Id
  bool ball_exit = false;  // conjugated stress left the certified ball somewhere
  bool gamma_fail = false;
  double defect = 0.0;     // quadratic-identity defect (when requested)
};

// Shared data of one perturbation window's pointwise assembly.
struct WaveKernel {
  const MikadoFamily* family = nullptr;
  const std::vector<WaveEntry>* entries = nullptr;
  double delta = 0.0;
  double lambda_int = 0.0;
  double guard_radius = 0.0;

  // Evaluates, at one time, the curl potential
  //   G = (grad Phi)^T 2 Re sum_e (i k x b_e) e^{i theta_e} / (lambda |k|^2)
  // and optionally the principal field
  //   -(grad Phi)^{-1} 2 Re sum_e b_e e^{i theta_e}
  // plus the pointwise quadratic-identity defect of the squared amplitudes.
  // Faults are signalled through the stats; nothing throws inside the
  // parallel region.
  KernelStats assemble(const VectorField& disp, const SymTensorField* stress, double eta,
                       VectorField* potential, VectorField* principal,
                       bool want_defect) const {
    const Grid grid = disp.grid;
    const FieldT<9> grad = gradient(disp);
    const double sq_delta = std::sqrt(delta);
    const auto& gm = family->gamma_map;
    const std::size_t ntubes = family->tubes.size();
    const double phase_scale = kTwoPi * lambda_int;
    const std::size_t npts = grid.size();
    const int n = grid.n;

    const int km = max_component(*entries);
    std::vector<KernelStats> stats(static_cast<std::size_t>(worker_count()) + 2);
    parallel_for_indexed(npts, [&](std::size_t lo, std::size_t hi, std::size_t chunk) {
      KernelStats& st = stats[chunk % stats.size()];
      std::vector<double> gam(ntubes, 0.0);
      std::vector<std::complex<double>> ph0(km + 1), ph1(km + 1), ph2(km + 1);
      for (std::size_t p = lo; p < hi; ++p) {
        const int i = static_cast<int>(p / (static_cast<std::size_t>(n) * n));
        const int j = static_cast<int>((p / static_cast<std::size_t>(n)) % n);
        const int l = static_cast<int>(p % static_cast<std::size_t>(n));
        const Mat3 e = rows_of(grad, p, true);
        {
          double ssum = 0.0;
          for (std::size_t r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
              const double d = e[r][c] - (static_cast<int>(r) == c ? 1.0 : 0.0);
              ssum += d * d;
            }
          st.dev = std::max(st.dev, std::sqrt(ssum));
        }
        Sym3 rbar{};
        if (stress) rbar = tensor_at(*stress, p);
        Sym3 arg{};
        for (int c = 0; c < 6; ++c) arg.c[c] = -rbar.c[c] / delta;
        arg.c[Sym3::I00] += 1.0;
        arg.c[Sym3::I11] += 1.0;
        arg.c[Sym3::I22] += 1.0;
        const Sym3 rt = congruence(e, arg);
        const double dist = frob_dist_to_id(rt);
        st.dist = std::max(st.dist, dist);
        if (dist > guard_radius) {
          st.ball_exit = true;
          if (potential)
            for (int c = 0; c < 3; ++c) potential->c[c][p] = 0.0;
          if (principal)
            for (int c = 0; c < 3; ++c) principal->c[c][p] = 0.0;
          continue;
        }

        const auto v6 = sym_to_vec(rt);
        bool gam_ok = true;
        for (std::size_t tj = 0; tj < ntubes; ++tj) {
          double cj = 0.0;
          for (std::size_t r = 0; r < 6; ++r) cj += gm[tj][r] * v6[r];
          if (cj <= 0.0) {
            gam_ok = false;
            break;
          }
          gam[tj] = std::sqrt(cj);
        }
        if (!gam_ok) {
          st.gamma_fail = true;
          if (potential)
            for (int c = 0; c < 3; ++c) potential->c[c][p] = 0.0;
          if (principal)
            for (int c = 0; c < 3; ++c) principal->c[c][p] = 0.0;
          continue;
        }

        const V3 x = grid.point(i, j, l);
        const V3 xd = {x.x + disp.c[0][p], x.y + disp.c[1][p], x.z + disp.c[2][p]};
        fill_phase_table(ph0.data(), km, phase_scale * xd.x);
        fill_phase_table(ph1.data(), km, phase_scale * xd.y);
        fill_phase_table(ph2.data(), km, phase_scale * xd.z);
        V3 acc{};   // Re sum (i psi) Gamma eta sqrt(delta) (k x A) e^{i theta} / (lambda |k|^2)
        V3 wacc{};  // Re sum psi Gamma eta sqrt(delta) A e^{i theta}
        for (const WaveEntry& we : *entries) {
          const std::complex<double> ph = table_phase(ph0.data(), we.ki[0]) *
                                          table_phase(ph1.data(), we.ki[1]) *
                                          table_phase(ph2.data(), we.ki[2]);
          const double cth = ph.real(), sth = ph.imag();
          const double gmul = gam[static_cast<std::size_t>(we.tube)] * eta * sq_delta;
          const double den = phase_scale * we.k2;
          const double a_re = -we.psi.imag() * gmul / den;
          const double a_im = we.psi.real() * gmul / den;
          const double s_re = a_re * cth - a_im * sth;
          acc = acc + s_re * we.kxa;
          if (principal) {
            const double b_re = we.psi.real() * gmul, b_im = we.psi.imag() * gmul;
            wacc = wacc + (b_re * cth - b_im * sth) * we.axis;
          }
        }
        if (potential) {
          const V3 a2 = 2.0 * acc;
          potential->c[0][p] = e[0][0] * a2.x + e[1][0] * a2.y + e[2][0] * a2.z;
          potential->c[1][p] = e[0][1] * a2.x + e[1][1] * a2.y + e[2][1] * a2.z;
          potential->c[2][p] = e[0][2] * a2.x + e[1][2] * a2.y + e[2][2] * a2.z;
        }
        if (principal || want_defect) {
          const Mat3 einv = mat_inverse(e);
          if (principal) {
            const V3 w2 = 2.0 * wacc;
            principal->c[0][p] = -dot(einv[0], w2);
            principal->c[1][p] = -dot(einv[1], w2);
            principal->c[2][p] = -dot(einv[2], w2);
          }
          if (want_defect) {
            // The squared amplitudes must rebuild the target pointwise:
            // delta * EInv (sum_j gam_j^2 <psi_j^2> A_j A_j^T) EInv^T
            // against delta Id - rbar, weighted by eta^2.
            Sym3 smix{};
            for (std::size_t tj = 0; tj < ntubes; ++tj) {
              const double cj = gam[tj] * gam[tj] * family->tubes[tj].mean_psi2;
              const V3 a = family->tubes[tj].unit;
              smix.c[Sym3::I00] += cj * a.x * a.x;
              smix.c[Sym3::I11] += cj * a.y * a.y;
              smix.c[Sym3::I22] += cj * a.z * a.z;
              smix.c[Sym3::I01] += cj * a.x * a.y;
              smix.c[Sym3::I02] += cj * a.x * a.z;
              smix.c[Sym3::I12] += cj * a.y * a.z;
            }
            const Sym3 back = congruence(einv, smix);
            Sym3 d{};
            for (int c = 0; c < 6; ++c) d.c[c] = delta * back.c[c] + rbar.c[c];
            d.c[Sym3::I00] -= delta;
            d.c[Sym3::I11] -= delta;
            d.c[Sym3::I22] -= delta;
            st.defect = std::max(st.defect, eta * eta * frobenius(d));
          }
        }
      }
    });
    KernelStats merged;
    for (const KernelStats& s : stats) {
      merged.dev = std::max(merged.dev, s.dev);
      merged.dist = std::max(merged.dist, s.dist);
      merged.ball_exit = merged.ball_exit || s.ball_exit;
      merged.gamma_fail = merged.gamma_fail || s.gamma_fail;
      merged.defect = std::max(merged.defect, s.defect);
    }
    return merged;
  }

  // Material derivative of the principal field at a time where the window
  // derivative vanishes: the amplitude evolves through the conjugated stress
  // and the flow gradient, the phase is exactly transported.
  VectorField material_principal(const VectorField& disp, const SymTensorField& stress,
                                 const SymTensorField& dstress, const FieldT<9>& gradv,
                                 double eta) const {
    const Grid grid = disp.grid;
    VectorField out(grid, disp.time_tag);
    const FieldT<9> grad = gradient(disp);
    const double sq_delta = std::sqrt(delta);
    const auto& gm = family->gamma_map;
    const std::size_t ntubes = family->tubes.size();
    const double phase_scale = kTwoPi * lambda_int;
    const int n = grid.n;

    const int km = max_component(*entries);
    parallel_for(grid.size(), [&](std::size_t lo, std::size_t hi) {
      std::vector<double> gam(ntubes, 0.0), gdot(ntubes, 0.0);
      std::vector<std::complex<double>> ph0(km + 1), ph1(km + 1), ph2(km + 1);
      for (std::size_t p = lo; p < hi; ++p) {
        const int i = static_cast<int>(p / (static_cast<std::size_t>(n) * n));
        const int j = static_cast<int>((p / static_cast<std::size_t>(n)) % n);
        const int l = static_cast<int>(p % static_cast<std::size_t>(n));
        const Mat3 e = rows_of(grad, p, true);
        const Mat3 einv = mat_inverse(e);
        const Mat3 gv = rows_of(gradv, p, false);
        const Sym3 rbar = tensor_at(stress, p);
        Sym3 arg{};
        for (int c = 0; c < 6; ++c) arg.c[c] = -rbar.c[c] / delta;
        arg.c[Sym3::I00] += 1.0;
        arg.c[Sym3::I11] += 1.0;
        arg.c[Sym3::I22] += 1.0;
        const Sym3 rt = congruence(e, arg);
        if (frob_dist_to_id(rt) > guard_radius) {
          for (int c = 0; c < 3; ++c) out.c[c][p] = 0.0;
          continue;
        }
        // Along the flow d/dt of the conjugated stress:
        //   [M + M^T - E dR E^T] / delta  with  M = -(E grad v) S E^T,
        //   S = delta Id - rbar.
        const Mat3 a = mat_mul(e, gv);  // E grad v
        const Mat3 s_mat = mat_of_sym(delta * arg);
        const Mat3 m1 = mat_mul(a, mat_mul(s_mat, mat_transpose(e)));
        Sym3 drt{};
        drt.c[Sym3::I00] = -2.0 * m1[0][0] / delta;
        drt.c[Sym3::I11] = -2.0 * m1[1][1] / delta;
        drt.c[Sym3::I22] = -2.0 * m1[2][2] / delta;
        drt.c[Sym3::I01] = -(m1[0][1] + m1[1][0]) / delta;
        drt.c[Sym3::I02] = -(m1[0][2] + m1[2][0]) / delta;
        drt.c[Sym3::I12] = -(m1[1][2] + m1[2][1]) / delta;
        const Sym3 edre = congruence(e, tensor_at(dstress, p));
        for (int c = 0; c < 6; ++c) drt.c[c] -= edre.c[c] / delta;

        const auto v6 = sym_to_vec(rt);
        const auto d6 = sym_to_vec(drt);
        bool ok = true;
        for (std::size_t tj = 0; tj < ntubes; ++tj) {
          double cj = 0.0, cdj = 0.0;
          for (std::size_t r = 0; r < 6; ++r) {
            cj += gm[tj][r] * v6[r];
            cdj += gm[tj][r] * d6[r];
          }
          if (cj <= 0.0) {
            ok = false;
            break;
          }
          gam[tj] = std::sqrt(cj);
          gdot[tj] = cdj / (2.0 * gam[tj]);
        }
        if (!ok) {
          for (int c = 0; c < 3; ++c) out.c[c][p] = 0.0;
          continue;
        }

        const V3 x = grid.point(i, j, l);
        const V3 xd = {x.x + disp.c[0][p], x.y + disp.c[1][p], x.z + disp.c[2][p]};
        fill_phase_table(ph0.data(), km, phase_scale * xd.x);
        fill_phase_table(ph1.data(), km, phase_scale * xd.y);
        fill_phase_table(ph2.data(), km, phase_scale * xd.z);
        V3 acc{};
        for (const WaveEntry& we : *entries) {
          const std::complex<double> ph = table_phase(ph0.data(), we.ki[0]) *
                                          table_phase(ph1.data(), we.ki[1]) *
                                          table_phase(ph2.data(), we.ki[2]);
          const double cth = ph.real(), sth = ph.imag();
          const double re_psi = we.psi.real() * cth - we.psi.imag() * sth;
          const V3 u1 = mat_apply(einv, we.axis);
          const V3 u2 = mat_apply(gv, u1);
          const double gdt = gdot[static_cast<std::size_t>(we.tube)];
          const double gma = gam[static_cast<std::size_t>(we.tube)];
          acc = acc + (2.0 * re_psi) * (gdt * u1 + gma * u2);
        }
        out.c[0][p] = -eta * sq_delta * acc.x;
        out.c[1][p] = -eta * sq_delta * acc.y;
        out.c[2][p] = -eta * sq_delta * acc.z;
      }
    });
    return out;
  }
};

}  // namespace

PerturbResult perturb(const EulerReynoldsPair& glued, const BadSet& next_bad,
                      const SchemeParams& params, const MikadoFamily& family,
                      const PerturbOptions& opts) {
  const int level = glued.q + 1;
  require(next_bad.level == level, "bad set", "bad set level does not match the pair");
  require(!glued.v.times.empty(), "slab mismatch", "empty velocity slab");
  const QScales scn = scales(params, level), scq = scales(params, glued.q);
  require(std::abs(next_bad.tau - scn.tau_q) <= 1e-9 * scn.tau_q, "bad set",
          "bad set ramp width does not match the level scales");
  const Grid grid = glued.v.slices[0].grid;
  const double tau1 = scn.tau_q, delta = scn.delta_q;
  const double lambda = scn.lambda_q;
  const double lambda_int = static_cast<double>(scn.lambda_int);

  PerturbResult res;
  res.report.structure_only = !check_chain(params, glued.q).all_pass;
  res.report.lambda = lambda;
  res.report.delta = delta;
  res.report.w_bound = 0.5 * params.M * std::sqrt(delta);
  res.report.cancellation_budget = 1e-3 * delta;
  res.report.R_bound = std::sqrt(delta * scq.delta_q) *
                       std::pow(scq.lambda_q, 1.0 + params.gamma) /
                       std::pow(lambda, 1.0 - 5.0 * params.alpha);

  // Retained band under the alias limit: fast modes sit at lambda_int * k and
  // are spread by the flow composition (the gradient guard bounds the
  // deviation by 1/2), so 1.5x headroom must fit under the grid Nyquist.
  const double headroom = 1.5;
  int kmax_w = opts.kmax_w;
  if (kmax_w <= 0) {
    kmax_w = static_cast<int>(std::floor((grid.n / 2 - 1) / (lambda_int * headroom)));
    kmax_w = std::min(kmax_w, family.kmax);
  }
  require(kmax_w >= 1 && lambda_int * kmax_w * headroom <= grid.n / 2.0, "mode band",
          "modulated band does not fit under the alias limit (frequency " + fmt(lambda_int) +
              ", band " + std::to_string(kmax_w) + ", grid " + std::to_string(grid.n) + ")");
  res.report.kmax_w = kmax_w;

  const auto entries = collect_entries(family, kmax_w);
  require(!entries.empty(), "mode band", "no pipe-flow modes inside the band");
  {
    const GeometricConstants gc = geometric_constants(family, kmax_w);
    res.report.wo_bound = gc.m / 32.0 * std::sqrt(delta);
  }

  WaveKernel kern;
  kern.family = &family;
  kern.entries = &entries;
  kern.delta = delta;
  kern.lambda_int = lambda_int;
  kern.guard_radius = std::min(0.5, family.domain_radius);

  Cutoffs cuts;
  cuts.kind = Cutoffs::Kind::perturb;
  cuts.ramp = tau1;
  for (const auto& iv : next_bad.intervals) {
    const double c = 0.5 * (iv.first + iv.second);
    cuts.centers.push_back(c);
    cuts.plateau.emplace_back(c - 0.5 * tau1, c + 0.5 * tau1);
    cuts.support.emplace_back(c - 1.5 * tau1, c + 1.5 * tau1);
  }
  res.report.windows = static_cast<int>(cuts.plateau.size());

  res.pair.q = level;
  res.pair.mean_v = glued.mean_v;
  res.pair.v = glued.v;
  res.pair.p = glued.p;

  std::vector<char> modified(glued.v.times.size(), 0);
  double best_order_num = -1.0;

  for (std::size_t wi = 0; wi < cuts.plateau.size(); ++wi) {
    const double s_i = cuts.centers[wi];
    const double lo = cuts.support[wi].first, hi = cuts.support[wi].second;

    std::vector<std::size_t> eval_idx;
    for (std::size_t vi = 0; vi < glued.v.times.size(); ++vi)
      if (cuts.eval(static_cast<int>(wi), glued.v.times[vi]) > 0.0) eval_idx.push_back(vi);
    if (eval_idx.empty()) continue;

    // Velocity slab feeding the characteristics of this window.
    TimeSlab<EulerState> slab;
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t vi = 0; vi < glued.v.times.size(); ++vi) {
      const double t = glued.v.times[vi];
      if (t < lo - 0.5 * tau1 || t > hi + 0.5 * tau1) continue;
      if (!slab.times.empty()) min_gap = std::min(min_gap, t - slab.times.back());
      slab.times.push_back(t);
      slab.slices.push_back(EulerState{glued.v.slices[vi], t, glued.p.slices[vi]});
    }
    require(slab.times.size() >= 2, "slab lookup", "window has too few stored slices");

    const double v1n = c1_norm(glued.v.at(s_i));
    double h = opts.fd_h_scale / (lambda * (1.0 + v1n));
    h = std::min(h, 0.2 * min_gap);

    FlowMarcher left(slab, s_i), right(slab, s_i);
    auto disp_at = [&](double t) -> VectorField {
      FlowMarcher& mch = (t < s_i) ? left : right;
      if (t != mch.current_time()) mch.advance_to(t);
      VectorField d = mch.snapshot().displacement;
      d.time_tag = t;
      return d;
    };

    auto assemble_w = [&](double t, const VectorField& disp, VectorField* principal,
                          bool want_defect, double* defect_out) -> VectorField {
      const double eta = cuts.eval(static_cast<int>(wi), t);
      if (eta == 0.0) {
        if (principal) *principal = VectorField(grid, t);
        return VectorField(grid, t);
      }
      VectorField pot(grid, t);
      const SymTensorField stress = stress_lerp(glued, t);
      const KernelStats st = kern.assemble(disp, &stress, eta, &pot, principal, want_defect);
      res.report.grad_phi_dev = std::max(res.report.grad_phi_dev, st.dev);
      res.report.rtilde_dist = std::max(res.report.rtilde_dist, st.dist);
      if (st.dev > 0.5)
        fail("Lemma 4.3 guard: ‖∇Φ − Id‖₀ > 1/2",
             "flow gradient deviation " + fmt(st.dev) + " at t = " + fmt(t) + " (window " +
                 std::to_string(wi) + "); signal a too small for this horizon");
      if (st.ball_exit)
        fail("Lemma 4.3 guard: R̃ ∉ B_{1/2}(Id)",
             "conjugated stress distance " + fmt(st.dist) + " exceeds the certified radius " +
                 fmt(kern.guard_radius) + " at t = " + fmt(t) + "; signal a too small");
      if (st.gamma_fail)
        fail("Γ positivity fails on 𝒩",
             "squared amplitude went nonpositive inside the certified ball at t = " + fmt(t));
      if (defect_out) *defect_out = std::max(*defect_out, st.defect);
      VectorField w = curl(pot);
      scale(w, -1.0);
      w.time_tag = t;
      return w;
    };

    // Processing order keeps both characteristic marchers monotone away from
    // the base: the center slice (with its halved stencils) first, then the
    // left half descending, then the right half ascending.
    std::vector<std::size_t> order;
    std::size_t center_vi = glued.v.times.size();
    for (std::size_t vi : eval_idx)
      if (std::abs(glued.v.times[vi] - s_i) <= 1e-12) center_vi = vi;
    require(center_vi < glued.v.times.size(), "slab lookup",
            "window midpoint is not a stored slice");
    order.push_back(center_vi);
    for (auto it = eval_idx.rbegin(); it != eval_idx.rend(); ++it)
      if (glued.v.times[*it] < s_i - 1e-12) order.push_back(*it);
    for (std::size_t vi : eval_idx)
      if (glued.v.times[vi] > s_i + 1e-12) order.push_back(vi);

    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const std::size_t vi = order[oi];
      const double t = glued.v.times[vi];
      const bool is_center = (vi == center_vi);
      const VectorField& vbar = glued.v.slices[vi];

      VectorField disp_m, disp_0, disp_p;
      VectorField w_m, w_0, w_p, wo_m, wo_0, wo_p;
      VectorField w_m2, w_p2, w_m4, w_p4;
      double defect = 0.0;

      if (is_center) {
        disp_0 = disp_at(t);
        if (opts.richardson) {
          VectorField d4 = disp_at(t + h / 4);
          w_p4 = assemble_w(t + h / 4, d4, nullptr, false, nullptr);
          VectorField d2 = disp_at(t + h / 2);
          w_p2 = assemble_w(t + h / 2, d2, nullptr, false, nullptr);
        }
        disp_p = disp_at(t + h);
        if (opts.richardson) {
          VectorField d4 = disp_at(t - h / 4);
          w_m4 = assemble_w(t - h / 4, d4, nullptr, false, nullptr);
          VectorField d2 = disp_at(t - h / 2);
          w_m2 = assemble_w(t - h / 2, d2, nullptr, false, nullptr);
        }
        disp_m = disp_at(t - h);
        wo_0 = VectorField(grid, t);
        wo_m = VectorField(grid, t - h);
        wo_p = VectorField(grid, t + h);
        w_0 = assemble_w(t, disp_0, &wo_0, true, &defect);
        w_m = assemble_w(t - h, disp_m, opts.analytic_check ? &wo_m : nullptr, false, nullptr);
        w_p = assemble_w(t + h, disp_p, opts.analytic_check ? &wo_p : nullptr, false, nullptr);
      } else {
        const bool leftside = t < s_i;
        if (leftside) {
          disp_p = disp_at(t + h);
          disp_0 = disp_at(t);
          disp_m = disp_at(t - h);
        } else {
          disp_m = disp_at(t - h);
          disp_0 = disp_at(t);
          disp_p = disp_at(t + h);
        }
        w_m = assemble_w(t - h, disp_m, nullptr, false, nullptr);
        w_0 = assemble_w(t, disp_0, nullptr, false, nullptr);
        w_p = assemble_w(t + h, disp_p, nullptr, false, nullptr);
      }

      res.report.div_w = std::max(res.report.div_w, norm0(divergence(w_0)));
      const double wn0 = norm0(w_0);
      res.report.w_norm0 = std::max(res.report.w_norm0, wn0);
      res.report.w_norm1 = std::max(res.report.w_norm1, wn0 + derivative_sup(w_0, 1));

      // Remainder stress: transport, advective and oscillation parts back
      // through the anti-divergence.
      VectorField dtw = w_p;
      axpy(dtw, -1.0, w_m);
      scale(dtw, 1.0 / (2.0 * h));
      VectorField transp = dtw;
      {
        VectorField adv = advect(vbar, w_0);
        axpy(transp, 1.0, adv);
      }
      subtract_mean(transp);
      VectorField nash = advect(w_0, vbar);
      subtract_mean(nash);
      SymTensorField ww = outer_product(w_0, w_0);
      if (const SymTensorField* s = stress_at(glued, vi)) axpy(ww, 1.0, *s);
      VectorField oscv = divergence(ww);

      SymTensorField rn = inverse_divergence(nash);
      SymTensorField rt = inverse_divergence(transp);
      SymTensorField ro = inverse_divergence(oscv);
      res.report.nash_norm = std::max(res.report.nash_norm, norm0(rn));
      res.report.transp_norm = std::max(res.report.transp_norm, norm0(rt));
      res.report.osc_norm = std::max(res.report.osc_norm, norm0(ro));
      SymTensorField rnew(grid, t);
      axpy(rnew, 1.0, rn);
      axpy(rnew, 1.0, rt);
      axpy(rnew, 1.0, ro);
      res.report.R_norm = std::max(res.report.R_norm, norm0(rnew));

      VectorField vnew = vbar;
      axpy(vnew, 1.0, w_0);
      vnew.time_tag = t;
      res.pair.v.slices[vi] = std::move(vnew);
      res.pair.R.times.push_back(t);
      res.pair.R.slices.push_back(std::move(rnew));
      modified[vi] = 1;

      const V3 mdrift = mean_v3(res.pair.v.slices[vi]) - glued.mean_v;
      res.report.mean_drift = std::max(res.report.mean_drift, norm(mdrift));

      if (!is_center) continue;

      // Center diagnostics: principal amplitude, quadratic identity, phase
      // transport, stencil order, and the material-derivative cross-check.
      res.report.cancellation = std::max(res.report.cancellation, defect);
      const double won = norm0(wo_0);
      res.report.wo_norm0 = std::max(res.report.wo_norm0, won);
      VectorField wc = w_0;
      axpy(wc, -1.0, wo_0);
      res.report.wc_norm0 = std::max(res.report.wc_norm0, norm0(wc));

      {
        VectorField drift = disp_p;
        axpy(drift, -1.0, disp_m);
        scale(drift, 1.0 / (2.0 * h));
        VectorField adv = advect_components<3>(vbar, disp_0);
        axpy(drift, 1.0, adv);
        axpy(drift, 1.0, vbar);
        res.report.phase_drift =
            std::max(res.report.phase_drift, norm0(drift) / (1.0 + norm0(vbar)));
      }

      if (opts.richardson) {
        VectorField fd_h = w_p;
        axpy(fd_h, -1.0, w_m);
        scale(fd_h, 1.0 / (2.0 * h));
        VectorField fd_h2 = w_p2;
        axpy(fd_h2, -1.0, w_m2);
        scale(fd_h2, 1.0 / h);
        VectorField fd_h4 = w_p4;
        axpy(fd_h4, -1.0, w_m4);
        scale(fd_h4, 2.0 / h);
        VectorField d1 = fd_h;
        axpy(d1, -1.0, fd_h2);
        VectorField d2 = fd_h2;
        axpy(d2, -1.0, fd_h4);
        const double n1 = norm0(d1), n2 = norm0(d2);
        if (n1 > best_order_num && n2 > 1e-14 * std::max(1.0, norm0(fd_h))) {
          best_order_num = n1;
          res.report.fd_order = std::log2(n1 / n2);
        }
      }

      if (opts.analytic_check) {
        const SymTensorField stress0 = stress_lerp(glued, t);
        // Stress time derivative from the neighbouring slices plus advection.
        SymTensorField dstress(grid, t);
        if (vi > 0 && vi + 1 < glued.v.times.size()) {
          const double ta = glued.v.times[vi - 1], tb = glued.v.times[vi + 1];
          SymTensorField sa = stress_lerp(glued, ta);
          SymTensorField sb = stress_lerp(glued, tb);
          axpy(dstress, 1.0 / (tb - ta), sb);
          axpy(dstress, -1.0 / (tb - ta), sa);
        }
        {
          SymTensorField adv6 = advect_components<6>(vbar, stress0);
          axpy(dstress, 1.0, adv6);
        }
        const FieldT<9> gradv = gradient(vbar);
        VectorField analytic = kern.material_principal(disp_0, stress0, dstress, gradv, 1.0);
        VectorField fd = wo_p;
        axpy(fd, -1.0, wo_m);
        scale(fd, 1.0 / (2.0 * h));
        VectorField adv = advect_components<3>(vbar, wo_0);
        axpy(fd, 1.0, adv);
        axpy(fd, -1.0, analytic);
        res.report.analytic_fd_gap =
            std::max(res.report.analytic_fd_gap, norm0(fd) / (1.0 + norm0(analytic)));
      }
    }
  }

  // Identities that hold by construction, measured defensively.
  require(res.report.div_w <= opts.div_tol, "mode band",
          "curl-form field has divergence " + fmt(res.report.div_w));
  require(res.report.mean_drift <= opts.mean_tol, "means differ",
          "perturbation moved the velocity mean by " + fmt(res.report.mean_drift));

  // Untouched slices must be bitwise copies; measure any leak.
  for (std::size_t vi = 0; vi < glued.v.times.size(); ++vi) {
    if (modified[vi]) continue;
    for (int c = 0; c < 3; ++c)
      if (!std::equal(res.pair.v.slices[vi].c[c].begin(), res.pair.v.slices[vi].c[c].end(),
                      glued.v.slices[vi].c[c].begin())) {
        VectorField d = res.pair.v.slices[vi];
        axpy(d, -1.0, glued.v.slices[vi]);
        res.report.support_leak = std::max(res.report.support_leak, norm0(d));
      }
  }

  // Sort the stress slab by time (windows were processed center-first).
  {
    std::vector<std::size_t> ord(res.pair.R.times.size());
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](std::size_t x, std::size_t y) {
      return res.pair.R.times[x] < res.pair.R.times[y];
    });
    TimeSlab<SymTensorField> sorted;
    for (std::size_t i : ord) {
      sorted.times.push_back(res.pair.R.times[i]);
      sorted.slices.push_back(std::move(res.pair.R.slices[i]));
    }
    res.pair.R = std::move(sorted);
  }

  res.cutoffs = std::move(cuts);
  return res;
}

// ---------------------------------------------------------------------------
// Inductive verification

namespace {

PropertyRecord prop(std::string name, bool pass, double measured, std::string detail) {
  PropertyRecord p;
  p.name = std::move(name);
  p.pass = pass;
  p.measured = measured;
  p.detail = std::move(detail);
  return p;
}

CheckRecord estimate(std::string name, double lhs, double rhs) {
  CheckRecord c;
  c.name = std::move(name);
  c.lhs = lhs;
  c.rhs = rhs;
  c.slack = rhs - lhs;
  c.pass = lhs <= rhs;
  c.strict = false;
  return c;
}

}  // namespace

const PropertyRecord* InductiveReport::property(const std::string& name) const {
  for (const auto& p : properties)
    if (p.name == name) return &p;
  return nullptr;
}

InductiveReport verify_inductive(const EulerReynoldsPair& pair, const BadSet& bad,
                                 const SchemeParams& params,
                                 const EulerReynoldsPair* predecessor,
                                 const BadSet* prev_bad) {
  InductiveReport rep;
  const int q = pair.q;
  rep.q = q;
  rep.structure_only = !check_chain(params, std::max(0, q - 1)).all_pass;
  const QScales scq = scales(params, q);
  const QScales scn = scales(params, q + 1);

  // Magnitude estimates.
  double max_R = 0.0;
  for (const auto& s : pair.R.slices) max_R = std::max(max_R, norm0(s));
  rep.estimates.push_back(
      estimate("stress amplitude", max_R,
               scn.delta_q * std::pow(scq.lambda_q, -(params.gamma + 3.0 * params.alpha))));

  double max_c0 = 0.0, max_c1 = 0.0;
  for (const auto& s : pair.v.slices) {
    const double n0 = norm0(s);
    max_c0 = std::max(max_c0, n0);
    max_c1 = std::max(max_c1, n0 + derivative_sup(s, 1));
  }
  rep.estimates.push_back(
      estimate("velocity gradient", max_c1, params.M * std::sqrt(scq.delta_q) * scq.lambda_q));
  rep.estimates.push_back(estimate("velocity amplitude", max_c0, 1.0 - std::sqrt(scq.delta_q)));

  if (predecessor && !predecessor->v.times.empty()) {
    double inc = 0.0;
    for (std::size_t i = 0; i < pair.v.times.size(); ++i) {
      const double t = pair.v.times[i];
      for (std::size_t j = 0; j < predecessor->v.times.size(); ++j) {
        if (std::abs(predecessor->v.times[j] - t) > 1e-12) continue;
        VectorField d = pair.v.slices[i];
        axpy(d, -1.0, predecessor->v.slices[j]);
        inc = std::max(inc, norm0(d) + derivative_sup(d, 1) / scq.lambda_q);
        break;
      }
    }
    rep.estimates.push_back(
        estimate("velocity increment", inc, params.M * std::sqrt(scq.delta_q)));
  }

  // (i) the seed bad set stays inside the middle third of the horizon.
  if (q == 0) {
    const double span = bad.t_end - bad.t_begin;
    const double lo = bad.t_begin + span / 3.0, hi = bad.t_end - span / 3.0;
    double dev = 0.0;
    for (const auto& iv : bad.intervals) dev = std::max({dev, lo - iv.first, iv.second - hi});
    dev = std::max(dev, 0.0);
    rep.properties.push_back(prop("seed bad set inside middle third", dev <= 1e-9 * span, dev,
                                  "max excursion beyond the middle third"));
  } else {
    rep.properties.push_back(prop("seed bad set inside middle third", true, 0.0,
                                  "not applicable at level " + std::to_string(q)));
  }

  // (ii) good sets only grow.
  if (prev_bad)
    rep.properties.push_back(prop("good sets nested", good_set_nested(*prev_bad, bad), 0.0,
                                  "every current interval sits inside a predecessor interval"));
  else
    rep.properties.push_back(prop("good sets nested", true, 0.0, "no predecessor supplied"));

  // (iii) the bad set is a disjoint union of five-tau intervals.
  {
    double dev = 0.0;
    bool ok = true;
    double prev_hi = bad.t_begin - 1e-9;
    for (const auto& iv : bad.intervals) {
      dev = std::max(dev, std::abs((iv.second - iv.first) - 5.0 * bad.tau) / (5.0 * bad.tau));
      if (iv.first < prev_hi - 1e-12 * (bad.t_end - bad.t_begin)) ok = false;
      prev_hi = iv.second;
    }
    ok = ok && dev <= 1e-9;
    rep.properties.push_back(
        prop("bad set built from disjoint five-tau intervals", ok, dev,
             std::to_string(bad.intervals.size()) + " intervals, max relative length error"));
  }

  // (iv) measure shrink rate against the current tau/theta ratio.
  if (prev_bad) {
    const double ratio = bad.measure() / std::max(prev_bad->measure(), 1e-300);
    const double bound = 10.0 * scq.tau_q / scq.theta_q;
    rep.properties.push_back(
        prop("bad set measure shrink", ratio <= bound, ratio, "bound " + fmt(bound)));
  } else {
    rep.properties.push_back(prop("bad set measure shrink", true, 0.0, "no predecessor"));
  }

  // (v) slices on the predecessor's good set are reused bitwise.
  if (predecessor && prev_bad) {
    double mism = 0.0;
    int compared = 0;
    for (std::size_t i = 0; i < pair.v.times.size(); ++i) {
      const double t = pair.v.times[i];
      if (prev_bad->contains(t)) continue;
      for (std::size_t j = 0; j < predecessor->v.times.size(); ++j) {
        if (std::abs(predecessor->v.times[j] - t) > 1e-12) continue;
        ++compared;
        for (int c = 0; c < 3; ++c)
          if (!std::equal(pair.v.slices[i].c[c].begin(), pair.v.slices[i].c[c].end(),
                          predecessor->v.slices[j].c[c].begin())) {
            VectorField d = pair.v.slices[i];
            axpy(d, -1.0, predecessor->v.slices[j]);
            mism = std::max(mism, norm0(d));
          }
        break;
      }
    }
    rep.properties.push_back(prop("good set slices reused", mism == 0.0, mism,
                                  std::to_string(compared) + " common slices compared bitwise"));
  } else {
    rep.properties.push_back(prop("good set slices reused", true, 0.0, "no predecessor"));
  }

  // (vi) the stress lives strictly inside the eroded bad set.
  {
    double leak = 0.0;
    bool placed = true;
    for (std::size_t i = 0; i < pair.R.times.size(); ++i) {
      if (!bad.in_real_bad(pair.R.times[i])) {
        placed = false;
        leak = std::max(leak, norm0(pair.R.slices[i]));
      }
    }
    rep.properties.push_back(prop("stress supported in real bad set", placed && leak == 0.0,
                                  leak,
                                  std::to_string(pair.R.times.size()) +
                                      " stress slices; absent slices are exact zeros"));
  }

  // (vii) derivative growth on the eroded bad set, informational ratios.
  if (q >= 1) {
    const QScales scp = scales(params, q - 1);
    const double base = std::sqrt(scp.delta_q) * scp.lambda_q;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pair.v.times.size(); ++i)
      if (!bad.in_real_bad(pair.v.times[i])) idx.push_back(i);
    const std::size_t stride = std::max<std::size_t>(1, idx.size() / 24);
    double worst = 0.0;
    std::string detail;
    for (int N = 0; N <= 2; ++N) {
      double r = 0.0;
      const double denom = base * std::pow(scp.ell_q, -N);
      for (std::size_t ii = 0; ii < idx.size(); ii += stride)
        r = std::max(r, holder_norm(pair.v.slices[idx[ii]], N + 1.0) / denom);
      worst = std::max(worst, r);
      detail += (N ? ", " : "") + std::string("N=") + std::to_string(N) + ": " + fmt(r);
    }
    rep.properties.push_back(prop("derivative growth on real bad set", true, worst, detail));
  } else {
    rep.properties.push_back(
        prop("derivative growth on real bad set", true, 0.0, "not applicable at level 0"));
  }

  // Divergence, mean conservation, pressure normalization.
  {
    double dv = 0.0;
    for (const auto& s : pair.v.slices) dv = std::max(dv, norm0(divergence(s)));
    rep.properties.push_back(prop("velocity divergence free", dv <= 1e-10, dv, "gate 1e-10"));
    double md = 0.0;
    for (const auto& s : pair.v.slices) md = std::max(md, norm(mean_v3(s) - pair.mean_v));
    rep.properties.push_back(prop("velocity mean conserved", md <= 1e-12, md, "gate 1e-12"));
    double pm = 0.0;
    for (const auto& s : pair.p.slices) pm = std::max(pm, std::abs(mean(s)[0]));
    rep.properties.push_back(prop("pressure mean zero", pm <= 1e-12, pm, "gate 1e-12"));
  }

  // Residual instrument checks: each uniform run's relaxed residual must be
  // explained by the centered-stencil truncation error measured from the
  // stored slices themselves; good-set runs also meet the solver tolerance.
  {
    const auto runs = uniform_runs(pair.v.times);
    double global_fd = 0.0;
    std::vector<double> fd(runs.size(), -1.0);
    for (std::size_t r = 0; r < runs.size(); ++r) {
      fd[r] = run_fd_bound(pair, runs[r]);
      global_fd = std::max(global_fd, fd[r]);
    }
    double worst_ratio = 0.0, good_res = 0.0;
    bool ok = true;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double res = run_residual(pair, runs[r], nullptr);
      const double bound = 3.0 * (fd[r] >= 0.0 ? fd[r] : global_fd) + 1e-8;
      worst_ratio = std::max(worst_ratio, res / bound);
      if (res > bound) ok = false;
      bool good = true;
      for (const auto& iv : bad.intervals)
        if (pair.v.times[runs[r].b] > iv.first && pair.v.times[runs[r].a] < iv.second)
          good = false;
      if (good) good_res = std::max(good_res, res);
    }
    rep.properties.push_back(prop("residual within stencil error", ok, worst_ratio,
                                  "max residual over (3 x measured truncation + 1e-8) across " +
                                      std::to_string(runs.size()) + " runs"));
    rep.properties.push_back(prop("good set exactness", good_res <= 1e-6, good_res,
                                  "max relaxed residual over good-set runs, gate 1e-6"));
  }

  rep.identities_pass = true;
  for (const auto& p : rep.properties) rep.identities_pass = rep.identities_pass && p.pass;
  return rep;
}

void dump_report(const InductiveReport& r, const std::string& path) {
  nlohmann::json j;
  j["q"] = r.q;
  j["structure_only"] = r.structure_only;
  j["identities_pass"] = r.identities_pass;
  j["estimates"] = nlohmann::json::array();
  for (const auto& c : r.estimates) j["estimates"].push_back(check_json(c));
  j["properties"] = nlohmann::json::array();
  for (const auto& p : r.properties)
    j["properties"].push_back(
        {{"name", p.name}, {"pass", p.pass}, {"measured", p.measured}, {"detail", p.detail}});
  write_json_file(path, j.dump(2));
}

void dump_badset(const BadSet& b, const std::string& path) {
  nlohmann::json j;
  j["level"] = b.level;
  j["t_begin"] = b.t_begin;
  j["t_end"] = b.t_end;
  j["tau"] = b.tau;
  j["measure"] = b.measure();
  j["intervals"] = nlohmann::json::array();
  j["real_bad"] = nlohmann::json::array();
  for (const auto& iv : b.intervals) {
    j["intervals"].push_back({iv.first, iv.second});
    j["real_bad"].push_back({iv.first + b.tau, iv.second - b.tau});
  }
  write_json_file(path, j.dump(2));
}

// ---------------------------------------------------------------------------
// Iteration

namespace {

nlohmann::json glue_report_json(const GlueReport& r) {
  return {{"structure_only", r.structure_only},
          {"ell", r.ell},
          {"ell_requested", r.ell_requested},
          {"ell_clipped", r.ell_clipped},
          {"local_solves", r.local_solves},
          {"hops", r.hops},
          {"window_count", r.window_count},
          {"partition_defect", r.partition_defect},
          {"support_leak", r.support_leak},
          {"cutoff_derivative_scale",
           {r.cutoff_derivative_scale[0], r.cutoff_derivative_scale[1],
            r.cutoff_derivative_scale[2]}},
          {"residual", r.residual},
          {"residual_budget", r.residual_budget},
          {"good_set_mismatch", r.good_set_mismatch},
          {"size_ratio", r.size_ratio},
          {"size_budget", r.size_budget},
          {"vi_vs_vell", r.vi_vs_vell}};
}

nlohmann::json perturb_report_json(const PerturbReport& r) {
  return {{"structure_only", r.structure_only},
          {"lambda", r.lambda},
          {"delta", r.delta},
          {"kmax_w", r.kmax_w},
          {"windows", r.windows},
          {"grad_phi_dev", r.grad_phi_dev},
          {"rtilde_dist", r.rtilde_dist},
          {"div_w", r.div_w},
          {"w_norm0", r.w_norm0},
          {"w_norm1", r.w_norm1},
          {"w_bound", r.w_bound},
          {"wo_norm0", r.wo_norm0},
          {"wo_bound", r.wo_bound},
          {"wc_norm0", r.wc_norm0},
          {"cancellation", r.cancellation},
          {"cancellation_budget", r.cancellation_budget},
          {"R_norm", r.R_norm},
          {"R_bound", r.R_bound},
          {"nash_norm", r.nash_norm},
          {"transp_norm", r.transp_norm},
          {"osc_norm", r.osc_norm},
          {"fd_order", r.fd_order},
          {"analytic_fd_gap", r.analytic_fd_gap},
          {"phase_drift", r.phase_drift},
          {"mean_drift", r.mean_drift},
          {"support_leak", r.support_leak}};
}

void write_metrics_csv(const EulerReynoldsPair& pair, const std::filesystem::path& path) {
  std::ofstream os(path);
  os << std::setprecision(17);
  os << "t,e_v,R_norm0,v_c1\n";
  for (std::size_t i = 0; i < pair.v.times.size(); ++i) {
    const SymTensorField* s = stress_at(pair, i);
    os << pair.v.times[i] << ',' << kinetic_energy(pair.v.slices[i]) << ','
       << (s ? norm0(*s) : 0.0) << ',' << c1_norm(pair.v.slices[i]) << '\n';
  }
}

void dump_step_fields(const EulerReynoldsPair& pair, const BadSet& bad,
                      const std::filesystem::path& dir) {
  dump_field(pair.v.slices.front(), dir, "v_first");
  dump_field(pair.v.slices.back(), dir, "v_last");
  for (std::size_t w = 0; w < bad.intervals.size(); ++w) {
    const double c = 0.5 * (bad.intervals[w].first + bad.intervals[w].second);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pair.v.times.size(); ++i)
      if (std::abs(pair.v.times[i] - c) < std::abs(pair.v.times[best] - c)) best = i;
    const std::string tag = "_w" + std::to_string(w);
    dump_field(pair.v.slices[best], dir, "v" + tag);
    dump_field(pair.p.slices[best], dir, "p" + tag);
    if (const SymTensorField* s = stress_at(pair, best)) dump_field(*s, dir, "R" + tag);
  }
}

}  // namespace

IterateResult iterate(const EulerReynoldsPair& pair0, const BadSet& bad0,
                      const SchemeParams& params, int steps, const IterateOptions& opts) {
  require(steps >= 0 && steps <= 3, "iteration depth",
          "steps must lie in [0, 3], got " + std::to_string(steps));
  require(steps == 0 || opts.family != nullptr, "iteration depth",
          "a pipe-flow family is required for steps > 0");

  IterateResult out;
  out.pair = pair0;
  out.bad = bad0;
  out.bad_measures.push_back(bad0.measure());

  for (int s = 0; s < steps; ++s) {
    GlueResult g = glue(out.pair, out.bad, params, opts.glue);
    PerturbResult p = perturb(g.pair, g.next_bad, params, *opts.family, opts.perturb);
    InductiveReport rep = verify_inductive(p.pair, g.next_bad, params, &out.pair, &out.bad);

    if (!opts.run_dir.empty()) {
      const std::filesystem::path dir =
          std::filesystem::path(opts.run_dir) / ("step_" + std::to_string(out.pair.q));
      std::filesystem::create_directories(dir);
      dump_report(rep, (dir / "inductive_report.json").string());
      dump_badset(g.next_bad, (dir / "badset.json").string());
      write_json_file(dir / "glue_report.json", glue_report_json(g.report).dump(2));
      write_json_file(dir / "perturb_report.json", perturb_report_json(p.report).dump(2));
      write_metrics_csv(p.pair, dir / "metrics.csv");
      dump_step_fields(p.pair, g.next_bad, dir);
    }

    out.steps.push_back(IterateStep{g.report, p.report, rep});
    out.pair = std::move(p.pair);
    out.bad = std::move(g.next_bad);
    out.bad_measures.push_back(out.bad.measure());
  }
  return out;
}

}  // namespace ciforge
