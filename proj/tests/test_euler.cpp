// Spectral solver, flow maps, transport, and the stress-equation residual.
//
// Oracles derived by hand before implementation:
//  * v = (sin 2 pi x2, 0, 0) is steady: v (x) v has the single component
//    sin^2(2 pi x2), whose row divergence vanishes identically, so the
//    projected tendency is exactly zero (all product components are exact
//    zeros or modes with a zero derivative multiplier).
//  * v = (-cos 2 pi x1 sin 2 pi x2, sin 2 pi x1 cos 2 pi x2, 0) makes
//    div(v (x) v) a pure gradient, which the projection kills.
//  * constant velocity c: trajectories are straight lines, so the back-to-
//    base map is x - c (t - s_i) and transport moves f0 rigidly.
//  * a linear-in-time multiple of the steady shear with R scaled from the
//    shear's divergence potential balances d_t v = div R exactly.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "ciforge/calculus.hpp"
#include "ciforge/euler.hpp"
#include "ciforge/field.hpp"
#include "ciforge/holder.hpp"
#include "ciforge/sampler.hpp"
#include "ciforge/spectral.hpp"

using namespace ciforge;

namespace {

constexpr double kPi = 3.14159265358979323846;

ScalarField sample_scalar(int n, double (*fn)(double, double, double)) {
  ScalarField f(make_grid(n));
  double h = f.grid.spacing();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) f.c[0][f.grid.idx(i, j, k)] = fn(i * h, j * h, k * h);
  return f;
}

VectorField sample_vector_field(int n, V3 (*fn)(double, double, double)) {
  VectorField f(make_grid(n));
  double h = f.grid.spacing();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) set_vector(f, f.grid.idx(i, j, k), fn(i * h, j * h, k * h));
  return f;
}

VectorField steady_shear(int n) {
  return sample_vector_field(n, [](double, double y, double) {
    return V3{std::sin(2 * kPi * y), 0.0, 0.0};
  });
}

VectorField constant_stream(int n, V3 c) {
  VectorField f(make_grid(n));
  for (std::size_t p = 0; p < f.grid.size(); ++p) set_vector(f, p, c);
  return f;
}

template <int NC>
FieldT<NC> random_band_limited(int n, int band, Rng& rng) {
  FieldT<NC> f(make_grid(n));
  for (int c = 0; c < NC; ++c)
    for (auto& v : f.c[c]) v = rng.normal();
  auto s = analyze(f);
  for (int i = 0; i < n; ++i) {
    int m1 = std::abs(mode_of(i, n));
    for (int j = 0; j < n; ++j) {
      int m2 = std::abs(mode_of(j, n));
      for (int k = 0; k <= n / 2; ++k) {
        if (m1 <= band && m2 <= band && k <= band) continue;
        for (int c = 0; c < NC; ++c) s.c[c][s.idx(i, j, k)] = 0.0;
      }
    }
  }
  return synthesize(s, 0.0);
}

// Divergence-free, mean-zero, band-limited random velocity with ||v||_0 = amp.
VectorField random_velocity(int n, int band, double amp, Rng& rng) {
  VectorField v = leray_project(random_band_limited<3>(n, band, rng));
  const auto m = mean(v);
  for (int c = 0; c < 3; ++c)
    for (auto& x : v.c[c]) x -= m[c];
  scale(v, amp / norm0(v));
  return v;
}

// A valid state history for a steady field: identical slices at given times.
TimeSlab<EulerState> steady_slab(const VectorField& v, std::vector<double> times) {
  TimeSlab<EulerState> slab;
  for (double t : times) slab.slices.push_back(make_state(v, t));
  slab.times = std::move(times);
  return slab;
}

// Direct evaluation of the trigonometric interpolant from its half-complex
// spectrum (conjugate plane k = 0 summed as stored; k >= 1 doubled).
double direct_eval(const ScalarSpectrum& s, const V3& x) {
  const int n = s.n;
  std::complex<double> acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const int m1 = mode_of(i, n);
    for (int j = 0; j < n; ++j) {
      const int m2 = mode_of(j, n);
      for (int k = 0; k <= n / 2; ++k) {
        const std::complex<double> c = s.c[0][s.idx(i, j, k)];
        if (c == 0.0) continue;
        const double phase = 2 * kPi * (m1 * x.x + m2 * x.y + k * x.z);
        const std::complex<double> e(std::cos(phase), std::sin(phase));
        acc += (k == 0 || 2 * k == n) ? c * e : 2.0 * (c * e).real();
      }
    }
  }
  return acc.real();
}

double max_disp_error(const FlowMap& fm, V3 expect) {
  double worst = 0.0;
  for (std::size_t p = 0; p < fm.displacement.grid.size(); ++p) {
    const V3 d = vector_at(fm.displacement, p) - expect;
    worst = std::max(worst, norm(d));
  }
  return worst;
}

}  // namespace

TEST_CASE("sampler reproduces closed forms, constants, and grid nodes") {
  auto f = sample_scalar(32, [](double x, double, double) { return std::sin(2 * kPi * x); });
  ScalarSampler s(f);
  CHECK(s.fine_n() == 32);  // content at |m| = 1 only: resolution floor applies
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const V3 x{rng.uniform(), rng.uniform(), rng.uniform()};
    worst = std::max(worst, std::abs(s(x)[0] - std::sin(2 * kPi * x.x)));
  }
  // Degree-11 Lagrange remainder for |m| = 1 on a 32-point axis:
  // (2*pi)^12 / 32^12 * max|prod(s - j)| / 12! ~ 1.8e-13.
  CHECK(worst <= 1e-12);

  ScalarField c(make_grid(32));
  for (auto& v : c.c[0]) v = 0.7;
  ScalarSampler sc(c);
  for (int trial = 0; trial < 20; ++trial) {
    const V3 x{rng.uniform(-3.0, 3.0), rng.uniform(), rng.uniform()};
    CHECK(sc(x)[0] == doctest::Approx(0.7).epsilon(1e-14));
  }

  auto b = random_band_limited<1>(32, 10, rng);
  ScalarSampler sb(b);
  double node_worst = 0.0;
  const double h = b.grid.spacing();
  for (int i = 0; i < 32; i += 5)
    for (int j = 0; j < 32; j += 7)
      for (int k = 0; k < 32; k += 3)
        node_worst = std::max(node_worst, std::abs(sb(V3{i * h, j * h, k * h})[0] -
                                                   b.c[0][b.grid.idx(i, j, k)]));
  CHECK(node_worst <= 1e-12);
}

TEST_CASE("sampler matches direct spectral evaluation on random fields") {
  Rng rng(5);
  auto f = random_band_limited<1>(32, 5, rng);
  const auto spec = analyze(f);

  // Default resolution: 12 points per wavelength puts the degree-11 Lagrange
  // remainder for band-5 content near 1e-8; check against that honest budget.
  ScalarSampler s(f);
  CHECK(s.fine_n() == 64);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const V3 x{rng.uniform(), rng.uniform(), rng.uniform()};
    worst = std::max(worst, std::abs(s(x)[0] - direct_eval(spec, x)));
  }
  CHECK(worst <= 2e-8);

  // Quadrupling the fine grid shrinks the remainder by 4^12; what is left is
  // rounding noise, so the same comparison must tighten by orders of magnitude.
  ScalarSampler sfine(f, 12, 512, 256);
  double worst_fine = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const V3 x{rng.uniform(), rng.uniform(), rng.uniform()};
    worst_fine = std::max(worst_fine, std::abs(sfine(x)[0] - direct_eval(spec, x)));
  }
  CHECK(worst_fine <= 1e-11);
}

TEST_CASE("state construction validates the divergence") {
  auto bad = sample_vector_field(32, [](double x, double, double) {
    return V3{std::sin(2 * kPi * x), 0.0, 0.0};
  });
  CHECK_THROWS_WITH_AS(make_state(bad, 0.0), doctest::Contains("state divergence"), Fault);
  CHECK_NOTHROW(make_state(steady_shear(32), 0.0));
}

TEST_CASE("projected tendency agrees with the composed operator path") {
  Rng rng(9);
  auto v = random_band_limited<3>(32, 10, rng);
  VectorField composed = dealias(leray_project(divergence(outer_product(v, v))));
  scale(composed, -1.0);
  VectorField fused = euler_rhs(v);
  axpy(composed, -1.0, fused);
  CHECK(norm0(composed) <= 1e-11 * std::max(1.0, norm0(fused)));

  // background velocity folds in additively
  auto bg = random_band_limited<3>(32, 4, rng);
  VectorField total = v;
  axpy(total, 1.0, bg);
  VectorField with_bg = euler_rhs(v, &bg);
  axpy(with_bg, -1.0, euler_rhs(total));
  CHECK(norm0(with_bg) <= 1e-11 * std::max(1.0, norm0(fused)));
}

TEST_CASE("steady shear is a fixed point of the stepper") {
  EulerState st = make_state(steady_shear(32), 0.0);
  const VectorField v0 = st.v;
  const double dt = 0.9 * 0.5 * st.v.grid.spacing();  // ||v||_0 = 1
  for (int k = 0; k < 100; ++k) st = step(st, dt);
  VectorField diff = st.v;
  axpy(diff, -1.0, v0);
  CHECK(norm0(diff) <= 1e-8);
  CHECK(st.t == doctest::Approx(100 * dt));
  CHECK(norm0(divergence(st.v)) <= 1e-10);
}

TEST_CASE("planar eigenflow stays steady over 100 steps") {
  auto v = sample_vector_field(32, [](double x, double y, double) {
    return V3{-std::cos(2 * kPi * x) * std::sin(2 * kPi * y),
              std::sin(2 * kPi * x) * std::cos(2 * kPi * y), 0.0};
  });
  EulerState st = make_state(v, 0.0);
  const double dt = 0.9 * 0.5 * st.v.grid.spacing() / norm0(st.v);
  for (int k = 0; k < 100; ++k) st = step(st, dt);
  VectorField diff = st.v;
  axpy(diff, -1.0, v);
  CHECK(norm0(diff) <= 1e-6);
}

TEST_CASE("zero velocity stays zero") {
  EulerState st = make_state(VectorField(make_grid(32)), 0.0);
  for (int k = 0; k < 20; ++k) st = step(st, 0.01);
  CHECK(norm0(st.v) == 0.0);
  CHECK(norm0(st.p) == 0.0);
}

TEST_CASE("CFL guard rejects oversized steps") {
  EulerState st = make_state(steady_shear(32), 0.0);
  CHECK_THROWS_WITH_AS(step(st, 0.02), doctest::Contains("CFL guard"), Fault);
}

TEST_CASE("energy and mean are conserved over 100 steps at n=64") {
  Rng rng(7);
  VectorField v = random_velocity(64, 3, 0.5, rng);
  // ride on a small constant stream so mean conservation is non-trivial
  for (auto& x : v.c[0]) x += 0.05;
  EulerState st = make_state(v, 0.0);
  const double e0 = kinetic_energy(st.v);
  const auto m0 = mean(st.v);
  const double dt = 0.25 * st.v.grid.spacing() / norm0(st.v);
  StepOptions opts;
  opts.pressure = false;
  for (int k = 0; k < 100; ++k) st = step(st, dt, nullptr, opts);
  const double e1 = kinetic_energy(st.v);
  const auto m1 = mean(st.v);
  MESSAGE("energy drift ", std::abs(e1 - e0), " over 100 steps");
  CHECK(std::abs(e1 - e0) <= 1e-8);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(m1[c] - m0[c]) <= 1e-13);
  CHECK(norm0(divergence(st.v)) <= 1e-10 * (1.0 + derivative_sup(st.v, 1)));
}

TEST_CASE("local solve reproduces a steady solution on every slice") {
  const VectorField v0 = steady_shear(32);
  const double t0 = 0.3;
  const double horizon = 0.003;
  LocalSolve ls = solve_local(v0, t0, horizon);
  const auto& slab = ls.slab;
  const int steps = ls.report.steps_per_side;
  CHECK(steps >= 8);
  CHECK(static_cast<int>(slab.times.size()) == 2 * steps + 1);
  CHECK(slab.times.front() == doctest::Approx(t0 - horizon).epsilon(1e-12));
  CHECK(slab.times.back() == doctest::Approx(t0 + horizon).epsilon(1e-12));
  CHECK(slab.times[steps] == t0);
  for (std::size_t k = 0; k + 1 < slab.times.size(); ++k)
    CHECK(slab.times[k + 1] - slab.times[k] == doctest::Approx(ls.report.dt).epsilon(1e-10));
  for (const auto& s : slab.slices) {
    VectorField diff = s.v;
    axpy(diff, -1.0, v0);
    CHECK(norm0(diff) <= 1e-8);
  }
  CHECK(ls.report.growth_1 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ls.report.growth_2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ls.report.guard_norm > 1.0);
  CHECK(static_cast<int>(ls.report.cfl_history.size()) == 2 * steps);
  for (double m : ls.report.cfl_history) CHECK(m <= 0.5 + 1e-12);
}

TEST_CASE("local solve of the zero field is identically zero") {
  LocalSolve ls = solve_local(VectorField(make_grid(32)), 0.0, 0.05);
  for (const auto& s : ls.slab.slices) CHECK(norm0(s.v) == 0.0);
}

TEST_CASE("local solve horizon guard") {
  CHECK_THROWS_WITH_AS(solve_local(steady_shear(32), 0.0, 0.2),
                       doctest::Contains("Prop B.1 horizon"), Fault);
}

TEST_CASE("blow-up guard trips when the growth allowance is below one") {
  Rng rng(21);
  VectorField v0 = random_velocity(32, 3, 0.2, rng);
  SolveOptions opts;
  opts.blowup_factor = 0.5;  // impossible allowance: first step must trip it
  opts.diagnostics = false;
  const double horizon = 0.5 * 0.1 / holder_norm(v0, 1.5);
  CHECK_THROWS_WITH_AS(solve_local(v0, 0.0, horizon, opts),
                       doctest::Contains("Prop B.1 guard"), Fault);
}

TEST_CASE("local solve growth ratio stays small for small data") {
  Rng rng(11);
  VectorField v0 = random_velocity(32, 5, 1.0, rng);
  scale(v0, 0.1 / holder_norm(v0, 1.5));  // ||v0||_{1+alpha} = 0.1
  const double horizon = 0.99 * 0.1 / holder_norm(v0, 1.5);
  LocalSolve ls = solve_local(v0, 0.0, horizon);
  MESSAGE("growth_1 = ", ls.report.growth_1, ", growth_2 = ", ls.report.growth_2);
  CHECK(ls.report.growth_1 <= 2.0);
  CHECK(ls.report.growth_2 <= 4.0);
}

TEST_CASE("flow map is exactly the identity at the base time") {
  LocalSolve ls = solve_local(steady_shear(32), 0.3, 0.003);
  FlowMap fm = flow_map(ls.slab, 0.3, 0.3);
  CHECK(norm0(fm.displacement) == 0.0);
  CHECK(fm.base_time == 0.3);
  CHECK(fm.eval_time == 0.3);
}

TEST_CASE("constant stream: hand solution of the flow map and flux") {
  const V3 c{0.2, -0.1, 0.05};
  LocalSolve ls = solve_local(constant_stream(32, c), 0.0, 0.3);
  SUBCASE("backward-in-base map") {
    FlowMap fm = flow_map(ls.slab, 0.0, 0.25);
    CHECK(fm.direction == FlowDirection::forward);
    CHECK(max_disp_error(fm, -0.25 * c) <= 1e-12);
  }
  SUBCASE("negative offset") {
    FlowMap fm = flow_map(ls.slab, 0.0, -0.2);
    CHECK(fm.direction == FlowDirection::backward);
    CHECK(max_disp_error(fm, 0.2 * c) <= 1e-12);
  }
  SUBCASE("forward flux") {
    FlowMap fx = forward_flux(ls.slab, 0.0, 0.25);
    CHECK(max_disp_error(fx, 0.25 * c) <= 1e-12);
  }
}

TEST_CASE("composed backward map and forward flux give the identity") {
  Rng rng(13);
  VectorField v0 = random_velocity(32, 2, 0.3, rng);
  const double horizon = 0.9 * 0.1 / holder_norm(v0, 1.5);
  SolveOptions opts;
  opts.diagnostics = false;
  LocalSolve ls = solve_local(v0, 0.0, horizon, opts);
  const double t = 0.9 * horizon;
  FlowMap phi = flow_map(ls.slab, 0.0, t);
  FlowMap flux = forward_flux(ls.slab, 0.0, t);
  SpectralSampler<3> s(phi.displacement, 8);
  const Grid& g = phi.displacement.grid;
  double worst = 0.0;
  const double h = g.spacing();
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      for (int k = 0; k < g.n; ++k) {
        const std::size_t p = g.idx(i, j, k);
        const V3 x{i * h, j * h, k * h};
        const V3 y = x + vector_at(flux.displacement, p);
        const auto d = s(y);
        const V3 comp{y.x + d[0] - x.x, y.y + d[1] - x.y, y.z + d[2] - x.z};
        worst = std::max(worst, norm(comp));
      }
  MESSAGE("composition defect ", worst);
  CHECK(worst <= 1e-6);
}

TEST_CASE("flow map gradient bounds over 10 random flows") {
  double worst_ratio = 0.0;
  double worst_grad = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    VectorField v0 = random_velocity(32, 2, 0.25, rng);
    const double horizon = 0.9 * 0.1 / holder_norm(v0, 1.5);
    SolveOptions opts;
    opts.diagnostics = false;
    LocalSolve ls = solve_local(v0, 0.0, horizon, opts);
    const double t = (seed % 2 ? -1.0 : 1.0) * horizon;
    FlowMap fm = flow_map(ls.slab, 0.0, t);

    double v1_semi = 0.0;  // max over slices of [v]_1 on the traced range
    for (const auto& s : ls.slab.slices) v1_semi = std::max(v1_semi, derivative_sup(s.v, 1));
    FieldT<9> grad_disp = gradient(fm.displacement);
    const double dev = norm0(grad_disp);
    worst_ratio = std::max(worst_ratio, dev / (std::abs(t) * v1_semi));
    for (int c : {0, 4, 8})
      for (auto& x : grad_disp.c[c]) x += 1.0;
    worst_grad = std::max(worst_grad, norm0(grad_disp));
  }
  MESSAGE("max ||grad Phi - Id||_0 / (|t - s| [v]_1) = ", worst_ratio);
  MESSAGE("max ||grad Phi||_0 = ", worst_grad);
  CHECK(worst_ratio <= 2.0);
  CHECK(worst_grad <= 4.0);
}

TEST_CASE("flow map hypothesis guard") {
  TimeSlab<EulerState> slab = steady_slab(steady_shear(32), {0.0, 1.0, 2.0});
  CHECK_THROWS_WITH_AS(flow_map(slab, 0.0, 2.0), doctest::Contains("Prop E.1 hypothesis"),
                       Fault);
}

TEST_CASE("marching map matches the one-shot map") {
  SUBCASE("constant stream") {
    const V3 c{0.2, -0.1, 0.05};
    LocalSolve ls = solve_local(constant_stream(32, c), 0.0, 0.3);
    FlowMarcher marcher(ls.slab, 0.0);
    marcher.advance_to(0.1);
    CHECK(max_disp_error(marcher.snapshot(), -0.1 * c) <= 1e-12);
    marcher.advance_to(0.2);
    marcher.advance_to(0.25);
    FlowMap direct = flow_map(ls.slab, 0.0, 0.25);
    VectorField diff = marcher.snapshot().displacement;
    axpy(diff, -1.0, direct.displacement);
    CHECK(norm0(diff) <= 1e-9);
    CHECK_THROWS_WITH_AS(marcher.advance_to(0.1), doctest::Contains("flow marcher"), Fault);
  }
  SUBCASE("curved flow") {
    Rng rng(13);
    VectorField v0 = random_velocity(32, 2, 0.3, rng);
    const double horizon = 0.9 * 0.1 / holder_norm(v0, 1.5);
    SolveOptions opts;
    opts.diagnostics = false;
    LocalSolve ls = solve_local(v0, 0.0, horizon, opts);
    FlowMarcher marcher(ls.slab, 0.0);
    marcher.advance_to(0.5 * horizon);
    marcher.advance_to(0.9 * horizon);
    FlowMap direct = flow_map(ls.slab, 0.0, 0.9 * horizon);
    VectorField diff = marcher.snapshot().displacement;
    axpy(diff, -1.0, direct.displacement);
    MESSAGE("marcher vs one-shot: ", norm0(diff));
    CHECK(norm0(diff) <= 1e-8);
  }
}

TEST_CASE("transport probe: trivial, rigid, and sourced hand solutions") {
  Rng rng(17);
  SUBCASE("v = 0, g = 0 keeps f0") {
    LocalSolve ls = solve_local(VectorField(make_grid(32)), 0.0, 0.05);
    auto f0 = random_band_limited<1>(32, 5, rng);
    ScalarField g(make_grid(32));
    TransportReport rep = transport_probe(f0, g, ls.slab, 0.0, 0.04);
    VectorField dummy;  // silence unused warnings on some compilers
    (void)dummy;
    ScalarField diff = rep.f;
    axpy(diff, -1.0, f0);
    CHECK(norm0(diff) <= 1e-12);
    CHECK(rep.ratio == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("constant stream moves f0 rigidly") {
    const V3 c{0.2, 0.0, 0.0};
    LocalSolve ls = solve_local(constant_stream(32, c), 0.0, 0.3);
    auto f0 = sample_scalar(32, [](double x, double, double) { return std::sin(2 * kPi * x); });
    ScalarField g(make_grid(32));
    TransportReport rep = transport_probe(f0, g, ls.slab, 0.0, 0.2);
    double worst = 0.0;
    const double h = 1.0 / 32;
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j)
        for (int k = 0; k < 32; ++k)
          worst = std::max(worst, std::abs(rep.f.c[0][rep.f.grid.idx(i, j, k)] -
                                           std::sin(2 * kPi * (i * h - 0.2 * 0.2))));
    CHECK(worst <= 1e-9);
  }
  SUBCASE("constant source integrates in time") {
    LocalSolve ls = solve_local(VectorField(make_grid(32)), 0.0, 0.05);
    auto f0 = random_band_limited<1>(32, 5, rng);
    ScalarField g(make_grid(32));
    for (auto& x : g.c[0]) x = 1.0;
    TransportReport rep = transport_probe(f0, g, ls.slab, 0.0, 0.05);
    ScalarField diff = rep.f;
    axpy(diff, -1.0, f0);
    for (auto& x : diff.c[0]) x -= 0.05;
    CHECK(norm0(diff) <= 1e-12);
  }
}

TEST_CASE("transport ratio stays below 3 on 10 random instances") {
  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(200 + seed);
    VectorField v0 = random_velocity(32, 2, 0.25, rng);
    const double horizon = 0.9 * 0.1 / holder_norm(v0, 1.5);
    SolveOptions opts;
    opts.diagnostics = false;
    opts.pressure = false;
    LocalSolve ls = solve_local(v0, 0.0, horizon, opts);
    auto f0 = random_band_limited<1>(32, 5, rng);
    scale(f0, 1.0 / holder_norm(f0, 0.5));
    auto g = random_band_limited<1>(32, 5, rng);
    scale(g, 1.0 / holder_norm(g, 0.5));
    const double t = (seed % 2 ? -0.9 : 0.9) * horizon;
    TransportReport rep = transport_probe(f0, g, ls.slab, 0.0, t);
    worst = std::max(worst, rep.ratio);
  }
  MESSAGE("max transport ratio = ", worst);
  CHECK(worst <= 3.0);
}

TEST_CASE("stress-equation residual: steady, zero, and manufactured cases") {
  SUBCASE("steady shear with no stress") {
    LocalSolve ls = solve_local(steady_shear(32), 0.0, 0.003);
    CHECK(euler_reynolds_residual(ls.slab) <= 1e-6);
  }
  SUBCASE("zero everything") {
    LocalSolve ls = solve_local(VectorField(make_grid(32)), 0.0, 0.05);
    CHECK(euler_reynolds_residual(ls.slab) == 0.0);
  }
  SUBCASE("free evolution: in-band residual is pure time truncation") {
    // The solver integrates the dealias-truncated system, so the part of the
    // residual inside the dealias band is centered-difference truncation and
    // must shrink like dt^2 under refinement; the full-band value adds the
    // convection content above the cutoff that the truncated evolution
    // discards by construction, and the triangle inequality ties the three.
    Rng rng(23);
    VectorField v0 = random_velocity(32, 5, 0.3, rng);
    const double horizon = 0.9 * 0.1 / holder_norm(v0, 1.5);
    SolveOptions opts;
    opts.diagnostics = false;

    struct Split {
      double full = 0.0, in_band = 0.0, tail = 0.0;
    };
    auto split = [](const TimeSlab<EulerState>& slab) {
      Split out;
      for (std::size_t i = 1; i + 1 < slab.times.size(); ++i) {
        VectorField r = slab.slices[i + 1].v;
        axpy(r, -1.0, slab.slices[i - 1].v);
        scale(r, 1.0 / (slab.times[i + 1] - slab.times[i - 1]));
        axpy(r, 1.0, divergence(outer_product(slab.slices[i].v, slab.slices[i].v)));
        axpy(r, 1.0, gradient(slab.slices[i].p));
        VectorField low = dealias(r);
        out.full = std::max(out.full, norm0(r));
        out.in_band = std::max(out.in_band, norm0(low));
        axpy(r, -1.0, low);
        out.tail = std::max(out.tail, norm0(r));
      }
      return out;
    };

    LocalSolve coarse = solve_local(v0, 0.0, horizon, opts);
    opts.min_steps_per_side = 32;
    LocalSolve fine = solve_local(v0, 0.0, horizon, opts);
    const Split c = split(coarse.slab);
    const Split f = split(fine.slab);
    // the reported number matches an independent recomputation of the operator
    CHECK(euler_reynolds_residual(coarse.slab) == doctest::Approx(c.full).epsilon(1e-12));
    MESSAGE("in-band residual ", c.in_band, " -> ", f.in_band,
            " after 4x refinement; discarded-band content ", f.tail);
    CHECK(f.in_band <= 1e-3);
    CHECK(f.in_band * 8.0 <= c.in_band);  // second-order decay (ideal factor 16)
    CHECK(f.full <= f.in_band + f.tail + 1e-12);
  }
  SUBCASE("manufactured stress balances a time-ramped shear") {
    const VectorField base = steady_shear(32);
    const double tau = 0.01;
    const double rate = 10.0;  // v(t) = (1 + rate t) base
    std::vector<double> times{0.0, tau, 2 * tau};
    std::vector<VectorField> v;
    for (double t : times) {
      VectorField s = base;
      scale(s, 1.0 + rate * t);
      v.push_back(std::move(s));
    }
    // d_t v = rate * base must equal div R; div(v (x) v) vanishes identically
    SymTensorField R = inverse_divergence(base);
    scale(R, rate);
    std::vector<SymTensorField> stress(3, R);
    std::vector<ScalarField> p(3, ScalarField(make_grid(32)));
    const double res = euler_reynolds_residual(times, v, &stress, &p);
    CHECK(res <= 1e-9);
    // dropping the stress leaves exactly the ramp rate
    const double res_no_stress = euler_reynolds_residual(times, v, nullptr, &p);
    CHECK(res_no_stress == doctest::Approx(rate).epsilon(1e-9));
  }
}
