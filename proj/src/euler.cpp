#include "ciforge/euler.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>

#include <nlohmann/json.hpp>

#include "ciforge/calculus.hpp"
#include "ciforge/holder.hpp"
#include "ciforge/io.hpp"
#include "ciforge/spectral.hpp"

namespace ciforge {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double c1_norm(const VectorField& v) { return norm0(v) + derivative_sup(v, 1); }

ScalarField diagnostic_pressure(const VectorField& v, double t) {
  SymTensorField zero(v.grid, t);
  ScalarField p = solve_pressure(v, zero);
  p.time_tag = t;
  return p;
}

}  // namespace

EulerState make_state(VectorField v, double t) {
  const ScalarField d = divergence(v);
  const double scale_ = 1.0 + derivative_sup(v, 1);
  const double dnorm = norm0(d);
  if (dnorm > 1e-10 * scale_)
    fail("state divergence", "||div v||_0 = " + std::to_string(dnorm) +
                                 " exceeds 1e-10 x (1 + [v]_1) = " +
                                 std::to_string(1e-10 * scale_));
  v.time_tag = t;
  ScalarField p = diagnostic_pressure(v, t);
  return {std::move(v), t, std::move(p)};
}

VectorField euler_rhs(const VectorField& v, const VectorField* background) {
  const Grid g = v.grid;
  const int n = g.n;
  const int np = 3 * n / 2;
  const int half = n / 2;

  auto spec = analyze(v);
  if (background) {
    require(background->grid == g, "field shape", "background velocity on a different grid");
    const auto sb = analyze(*background);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < spec.c[c].size(); ++i) spec.c[c][i] += sb.c[c][i];
  }

  // zero-pad the stored band onto the 3n/2 grid (Nyquist planes dropped)
  SpectrumT<3> padded;
  padded.n = np;
  padded.time_tag = v.time_tag;
  for (auto& comp : padded.c) comp.assign(padded.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const int m1 = mode_of(i, n);
    if (std::abs(m1) >= half) continue;
    const int ip = m1 >= 0 ? m1 : m1 + np;
    for (int j = 0; j < n; ++j) {
      const int m2 = mode_of(j, n);
      if (std::abs(m2) >= half) continue;
      const int jp = m2 >= 0 ? m2 : m2 + np;
      const std::size_t src0 = spec.idx(i, j, 0);
      const std::size_t dst0 = padded.idx(ip, jp, 0);
      for (int k = 0; k < half; ++k)
        for (int c = 0; c < 3; ++c) padded.c[c][dst0 + k] = spec.c[c][src0 + k];
    }
  }

  VectorField up = synthesize(padded, v.time_tag);
  for (auto& comp : padded.c) {
    comp.clear();
    comp.shrink_to_fit();
  }

  FieldT<6> prod(up.grid, v.time_tag);
  parallel_for(up.grid.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      const double a = up.c[0][p];
      const double b = up.c[1][p];
      const double c = up.c[2][p];
      prod.c[0][p] = a * a;
      prod.c[1][p] = b * b;
      prod.c[2][p] = c * c;
      prod.c[3][p] = a * b;
      prod.c[4][p] = a * c;
      prod.c[5][p] = b * c;
    }
  });
  up = VectorField();
  const auto that = analyze(prod);
  prod = FieldT<6>();

  // divergence + projection + 2/3 truncation in one pass over the kept band
  SpectrumT<3> out;
  out.n = n;
  out.time_tag = v.time_tag;
  for (auto& comp : out.c) comp.assign(out.size(), 0.0);
  const int kmax = g.dealias_kmax();
  const std::complex<double> iu(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const int m1 = mode_of(i, n);
    if (std::abs(m1) > kmax) continue;
    const int ip = m1 >= 0 ? m1 : m1 + np;
    for (int j = 0; j < n; ++j) {
      const int m2 = mode_of(j, n);
      if (std::abs(m2) > kmax) continue;
      const int jp = m2 >= 0 ? m2 : m2 + np;
      for (int k = 0; k <= kmax; ++k) {
        if (m1 == 0 && m2 == 0 && k == 0) continue;  // mean mode stays zero
        const std::size_t src = that.idx(ip, jp, k);
        const double f1 = m1;
        const double f2 = m2;
        const double f3 = k;
        std::complex<double> w0 =
            -kTwoPi * iu * (f1 * that.c[0][src] + f2 * that.c[3][src] + f3 * that.c[4][src]);
        std::complex<double> w1 =
            -kTwoPi * iu * (f1 * that.c[3][src] + f2 * that.c[1][src] + f3 * that.c[5][src]);
        std::complex<double> w2 =
            -kTwoPi * iu * (f1 * that.c[4][src] + f2 * that.c[5][src] + f3 * that.c[2][src]);
        const double nn = f1 * f1 + f2 * f2 + f3 * f3;
        const std::complex<double> dot = (f1 * w0 + f2 * w1 + f3 * w2) / nn;
        const std::size_t dst = out.idx(i, j, k);
        out.c[0][dst] = w0 - f1 * dot;
        out.c[1][dst] = w1 - f2 * dot;
        out.c[2][dst] = w2 - f3 * dot;
      }
    }
  }
  VectorField rhs = synthesize(out, v.time_tag);
  rhs.grid = g;
  return rhs;
}

EulerState step(const EulerState& state, double dt, const VectorField* v_background,
                const StepOptions& opts) {
  const Grid& g = state.v.grid;
  const double vmax = norm0(state.v);
  const double limit = opts.cfl * g.spacing() / std::max(vmax, 1e-300);
  if (vmax > 0.0 && std::abs(dt) > limit * (1.0 + 1e-12))
    fail("CFL guard", "|dt| = " + std::to_string(std::abs(dt)) +
                          " exceeds cfl x spacing / ||v||_0 = " + std::to_string(limit));

  const VectorField k1 = euler_rhs(state.v, v_background);
  VectorField y = state.v;
  axpy(y, 0.5 * dt, k1);
  const VectorField k2 = euler_rhs(y, v_background);
  y = state.v;
  axpy(y, 0.5 * dt, k2);
  const VectorField k3 = euler_rhs(y, v_background);
  y = state.v;
  axpy(y, dt, k3);
  const VectorField k4 = euler_rhs(y, v_background);
  y = VectorField();

  VectorField vn = state.v;
  axpy(vn, dt / 6.0, k1);
  axpy(vn, dt / 3.0, k2);
  axpy(vn, dt / 3.0, k3);
  axpy(vn, dt / 6.0, k4);

  // The increment has an exactly-zero mean mode; undo summation roundoff so
  // the sample mean is carried over as well.
  const auto m0 = mean(state.v);
  const auto m1 = mean(vn);
  for (int c = 0; c < 3; ++c) {
    const double shift = m0[c] - m1[c];
    if (shift != 0.0)
      for (double& x : vn.c[c]) x += shift;
  }

  const double t_new = state.t + dt;
  vn.time_tag = t_new;
  EulerState out{std::move(vn), t_new, ScalarField(g, t_new)};
  if (opts.pressure) out.p = diagnostic_pressure(out.v, t_new);
  return out;
}

LocalSolve solve_local(const VectorField& v0, double t0, double horizon,
                       const SolveOptions& opts) {
  require(horizon > 0.0, "solve horizon", "horizon must be positive");
  const double guard = holder_norm(v0, 1.0 + opts.alpha);
  if (guard > 0.0 && horizon > 0.1 / guard * (1.0 + 1e-12))
    fail("Prop B.1 horizon", "horizon " + std::to_string(horizon) +
                                 " exceeds 0.1 / ||v0||_{1+a} = " + std::to_string(0.1 / guard));

  const Grid& g = v0.grid;
  const double vmax = norm0(v0);
  const double dt_cfl = vmax > 0.0 ? opts.cfl * g.spacing() / vmax : horizon;
  const int steps = std::max<int>(opts.min_steps_per_side,
                                  static_cast<int>(std::ceil(horizon / dt_cfl - 1e-12)));
  const double dt = horizon / steps;

  LocalSolveReport rep;
  rep.dt = dt;
  rep.steps_per_side = steps;
  rep.horizon = horizon;
  rep.guard_norm = guard;

  const EulerState base = make_state(v0, t0);
  const double initial_c1 = c1_norm(base.v);
  const StepOptions sopts{opts.cfl, opts.pressure};

  auto march = [&](double signed_dt) {
    std::vector<EulerState> states;
    states.reserve(steps);
    const EulerState* cur = &base;
    for (int k = 0; k < steps; ++k) {
      rep.cfl_history.push_back(std::abs(signed_dt) * norm0(cur->v) / g.spacing());
      states.push_back(step(*cur, signed_dt, nullptr, sopts));
      cur = &states.back();
      const double c1 = c1_norm(cur->v);
      if (c1 > opts.blowup_factor * initial_c1)
        fail("Prop B.1 guard", "||v||_1 grew to " + std::to_string(c1) + " = " +
                                   std::to_string(c1 / std::max(initial_c1, 1e-300)) +
                                   "x initial within the slab");
    }
    return states;
  };

  const auto backward = march(-dt);
  const auto forward = march(+dt);

  LocalSolve out;
  out.slab.times.reserve(2 * steps + 1);
  out.slab.slices.reserve(2 * steps + 1);
  for (int k = 0; k <= 2 * steps; ++k) {
    out.slab.times.push_back(t0 + (k - steps) * dt);
    if (k < steps)
      out.slab.slices.push_back(backward[steps - 1 - k]);
    else if (k == steps)
      out.slab.slices.push_back(base);
    else
      out.slab.slices.push_back(forward[k - steps - 1]);
  }
  // pin the exact slice times (accumulated tags can carry roundoff)
  for (std::size_t k = 0; k < out.slab.times.size(); ++k) {
    out.slab.slices[k].t = out.slab.times[k];
    out.slab.slices[k].v.time_tag = out.slab.times[k];
    out.slab.slices[k].p.time_tag = out.slab.times[k];
  }

  if (opts.diagnostics) {
    const double base_1 = guard > 0.0 ? guard : 1.0;
    const double base_2 = std::max(holder_norm(v0, 2.0 + opts.alpha), 1e-300);
    const int count = static_cast<int>(out.slab.slices.size());
    const int stride = std::max(1, count / 9);
    for (int k = 0; k < count; k += stride) {
      const auto& v = out.slab.slices[k].v;
      rep.growth_1 = std::max(rep.growth_1, holder_norm(v, 1.0 + opts.alpha) / base_1);
      rep.growth_2 = std::max(rep.growth_2, holder_norm(v, 2.0 + opts.alpha) / base_2);
    }
    const auto& vlast = out.slab.slices.back().v;
    rep.growth_1 = std::max(rep.growth_1, holder_norm(vlast, 1.0 + opts.alpha) / base_1);
    rep.growth_2 = std::max(rep.growth_2, holder_norm(vlast, 2.0 + opts.alpha) / base_2);
  }
  out.report = std::move(rep);
  return out;
}

void dump_report(const LocalSolveReport& r, const std::string& path) {
  nlohmann::json j;
  j["dt"] = r.dt;
  j["steps_per_side"] = r.steps_per_side;
  j["horizon"] = r.horizon;
  j["guard_norm"] = r.guard_norm;
  j["growth_1"] = r.growth_1;
  j["growth_2"] = r.growth_2;
  j["cfl_history"] = r.cfl_history;
  write_json_file(path, j.dump(2) + "\n");
}

namespace {

double slab_tol(const std::vector<double>& T) {
  return 1e-12 * std::max(1.0, std::abs(T.back() - T.front()) + std::abs(T.front()));
}

int interval_locate(const std::vector<double>& T, double s, int dir, const char* what) {
  require(T.size() >= 2, "slab range", std::string(what) + ": slab needs at least two slices");
  const double tol = slab_tol(T);
  if (s < T.front() - tol || s > T.back() + tol)
    fail("slab range", std::string(what) + ": time " + std::to_string(s) + " outside slab [" +
                           std::to_string(T.front()) + ", " + std::to_string(T.back()) + "]");
  int i = static_cast<int>(std::upper_bound(T.begin(), T.end(), s) - T.begin()) - 1;
  i = std::clamp(i, 0, static_cast<int>(T.size()) - 2);
  if (dir < 0 && i > 0 && std::abs(T[i] - s) <= tol) --i;
  return i;
}

std::array<std::vector<double>, 3> node_positions(const Grid& g) {
  std::array<std::vector<double>, 3> pos;
  for (auto& v : pos) v.resize(g.size());
  const double h = g.spacing();
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) {
      const std::size_t row = g.idx(i, j, 0);
      for (int k = 0; k < g.n; ++k) {
        pos[0][row + k] = i * h;
        pos[1][row + k] = j * h;
        pos[2][row + k] = k * h;
      }
    }
  return pos;
}

std::array<std::vector<double>, 3> fine_data(const VectorField& v, int U) {
  VectorField f = resample(v, U);
  return std::move(f.c);
}

// Fine-grid data of the two slices bracketing the current interval plus the
// time-interpolated blend the RK4 stages sample from.
struct StageData {
  int U = 0;
  double t_lo = 0.0, t_hi = 0.0;
  std::array<std::vector<double>, 3> lo, hi, blend;

  void build_blend(double s) {
    double w = (s - t_lo) / (t_hi - t_lo);
    w = std::clamp(w, 0.0, 1.0);
    const std::size_t m = lo[0].size();
    for (int c = 0; c < 3; ++c) {
      blend[c].resize(m);
      const double* a = lo[c].data();
      const double* b = hi[c].data();
      double* o = blend[c].data();
      parallel_for(m, [&](std::size_t plo, std::size_t phi) {
        for (std::size_t p = plo; p < phi; ++p) o[p] = a[p] + w * (b[p] - a[p]);
      });
    }
  }
};

// RK4 characteristic tracing of the positions in `pos` from t_from to t_to
// (either direction), one step per slab interval, velocity sampled spectrally
// in space and linearly in time.  Optionally accumulates the path integral of
// g into g_acc (for transport sources).
void rk4_trace(const TimeSlab<EulerState>& slab, double t_from, double t_to,
               std::array<std::vector<double>, 3>& pos, const ScalarSampler* g_sampler,
               std::vector<double>* g_acc) {
  const auto& T = slab.times;
  const double tol = slab_tol(T);
  if (std::abs(t_to - t_from) <= tol) return;
  const int dir = t_to > t_from ? +1 : -1;

  const int i_from = interval_locate(T, t_from, dir, "trace");
  const int i_to = interval_locate(T, t_to, -dir, "trace");
  const int s_lo = std::min(i_from, i_to);
  const int s_hi = std::max(i_from, i_to) + 1;
  int U = 16;
  for (int s = s_lo; s <= s_hi; ++s) U = std::max(U, natural_fine_n(slab.slices[s].v));
  if (U > 512)
    fail("sampler resolution", "trace needs a fine grid of " + std::to_string(U) +
                                   " points per axis, above the limit 512");

  StageData sd;
  sd.U = U;
  int ilo = i_from;
  sd.lo = fine_data(slab.slices[ilo].v, U);
  sd.hi = fine_data(slab.slices[ilo + 1].v, U);
  sd.t_lo = T[ilo];
  sd.t_hi = T[ilo + 1];

  const std::size_t m = pos[0].size();
  std::array<std::vector<double>, 3> acc, ytmp;
  for (int c = 0; c < 3; ++c) {
    acc[c].resize(m);
    ytmp[c].resize(m);
  }
  std::vector<double> gtmp;
  if (g_acc) gtmp.resize(m);

  double cur = t_from;
  while (true) {
    const double bound = dir > 0 ? sd.t_hi : sd.t_lo;
    const double nxt = dir > 0 ? std::min(bound, t_to) : std::max(bound, t_to);
    const double h = nxt - cur;
    if (std::abs(h) > tol) {
      // samples the blend at `in`, adds the stage slope into acc (weight w),
      // and seeds the next stage positions pos + frac*h*k
      auto run_stage = [&](const std::array<std::vector<double>, 3>& in, double w,
                           double frac, bool first, bool last) {
        parallel_for(m, [&](std::size_t plo, std::size_t phi) {
          for (std::size_t p = plo; p < phi; ++p) {
            const V3 y{in[0][p], in[1][p], in[2][p]};
            const auto vv = sample_raw<3>(sd.blend, sd.U, y);
            if (g_acc) {
              const double gv = (*g_sampler)(y)[0];
              gtmp[p] = first ? gv : gtmp[p] + w * gv;
            }
            for (int c = 0; c < 3; ++c) {
              acc[c][p] = first ? vv[c] : acc[c][p] + w * vv[c];
              if (!last) ytmp[c][p] = pos[c][p] + frac * h * vv[c];
            }
          }
        });
      };
      sd.build_blend(cur);
      run_stage(pos, 1.0, 0.5, true, false);
      sd.build_blend(cur + 0.5 * h);
      run_stage(ytmp, 2.0, 0.5, false, false);
      run_stage(ytmp, 2.0, 1.0, false, false);
      sd.build_blend(nxt);
      run_stage(ytmp, 1.0, 0.0, false, true);
      const double w6 = h / 6.0;
      for (int c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < m; ++p) pos[c][p] += w6 * acc[c][p];
      if (g_acc)
        for (std::size_t p = 0; p < m; ++p) (*g_acc)[p] += w6 * gtmp[p];
    }
    cur = nxt;
    if (std::abs(cur - t_to) <= tol) break;
    if (dir > 0) {
      ++ilo;
      require(ilo + 1 < static_cast<int>(T.size()), "slab range", "trace ran off the slab");
      sd.lo = std::move(sd.hi);
      sd.hi = fine_data(slab.slices[ilo + 1].v, U);
    } else {
      --ilo;
      require(ilo >= 0, "slab range", "trace ran off the slab");
      sd.hi = std::move(sd.lo);
      sd.lo = fine_data(slab.slices[ilo].v, U);
    }
    sd.t_lo = T[ilo];
    sd.t_hi = T[ilo + 1];
  }
}

double slab_c1_max(const TimeSlab<EulerState>& slab, double a, double b, const char* what) {
  const int i0 = interval_locate(slab.times, std::min(a, b), +1, what);
  const int i1 = interval_locate(slab.times, std::max(a, b), -1, what);
  double best = 0.0;
  for (int s = std::min(i0, i1); s <= std::max(i0, i1) + 1; ++s)
    best = std::max(best, c1_norm(slab.slices[s].v));
  return best;
}

void check_flow_hypothesis(const TimeSlab<EulerState>& slab, double s_i, double t,
                           const char* what) {
  const double v1 = slab_c1_max(slab, s_i, t, what);
  const double prod = std::abs(t - s_i) * v1;
  if (prod > 1.0 + 1e-12)
    fail("Prop E.1 hypothesis",
         std::string(what) + ": |t - s_i| ||v||_1 = " + std::to_string(prod) + " > 1");
}

FlowMap traced_map(const TimeSlab<EulerState>& slab, double base, double eval, double t_from,
                   double t_to, const char* what) {
  require(!slab.slices.empty(), "slab range", std::string(what) + " on an empty slab");
  check_flow_hypothesis(slab, base, eval, what);
  const Grid g = slab.slices.front().v.grid;
  auto pos = node_positions(g);
  rk4_trace(slab, t_from, t_to, pos, nullptr, nullptr);
  FlowMap out{base, eval,
              eval >= base ? FlowDirection::forward : FlowDirection::backward,
              VectorField(g, eval)};
  const double h = g.spacing();
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) {
      const std::size_t row = g.idx(i, j, 0);
      for (int k = 0; k < g.n; ++k) {
        out.displacement.c[0][row + k] = pos[0][row + k] - i * h;
        out.displacement.c[1][row + k] = pos[1][row + k] - j * h;
        out.displacement.c[2][row + k] = pos[2][row + k] - k * h;
      }
    }
  return out;
}

}  // namespace

FlowMap flow_map(const TimeSlab<EulerState>& slab, double s_i, double t) {
  return traced_map(slab, s_i, t, t, s_i, "flow map");
}

FlowMap forward_flux(const TimeSlab<EulerState>& slab, double s_i, double t) {
  return traced_map(slab, s_i, t, s_i, t, "forward flux");
}

FlowMarcher::FlowMarcher(const TimeSlab<EulerState>& slab, double s_i)
    : slab_(&slab), base_(s_i), cur_(s_i) {
  require(!slab.slices.empty(), "slab range", "flow marcher on an empty slab");
  interval_locate(slab.times, s_i, +1, "flow marcher");
  const Grid& g = slab.slices.front().v.grid;
  for (auto& v : disp_) v.assign(g.size(), 0.0);
}

void FlowMarcher::advance_to(double t) {
  const double tol = slab_tol(slab_->times);
  if (std::abs(t - cur_) <= tol) {
    cur_ = t;
    return;
  }
  if (std::abs(cur_ - base_) > tol) {
    const bool away = (cur_ > base_) ? (t > cur_) : (t < cur_);
    require(away, "flow marcher", "advance must move away from the base monotonically");
  }
  check_flow_hypothesis(*slab_, base_, t, "flow marcher");
  const Grid& g = slab_->slices.front().v.grid;
  auto pos = node_positions(g);
  rk4_trace(*slab_, t, cur_, pos, nullptr, nullptr);
  if (std::abs(cur_ - base_) <= tol) {
    const double h = g.spacing();
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j) {
        const std::size_t row = g.idx(i, j, 0);
        for (int k = 0; k < g.n; ++k) {
          disp_[0][row + k] = pos[0][row + k] - i * h;
          disp_[1][row + k] = pos[1][row + k] - j * h;
          disp_[2][row + k] = pos[2][row + k] - k * h;
        }
      }
  } else {
    // compose: Phi_new(x) = Phi_old(B(x)) with B the freshly traced segment
    VectorField dold(g, cur_);
    dold.c = disp_;
    const SpectralSampler<3> S(dold, /*points_per_wavelength=*/8);
    const double h = g.spacing();
    parallel_for(g.size(), [&](std::size_t plo, std::size_t phi) {
      for (std::size_t p = plo; p < phi; ++p) {
        const V3 y{pos[0][p], pos[1][p], pos[2][p]};
        const auto d = S(y);
        disp_[0][p] = y.x + d[0];
        disp_[1][p] = y.y + d[1];
        disp_[2][p] = y.z + d[2];
      }
    });
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j) {
        const std::size_t row = g.idx(i, j, 0);
        for (int k = 0; k < g.n; ++k) {
          disp_[0][row + k] -= i * h;
          disp_[1][row + k] -= j * h;
          disp_[2][row + k] -= k * h;
        }
      }
  }
  cur_ = t;
}

FlowMap FlowMarcher::snapshot() const {
  const Grid& g = slab_->slices.front().v.grid;
  FlowMap out{base_, cur_,
              cur_ >= base_ ? FlowDirection::forward : FlowDirection::backward,
              VectorField(g, cur_)};
  out.displacement.c = disp_;
  return out;
}

TransportReport transport_probe(const ScalarField& f0, const ScalarField& g,
                                const TimeSlab<EulerState>& slab, double t0, double t,
                                double alpha) {
  require(!slab.slices.empty(), "slab range", "transport probe on an empty slab");
  const Grid& gr = slab.slices.front().v.grid;
  require(f0.grid == gr && g.grid == gr, "field shape",
          "transport probe fields must live on the slab grid");
  check_flow_hypothesis(slab, t0, t, "transport probe");

  const double gnorm = holder_norm(g, alpha);
  const bool use_g = gnorm > 0.0;
  std::optional<ScalarSampler> gs;
  if (use_g) gs.emplace(g);

  auto pos = node_positions(gr);
  std::vector<double> acc(gr.size(), 0.0);
  rk4_trace(slab, t, t0, pos, use_g ? &*gs : nullptr, use_g ? &acc : nullptr);

  const ScalarSampler f0s(f0);
  TransportReport rep;
  rep.f = ScalarField(gr, t);
  parallel_for(gr.size(), [&](std::size_t plo, std::size_t phi) {
    for (std::size_t p = plo; p < phi; ++p) {
      const V3 y{pos[0][p], pos[1][p], pos[2][p]};
      rep.f.c[0][p] = f0s(y)[0] - acc[p];
    }
  });
  rep.f_norm = holder_norm(rep.f, alpha);
  rep.rhs_bound = holder_norm(f0, alpha) + std::abs(t - t0) * gnorm;
  rep.ratio = rep.rhs_bound > 0.0 ? rep.f_norm / rep.rhs_bound : 0.0;
  return rep;
}

double euler_reynolds_residual(const std::vector<double>& times,
                               const std::vector<VectorField>& v,
                               const std::vector<SymTensorField>* stress,
                               const std::vector<ScalarField>* pressure) {
  require(times.size() >= 3, "time slab", "residual needs at least three slices");
  require(v.size() == times.size(), "time slab", "velocity slice count mismatch");
  if (stress)
    require(stress->size() == times.size(), "time slab", "stress slice count mismatch");
  if (pressure)
    require(pressure->size() == times.size(), "time slab", "pressure slice count mismatch");
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < times.size(); ++i) {
    VectorField res = v[i + 1];
    axpy(res, -1.0, v[i - 1]);
    scale(res, 1.0 / (times[i + 1] - times[i - 1]));
    axpy(res, 1.0, divergence(outer_product(v[i], v[i])));
    if (pressure) axpy(res, 1.0, gradient((*pressure)[i]));
    if (stress) axpy(res, -1.0, divergence((*stress)[i]));
    worst = std::max(worst, norm0(res));
  }
  return worst;
}

double euler_reynolds_residual(const TimeSlab<EulerState>& slab,
                               const TimeSlab<SymTensorField>* stress) {
  require(slab.times.size() >= 3, "time slab", "residual needs at least three slices");
  if (stress)
    require(stress->times.size() == slab.times.size(), "time slab",
            "stress slice count mismatch");
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < slab.times.size(); ++i) {
    VectorField res = slab.slices[i + 1].v;
    axpy(res, -1.0, slab.slices[i - 1].v);
    scale(res, 1.0 / (slab.times[i + 1] - slab.times[i - 1]));
    axpy(res, 1.0, divergence(outer_product(slab.slices[i].v, slab.slices[i].v)));
    axpy(res, 1.0, gradient(slab.slices[i].p));
    if (stress) axpy(res, -1.0, divergence(stress->slices[i]));
    worst = std::max(worst, norm0(res));
  }
  return worst;
}

}  // namespace ciforge
