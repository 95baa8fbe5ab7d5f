#include "ciforge/spectral.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

namespace ciforge {
namespace detail {

// FFTW plan creation is not thread-safe; execution via fftw_execute_dft_* on
// distinct buffers is.  We keep one engine (with its own aligned buffers and
// plans) per grid size per thread, and serialize only plan creation.
struct FftEngine {
  int n = 0;
  double* rbuf = nullptr;
  fftw_complex* cbuf = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;

  explicit FftEngine(int n_) : n(n_) {
    static std::mutex planner_mutex;
    std::size_t rn = static_cast<std::size_t>(n) * n * n;
    std::size_t cn = static_cast<std::size_t>(n) * n * (n / 2 + 1);
    rbuf = fftw_alloc_real(rn);
    cbuf = fftw_alloc_complex(cn);
    std::lock_guard<std::mutex> lock(planner_mutex);
    fwd = fftw_plan_dft_r2c_3d(n, n, n, rbuf, cbuf, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_3d(n, n, n, cbuf, rbuf, FFTW_ESTIMATE);
    require(fwd && bwd, "fft plan", "FFTW plan creation failed for n=" + std::to_string(n));
  }
  ~FftEngine() {
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (rbuf) fftw_free(rbuf);
    if (cbuf) fftw_free(cbuf);
  }
  FftEngine(const FftEngine&) = delete;
};

FftEngine& fft_engine(int n) {
  thread_local std::map<int, std::unique_ptr<FftEngine>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftEngine>(n);
  return *slot;
}

void fft_forward(FftEngine& e, const double* in, std::complex<double>* out) {
  std::size_t rn = static_cast<std::size_t>(e.n) * e.n * e.n;
  std::size_t cn = static_cast<std::size_t>(e.n) * e.n * (e.n / 2 + 1);
  std::copy(in, in + rn, e.rbuf);
  fftw_execute(e.fwd);
  const double scale = 1.0 / static_cast<double>(rn);
  auto* src = reinterpret_cast<std::complex<double>*>(e.cbuf);
  for (std::size_t i = 0; i < cn; ++i) out[i] = src[i] * scale;
}

void fft_backward(FftEngine& e, const std::complex<double>* in, double* out) {
  std::size_t rn = static_cast<std::size_t>(e.n) * e.n * e.n;
  std::size_t cn = static_cast<std::size_t>(e.n) * e.n * (e.n / 2 + 1);
  auto* dst = reinterpret_cast<std::complex<double>*>(e.cbuf);
  std::copy(in, in + cn, dst);
  fftw_execute(e.bwd);  // unnormalized synthesis, matching fhat = DFT/n^3
  std::copy(e.rbuf, e.rbuf + rn, out);
}

}  // namespace detail

template <int NC>
SpectrumT<NC> analyze(const FieldT<NC>& f) {
  SpectrumT<NC> s;
  s.n = f.grid.n;
  s.time_tag = f.time_tag;
  auto& e = detail::fft_engine(s.n);
  for (int k = 0; k < NC; ++k) {
    s.c[k].resize(s.size());
    detail::fft_forward(e, f.c[k].data(), s.c[k].data());
  }
  return s;
}

template <int NC>
FieldT<NC> synthesize(const SpectrumT<NC>& s, double time_tag) {
  FieldT<NC> f(scratch_grid(s.n), time_tag);
  auto& e = detail::fft_engine(s.n);
  for (int k = 0; k < NC; ++k) detail::fft_backward(e, s.c[k].data(), f.c[k].data());
  return f;
}

template <int NC>
void dealias_spectrum(SpectrumT<NC>& s, double fraction) {
  const int n = s.n;
  const int kmax = static_cast<int>(n * fraction / 2.0);
  for (int i = 0; i < n; ++i) {
    int m1 = std::abs(mode_of(i, n));
    for (int j = 0; j < n; ++j) {
      int m2 = std::abs(mode_of(j, n));
      for (int k = 0; k <= n / 2; ++k) {
        if (m1 <= kmax && m2 <= kmax && k <= kmax) continue;
        std::size_t id = s.idx(i, j, k);
        for (int comp = 0; comp < NC; ++comp) s.c[comp][id] = 0.0;
      }
    }
  }
}

template <int NC>
FieldT<NC> dealias(const FieldT<NC>& f) {
  auto s = analyze(f);
  dealias_spectrum(s);
  return synthesize(s, f.time_tag);
}

template <int NC>
FieldT<NC> resample(const FieldT<NC>& f, int n_target) {
  const int ns = f.grid.n;
  if (n_target == ns) return f;
  auto src = analyze(f);
  SpectrumT<NC> dst;
  dst.n = n_target;
  dst.time_tag = f.time_tag;
  for (int k = 0; k < NC; ++k) dst.c[k].assign(dst.size(), 0.0);
  // Copy modes strictly inside both bands; Nyquist planes stay empty.
  const int band = std::min(ns, n_target) / 2 - 1;
  for (int i = 0; i < ns; ++i) {
    int m1 = mode_of(i, ns);
    if (std::abs(m1) > band) continue;
    int ti = m1 >= 0 ? m1 : n_target + m1;
    for (int j = 0; j < ns; ++j) {
      int m2 = mode_of(j, ns);
      if (std::abs(m2) > band) continue;
      int tj = m2 >= 0 ? m2 : n_target + m2;
      for (int k = 0; k <= band; ++k) {
        std::size_t is = src.idx(i, j, k);
        std::size_t id = dst.idx(ti, tj, k);
        for (int comp = 0; comp < NC; ++comp) dst.c[comp][id] = src.c[comp][is];
      }
    }
  }
  return synthesize(dst, f.time_tag);
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Applies out[comp] += factor(m) * in[src_comp] over all modes, with the
// derivative multiplier 2*pi*i*m_axis.
template <int NCO, int NCI>
void apply_derivative(SpectrumT<NCO>& out, int oc, const SpectrumT<NCI>& in, int ic, int axis,
                      double sign = 1.0) {
  const int n = in.n;
  for (int i = 0; i < n; ++i) {
    double m1 = deriv_mode(i, n);
    for (int j = 0; j < n; ++j) {
      double m2 = deriv_mode(j, n);
      for (int k = 0; k <= n / 2; ++k) {
        double m3 = (2 * k == n) ? 0.0 : k;
        double m = axis == 0 ? m1 : (axis == 1 ? m2 : m3);
        std::size_t id = in.idx(i, j, k);
        std::complex<double> mult(0.0, sign * kTwoPi * m);
        out.c[oc][id] += mult * in.c[ic][id];
      }
    }
  }
}

template <int NC>
SpectrumT<NC> zero_spectrum_like(int n, double time_tag) {
  SpectrumT<NC> s;
  s.n = n;
  s.time_tag = time_tag;
  for (int k = 0; k < NC; ++k) s.c[k].assign(s.size(), 0.0);
  return s;
}

}  // namespace

VectorField gradient(const ScalarField& f) {
  auto s = analyze(f);
  auto out = zero_spectrum_like<3>(s.n, s.time_tag);
  for (int axis = 0; axis < 3; ++axis) apply_derivative(out, axis, s, 0, axis);
  return synthesize(out, f.time_tag);
}

ScalarField divergence(const VectorField& v) {
  auto s = analyze(v);
  auto out = zero_spectrum_like<1>(s.n, s.time_tag);
  for (int axis = 0; axis < 3; ++axis) apply_derivative(out, 0, s, axis, axis);
  return synthesize(out, v.time_tag);
}

VectorField curl(const VectorField& v) {
  auto s = analyze(v);
  auto out = zero_spectrum_like<3>(s.n, s.time_tag);
  // (curl v)_i = eps_ijk d_j v_k
  apply_derivative(out, 0, s, 2, 1);        // + d_y v_z
  apply_derivative(out, 0, s, 1, 2, -1.0);  // - d_z v_y
  apply_derivative(out, 1, s, 0, 2);        // + d_z v_x
  apply_derivative(out, 1, s, 2, 0, -1.0);  // - d_x v_z
  apply_derivative(out, 2, s, 1, 0);        // + d_x v_y
  apply_derivative(out, 2, s, 0, 1, -1.0);  // - d_y v_x
  return synthesize(out, v.time_tag);
}

VectorField divergence(const SymTensorField& t) {
  auto s = analyze(t);
  auto out = zero_spectrum_like<3>(s.n, s.time_tag);
  // Component storage (00,11,22,01,02,12); (div S)^i = d_j S^{ij}.
  const int comp[3][3] = {{0, 3, 4}, {3, 1, 5}, {4, 5, 2}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) apply_derivative(out, i, s, comp[i][j], j);
  return synthesize(out, t.time_tag);
}

FieldT<9> gradient(const VectorField& v) {
  auto s = analyze(v);
  auto out = zero_spectrum_like<9>(s.n, s.time_tag);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) apply_derivative(out, 3 * i + j, s, i, j);
  return synthesize(out, v.time_tag);
}

SymTensorField symmetric_gradient(const VectorField& v) {
  auto g = gradient(v);
  SymTensorField out(v.grid, v.time_tag);
  const int pair[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
  for (int c = 0; c < 6; ++c) {
    int i = pair[c][0], j = pair[c][1];
    for (std::size_t id = 0; id < out.grid.size(); ++id)
      out.c[c][id] = 0.5 * (g.c[3 * i + j][id] + g.c[3 * j + i][id]);
  }
  return out;
}

ScalarField laplacian(const ScalarField& f) {
  auto s = analyze(f);
  const int n = s.n;
  for (int i = 0; i < n; ++i) {
    double m1 = deriv_mode(i, n);
    for (int j = 0; j < n; ++j) {
      double m2 = deriv_mode(j, n);
      for (int k = 0; k <= n / 2; ++k) {
        double m3 = (2 * k == n) ? 0.0 : k;
        double k2 = kTwoPi * kTwoPi * (m1 * m1 + m2 * m2 + m3 * m3);
        s.c[0][s.idx(i, j, k)] *= -k2;
      }
    }
  }
  return synthesize(s, f.time_tag);
}

namespace {

int product_grid(int n) { return 3 * n / 2; }

}  // namespace

SymTensorField outer_product(const VectorField& a, const VectorField& b) {
  require(a.grid == b.grid, "field shape", "outer_product on mismatched grids");
  const int n = a.grid.n;
  const int N = product_grid(n);
  auto au = resample(a, N);
  auto bu = resample(b, N);
  SymTensorField big(scratch_grid(N), a.time_tag);
  const int pair[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
  for (int c = 0; c < 6; ++c) {
    int i = pair[c][0], j = pair[c][1];
    for (std::size_t id = 0; id < big.grid.size(); ++id)
      big.c[c][id] = 0.5 * (au.c[i][id] * bu.c[j][id] + au.c[j][id] * bu.c[i][id]);
  }
  return resample(big, n);
}

VectorField advect(const VectorField& v, const VectorField& w) {
  require(v.grid == w.grid, "field shape", "advect on mismatched grids");
  const int n = v.grid.n;
  const int N = product_grid(n);
  auto vu = resample(v, N);
  auto gw = gradient(w);      // 9 components on n
  auto gu = resample(gw, N);  // band-limited, exact
  VectorField big(scratch_grid(N), w.time_tag);
  for (int i = 0; i < 3; ++i)
    for (std::size_t id = 0; id < big.grid.size(); ++id)
      big.c[i][id] =
          vu.c[0][id] * gu.c[3 * i][id] + vu.c[1][id] * gu.c[3 * i + 1][id] + vu.c[2][id] * gu.c[3 * i + 2][id];
  return resample(big, n);
}

template <int NC>
FieldT<NC> advect_components(const VectorField& v, const FieldT<NC>& g) {
  require(v.grid == g.grid, "field shape", "advect on mismatched grids");
  const int n = v.grid.n;
  const int N = product_grid(n);
  auto vu = resample(v, N);
  FieldT<NC> out(g.grid, g.time_tag);
  ScalarField comp(g.grid);
  for (int c = 0; c < NC; ++c) {
    comp.c[0] = g.c[c];
    auto gu = resample(gradient(comp), N);
    ScalarField big(scratch_grid(N));
    for (std::size_t id = 0; id < big.grid.size(); ++id)
      big.c[0][id] = vu.c[0][id] * gu.c[0][id] + vu.c[1][id] * gu.c[1][id] + vu.c[2][id] * gu.c[2][id];
    out.c[c] = resample(big, n).c[0];
  }
  return out;
}

ScalarField multiply(const ScalarField& a, const ScalarField& b) {
  require(a.grid == b.grid, "field shape", "multiply on mismatched grids");
  const int n = a.grid.n;
  const int N = product_grid(n);
  auto au = resample(a, N);
  auto bu = resample(b, N);
  ScalarField big(scratch_grid(N), a.time_tag);
  for (std::size_t id = 0; id < big.grid.size(); ++id) big.c[0][id] = au.c[0][id] * bu.c[0][id];
  return resample(big, n);
}

VectorField multiply(const ScalarField& a, const VectorField& b) {
  require(a.grid == b.grid, "field shape", "multiply on mismatched grids");
  const int n = a.grid.n;
  const int N = product_grid(n);
  auto au = resample(a, N);
  auto bu = resample(b, N);
  VectorField big(scratch_grid(N), b.time_tag);
  for (int i = 0; i < 3; ++i)
    for (std::size_t id = 0; id < big.grid.size(); ++id) big.c[i][id] = au.c[0][id] * bu.c[i][id];
  return resample(big, n);
}

template <int NC>
double band_mass_above(const FieldT<NC>& f, int limit) {
  auto s = analyze(f);
  const int n = s.n;
  double total = 0.0, high = 0.0;
  for (int i = 0; i < n; ++i) {
    int m1 = std::abs(mode_of(i, n));
    for (int j = 0; j < n; ++j) {
      int m2 = std::abs(mode_of(j, n));
      for (int k = 0; k <= n / 2; ++k) {
        // Half-complex storage: interior k-planes represent a conjugate pair.
        double mult = (k == 0 || 2 * k == n) ? 1.0 : 2.0;
        std::size_t id = s.idx(i, j, k);
        double e = 0.0;
        for (int comp = 0; comp < NC; ++comp) e += std::norm(s.c[comp][id]);
        e *= mult;
        total += e;
        if (m1 >= limit || m2 >= limit || k >= limit) high += e;
      }
    }
  }
  return total > 0.0 ? high / total : 0.0;
}

// Explicit instantiations for the component counts used in the project.
#define CIFORGE_INSTANTIATE(NC)                                                 \
  template SpectrumT<NC> analyze<NC>(const FieldT<NC>&);                        \
  template FieldT<NC> synthesize<NC>(const SpectrumT<NC>&, double);             \
  template void dealias_spectrum<NC>(SpectrumT<NC>&, double);                   \
  template FieldT<NC> dealias<NC>(const FieldT<NC>&);                           \
  template FieldT<NC> resample<NC>(const FieldT<NC>&, int);                     \
  template FieldT<NC> advect_components<NC>(const VectorField&, const FieldT<NC>&); \
  template double band_mass_above<NC>(const FieldT<NC>&, int);

CIFORGE_INSTANTIATE(1)
CIFORGE_INSTANTIATE(3)
CIFORGE_INSTANTIATE(6)
CIFORGE_INSTANTIATE(9)
CIFORGE_INSTANTIATE(12)
#undef CIFORGE_INSTANTIATE

}  // namespace ciforge
