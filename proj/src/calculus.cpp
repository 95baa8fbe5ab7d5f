#include "ciforge/calculus.hpp"

#include <cmath>

#include "ciforge/holder.hpp"
#include "ciforge/spectral.hpp"

namespace ciforge {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
using SymbolValue = std::array<std::complex<double>, 18>;

// Symmetric-tensor component order (00,11,22,01,02,12) -> index pairs.
constexpr int kSymPair[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};

SymbolValue inverse_divergence_symbol(const std::array<int, 3>& m) {
  SymbolValue out{};
  double norm2 = static_cast<double>(m[0]) * m[0] + m[1] * m[1] + static_cast<double>(m[2]) * m[2];
  if (norm2 == 0.0) return out;
  double len = std::sqrt(norm2);
  double xi[3] = {m[0] / len, m[1] / len, m[2] / len};
  double kappa = kTwoPi * len;
  for (int c = 0; c < 6; ++c) {
    int i = kSymPair[c][0], j = kSymPair[c][1];
    for (int k = 0; k < 3; ++k) {
      double val = 0.5 * xi[i] * xi[j] * xi[k] + 0.5 * (i == j ? xi[k] : 0.0) -
                   xi[i] * (j == k ? 1.0 : 0.0) - xi[j] * (i == k ? 1.0 : 0.0);
      out[3 * c + k] = std::complex<double>(0.0, val / kappa);
    }
  }
  return out;
}

SymbolValue biot_savart_symbol(const std::array<int, 3>& m) {
  SymbolValue out{};
  double norm2 = static_cast<double>(m[0]) * m[0] + m[1] * m[1] + static_cast<double>(m[2]) * m[2];
  if (norm2 == 0.0) return out;
  // zhat_i = i eps_{ijk} m_j vhat_k / (2 pi |m|^2)
  double s = 1.0 / (kTwoPi * norm2);
  auto at = [&](int i, int k) -> std::complex<double>& { return out[3 * i + k]; };
  at(0, 2) = std::complex<double>(0.0, m[1] * s);
  at(0, 1) = std::complex<double>(0.0, -m[2] * s);
  at(1, 0) = std::complex<double>(0.0, m[2] * s);
  at(1, 2) = std::complex<double>(0.0, -m[0] * s);
  at(2, 1) = std::complex<double>(0.0, m[0] * s);
  at(2, 0) = std::complex<double>(0.0, -m[1] * s);
  return out;
}

SymbolValue leray_symbol(const std::array<int, 3>& m) {
  SymbolValue out{};
  double norm2 = static_cast<double>(m[0]) * m[0] + m[1] * m[1] + static_cast<double>(m[2]) * m[2];
  if (norm2 == 0.0) return out;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      out[3 * i + k] = (i == k ? 1.0 : 0.0) - m[i] * m[k] / norm2;
  return out;
}

SymbolValue inverse_laplacian_symbol(const std::array<int, 3>& m) {
  SymbolValue out{};
  double norm2 = static_cast<double>(m[0]) * m[0] + m[1] * m[1] + static_cast<double>(m[2]) * m[2];
  if (norm2 == 0.0) return out;
  out[0] = -1.0 / (kTwoPi * kTwoPi * norm2);
  return out;
}

// Faults unless every component mean is below 1e-10 * ||f||_0 (zero fields
// pass trivially).
void require_mean_zero(const VectorField& f, const std::string& op) {
  double scale = norm0(f);
  if (scale == 0.0) return;
  auto m = mean(f);
  for (int c = 0; c < 3; ++c)
    require(std::abs(m[c]) < 1e-10 * scale, "nonzero mean",
            op + " requires a mean-zero field; component " + std::to_string(c) + " mean = " +
                std::to_string(m[c]));
}

}  // namespace

MultiplierOp inverse_divergence_op() { return {"inverse_divergence", 6, 3, &inverse_divergence_symbol}; }
MultiplierOp biot_savart_op() { return {"biot_savart", 3, 3, &biot_savart_symbol}; }
MultiplierOp leray_op() { return {"leray", 3, 3, &leray_symbol}; }
MultiplierOp inverse_laplacian_op() { return {"inverse_laplacian", 1, 1, &inverse_laplacian_symbol}; }

template <int NCI, int NCO>
FieldT<NCO> apply_multiplier(const MultiplierOp& op, const FieldT<NCI>& f) {
  require(op.in_components == NCI && op.out_components == NCO, "multiplier shape",
          op.name + " expects " + std::to_string(op.in_components) + "->" +
              std::to_string(op.out_components) + " components");
  auto s = analyze(f);
  SpectrumT<NCO> out;
  out.n = s.n;
  out.time_tag = s.time_tag;
  for (int c = 0; c < NCO; ++c) out.c[c].assign(out.size(), 0.0);
  const int n = s.n;
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
    for (int i = static_cast<int>(lo); i < static_cast<int>(hi); ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k <= n / 2; ++k) {
          std::array<int, 3> m = {mode_of(i, n), mode_of(j, n), k};
          if (m[0] == 0 && m[1] == 0 && m[2] == 0) continue;
          auto sym = op.symbol(m);
          std::size_t id = s.idx(i, j, k);
          for (int r = 0; r < NCO; ++r) {
            std::complex<double> acc = 0.0;
            for (int c = 0; c < NCI; ++c) acc += sym[NCI * r + c] * s.c[c][id];
            out.c[r][id] = acc;
          }
        }
      }
    }
  });
  return synthesize(out, f.time_tag);
}

template FieldT<6> apply_multiplier<3, 6>(const MultiplierOp&, const FieldT<3>&);
template FieldT<3> apply_multiplier<3, 3>(const MultiplierOp&, const FieldT<3>&);
template FieldT<1> apply_multiplier<1, 1>(const MultiplierOp&, const FieldT<1>&);

SymTensorField inverse_divergence(const VectorField& f) {
  require_mean_zero(f, "inverse_divergence");
  return apply_multiplier<3, 6>(inverse_divergence_op(), f);
}

VectorField biot_savart(const VectorField& v) {
  require_mean_zero(v, "biot_savart");
  return apply_multiplier<3, 3>(biot_savart_op(), v);
}

SymTensorField rcurl(const VectorField& F) {
  // curl output is exactly mean-zero, no precondition to enforce.
  return apply_multiplier<3, 6>(inverse_divergence_op(), curl(F));
}

ScalarField solve_pressure(const VectorField& v, const SymTensorField& R) {
  require(v.grid == R.grid, "field shape", "solve_pressure on mismatched grids");
  auto T = outer_product(v, v);
  axpy(T, -1.0, R);
  auto s = analyze(T);
  ScalarSpectrum p;
  p.n = s.n;
  p.time_tag = v.time_tag;
  p.c[0].assign(p.size(), 0.0);
  const int n = s.n;
  for (int i = 0; i < n; ++i) {
    double m0 = deriv_mode(i, n);
    for (int j = 0; j < n; ++j) {
      double m1 = deriv_mode(j, n);
      for (int k = 0; k <= n / 2; ++k) {
        double m2 = (2 * k == n) ? 0.0 : k;
        double norm2 = m0 * m0 + m1 * m1 + m2 * m2;
        if (norm2 == 0.0) continue;
        std::size_t id = s.idx(i, j, k);
        std::complex<double> dd = m0 * m0 * s.c[0][id] + m1 * m1 * s.c[1][id] +
                                  m2 * m2 * s.c[2][id] +
                                  2.0 * (m0 * m1 * s.c[3][id] + m0 * m2 * s.c[4][id] +
                                         m1 * m2 * s.c[5][id]);
        p.c[0][id] = -dd / norm2;
      }
    }
  }
  return synthesize(p, v.time_tag);
}

VectorField leray_project(const VectorField& v) {
  auto out = apply_multiplier<3, 3>(leray_op(), v);
  auto m = mean(v);  // constant fields are divergence-free; keep the mean
  for (int c = 0; c < 3; ++c)
    for (auto& x : out.c[c]) x += m[c];
  return out;
}

double stationary_phase_probe(const ScalarField& a, const VectorField& phi_displacement,
                              const std::array<int, 3>& k, double lambda, double alpha) {
  require(a.grid == phi_displacement.grid, "field shape", "probe inputs on mismatched grids");
  double cycles = lambda / kTwoPi;
  require(std::abs(cycles - std::round(cycles)) < 1e-9, "phase frequency",
          "lambda must be an integer multiple of 2 pi");
  const Grid& g = a.grid;
  {
    // Degeneracy guard on grad Phi = Id + grad(displacement); scoped so the
    // 9-component Jacobian is released before the oscillation fields.
    auto gd = gradient(phi_displacement);
    double min_det = 1e300;
    for (std::size_t id = 0; id < g.size(); ++id) {
      double J[3][3];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) J[r][c] = (r == c ? 1.0 : 0.0) + gd.c[3 * r + c][id];
      double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                   J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                   J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
      min_det = std::min(min_det, std::abs(det));
    }
    require(min_det >= 0.1, "phase map degenerate",
            "det(grad Phi) reaches " + std::to_string(min_det) + " on the grid");
  }

  // Complex amplitude a e^{i lambda k.Phi} riding on e3, real and imaginary
  // parts handled one after another to bound peak memory.
  const int n = g.n;
  FieldT<12> pair(g, a.time_tag);
  for (auto& v : pair.c) std::vector<double>().swap(v);  // filled by moves below
  for (int part = 0; part < 2; ++part) {
    VectorField f(g, a.time_tag);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int kk = 0; kk < n; ++kk) {
          std::size_t id = g.idx(i, j, kk);
          V3 x = g.point(i, j, kk);
          V3 phi = {x.x + phi_displacement.c[0][id], x.y + phi_displacement.c[1][id],
                    x.z + phi_displacement.c[2][id]};
          double theta = lambda * (k[0] * phi.x + k[1] * phi.y + k[2] * phi.z);
          f.c[2][id] = a.c[0][id] * (part == 0 ? std::cos(theta) : std::sin(theta));
        }
    // The operator acts on oscillations; remove the (tiny) discrete mean.
    auto m = mean(f);
    for (int c = 0; c < 3; ++c)
      for (auto& x : f.c[c]) x -= m[c];
    auto r = apply_multiplier<3, 6>(inverse_divergence_op(), f);
    for (int c = 0; c < 6; ++c) pair.c[6 * part + c] = std::move(r.c[c]);
  }
  return holder_norm(pair, alpha);
}

double cz_commutator_probe(const VectorField& b, const ScalarField& f, double alpha) {
  require(b.grid == f.grid, "field shape", "probe inputs on mismatched grids");
  double div_scale = 1.0 + norm0(gradient(b));
  require(norm0(divergence(b)) <= 1e-8 * div_scale, "divergence-free",
          "cz_commutator_probe requires div b = 0");
  VectorField fe3(f.grid, f.time_tag);
  fe3.c[2] = f.c[0];
  auto term1 = rcurl(advect(b, fe3));               // rcurl(b.grad (f e3))
  auto term2 = advect_components(b, rcurl(fe3));    // b.grad rcurl(f e3)
  axpy(term1, -1.0, term2);
  return holder_norm(term1, alpha);
}

}  // namespace ciforge
