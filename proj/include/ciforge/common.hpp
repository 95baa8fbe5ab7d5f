#pragma once
// Shared small utilities: fault type, deterministic RNG, 3-vectors and
// symmetric 3x3 tensors in the 6-component representation, a deterministic
// parallel loop, and compensated summation.
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ciforge {

// A guard or precondition violation.  `anchor` names the rule being enforced
// (guard faults surface it verbatim in CLI error messages).
class Fault : public std::runtime_error {
 public:
  Fault(std::string anchor_, const std::string& msg)
      : std::runtime_error(anchor_.empty() ? msg : anchor_ + ": " + msg),
        anchor(std::move(anchor_)) {}
  std::string anchor;
};

[[noreturn]] inline void fail(const std::string& anchor, const std::string& msg) {
  throw Fault(anchor, msg);
}

inline void require(bool ok, const std::string& anchor, const std::string& msg) {
  if (!ok) fail(anchor, msg);
}

// x reduced to [0,1): torus coordinate wrap.
inline double frac(double x) {
  double f = x - std::floor(x);
  return f < 1.0 ? f : 0.0;
}

// Deterministic RNG: fixed engine + explicitly coded distributions so streams
// are identical for a given seed on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // xorshift* variant; full-period, portable.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }
  // Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  // Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double c = std::cos(2.0 * M_PI * u2), s = std::sin(2.0 * M_PI * u2);
    cache_ = r * s;
    have_cache_ = true;
    return r * c;
  }

 private:
  std::uint64_t state_;
  bool have_cache_ = false;
  double cache_ = 0.0;
};

struct V3 {
  double x = 0, y = 0, z = 0;
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline V3 operator+(V3 a, V3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline V3 operator-(V3 a, V3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline V3 operator*(double s, V3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(V3 a, V3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline V3 cross(V3 a, V3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(V3 a) { return std::sqrt(dot(a, a)); }

// Symmetric 3x3 tensor, components ordered (00,11,22,01,02,12).
// This component order is used for SymTensorField storage and serialization.
struct Sym3 {
  std::array<double, 6> c{};
  static constexpr int I00 = 0, I11 = 1, I22 = 2, I01 = 3, I02 = 4, I12 = 5;
  double operator()(int i, int j) const {
    if (i == j) return c[i];
    int lo = i < j ? i : j, hi = i < j ? j : i;
    if (lo == 0 && hi == 1) return c[3];
    if (lo == 0 && hi == 2) return c[4];
    return c[5];
  }
  static Sym3 identity() { return Sym3{{1, 1, 1, 0, 0, 0}}; }
};

inline Sym3 operator+(Sym3 a, Sym3 b) {
  Sym3 r;
  for (int i = 0; i < 6; ++i) r.c[i] = a.c[i] + b.c[i];
  return r;
}
inline Sym3 operator-(Sym3 a, Sym3 b) {
  Sym3 r;
  for (int i = 0; i < 6; ++i) r.c[i] = a.c[i] - b.c[i];
  return r;
}
inline Sym3 operator*(double s, Sym3 a) {
  Sym3 r;
  for (int i = 0; i < 6; ++i) r.c[i] = s * a.c[i];
  return r;
}
inline V3 mul(const Sym3& s, V3 v) {
  return {s(0, 0) * v.x + s(0, 1) * v.y + s(0, 2) * v.z,
          s(1, 0) * v.x + s(1, 1) * v.y + s(1, 2) * v.z,
          s(2, 0) * v.x + s(2, 1) * v.y + s(2, 2) * v.z};
}
// Frobenius norm (off-diagonal entries counted twice).
inline double frobenius(const Sym3& s) {
  return std::sqrt(s.c[0] * s.c[0] + s.c[1] * s.c[1] + s.c[2] * s.c[2] +
                   2 * (s.c[3] * s.c[3] + s.c[4] * s.c[4] + s.c[5] * s.c[5]));
}
// A * S * A^T for a full 3x3 matrix A (rows a0,a1,a2).
inline Sym3 congruence(const std::array<V3, 3>& a, const Sym3& s) {
  std::array<V3, 3> sa;  // S * A^T columns = S * a_i
  for (int i = 0; i < 3; ++i) sa[i] = mul(s, a[i]);
  Sym3 r;
  r.c[0] = dot(a[0], sa[0]);
  r.c[1] = dot(a[1], sa[1]);
  r.c[2] = dot(a[2], sa[2]);
  r.c[3] = dot(a[0], sa[1]);
  r.c[4] = dot(a[0], sa[2]);
  r.c[5] = dot(a[1], sa[2]);
  return r;
}

// Number of workers parallel_for uses (>=1); override with CIFORGE_THREADS.
inline int worker_count() {
  static const int n = [] {
    if (const char* e = std::getenv("CIFORGE_THREADS")) {
      int v = std::atoi(e);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
  }();
  return n;
}

// Deterministic parallel loop: [0,n) split into fixed contiguous chunks, one
// per worker.  The partition depends only on n, never on scheduling, and each
// index is written by exactly one worker, so results are bit-identical
// regardless of the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  int workers = worker_count();
  if (workers <= 1 || n < 2) {
    if (n) body(0, n);
    return;
  }
  std::size_t w = static_cast<std::size_t>(workers);
  if (w > n) w = n;
  std::size_t chunk = (n + w - 1) / w;
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

// Variant passing the chunk ordinal, for per-worker reduction buffers.  The
// chunk layout matches parallel_for, so reductions combined in ordinal order
// are deterministic.
inline void parallel_for_indexed(
    std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  int workers = worker_count();
  if (workers <= 1 || n < 2) {
    if (n) body(0, n, 0);
    return;
  }
  std::size_t w = static_cast<std::size_t>(workers);
  if (w > n) w = n;
  std::size_t chunk = (n + w - 1) / w;
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi, t] { body(lo, hi, t); });
  }
  for (auto& th : pool) th.join();
}

// Compensated (Kahan) sum of a range.
inline double kahan_sum(const double* p, std::size_t n) {
  double s = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double y = p[i] - comp;
    double t = s + y;
    comp = (t - s) - y;
    s = t;
  }
  return s;
}

}  // namespace ciforge
