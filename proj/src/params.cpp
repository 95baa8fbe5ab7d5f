#include "ciforge/params.hpp"

#include <cfloat>
#include <cmath>
#include <limits>
#include <numeric>

namespace ciforge {

namespace {

constexpr double kPi = 3.14159265358979323846;

CheckRecord record(std::string name, double lhs, double rhs, bool strict = true) {
  CheckRecord r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = rhs - lhs;
  r.strict = strict;
  r.pass = strict ? (lhs < rhs) : (lhs <= rhs);
  return r;
}

bool finish(ValidationReport& rep) {
  rep.all_pass = true;
  for (const auto& c : rep.checks) rep.all_pass = rep.all_pass && c.pass;
  return rep.all_pass;
}

// a^(b^q) in extended precision with an explicit range guard.
long double base_power(const SchemeParams& p, int q) {
  long double e = 1.0L;
  for (int i = 0; i < q; ++i) e *= static_cast<long double>(p.b);
  long double log2x = e * std::log2(static_cast<long double>(p.a));
  if (!(log2x < LDBL_MAX_EXP - 8))
    fail("scales overflow", "a^(b^q) exceeds extended-precision range at q=" + std::to_string(q));
  return std::exp2(log2x);
}

long double lambda_of(const SchemeParams& p, int q) {
  return 2.0L * static_cast<long double>(kPi) * std::ceil(base_power(p, q));
}

long double delta_of(const SchemeParams& p, int q) {
  long double lam = lambda_of(p, q);
  return std::exp2(-2.0L * static_cast<long double>(p.beta) * std::log2(lam));
}

long double pow_ld(long double x, long double e) { return std::exp2(e * std::log2(x)); }

}  // namespace

const char* QScales::formulas() {
  return "lambda_q = 2*pi*ceil(a^(b^q)); delta_q = lambda_q^(-2*beta); "
         "theta_q = (delta_{q-1}^(1/2)*lambda_{q-1}^(1+3*alpha))^(-1) (theta_0 := T); "
         "tau_q = lambda_{q-1}^(-gamma)*theta_q (tau_0 := T/15); "
         "ell_q = delta_{q+1}^(1/2)/(delta_q^(1/2)*lambda_q^(1+gamma/2+3*alpha/2))";
}

const CheckRecord* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

QScales scales(const SchemeParams& p, int q) {
  require(q >= 0, "scales precondition", "q must be >= 0");
  QScales s;
  s.q = q;
  long double lam = lambda_of(p, q);
  s.lambda_int = static_cast<double>(std::ceil(base_power(p, q)));
  s.lambda_q = static_cast<double>(lam);
  s.delta_q = static_cast<double>(delta_of(p, q));
  if (q == 0) {
    // Level 0 has a single slab spanning the whole horizon; theta_0 only
    // appears in reports, never in a constructed inequality.
    s.theta_q = p.T;
    s.tau_q = p.T / 15.0;
  } else {
    long double lam_prev = lambda_of(p, q - 1);
    long double delta_prev = delta_of(p, q - 1);
    long double theta =
        1.0L / (std::sqrt(delta_prev) * pow_ld(lam_prev, 1.0L + 3.0L * p.alpha));
    s.theta_q = static_cast<double>(theta);
    s.tau_q = static_cast<double>(pow_ld(lam_prev, -static_cast<long double>(p.gamma)) * theta);
  }
  long double delta_next = delta_of(p, q + 1);
  long double ell = std::sqrt(delta_next) /
                    (std::sqrt(delta_of(p, q)) *
                     pow_ld(lam, 1.0L + 0.5L * p.gamma + 1.5L * p.alpha));
  s.ell_q = static_cast<double>(ell);
  return s;
}

ValidationReport validate(const SchemeParams& p, int chain_horizon) {
  ValidationReport rep;
  rep.checks.push_back(record("beta_positive", 0.0, p.beta));
  rep.checks.push_back(record("beta_below_one_third", p.beta, 1.0 / 3.0));
  rep.checks.push_back(record("b_above_one", 1.0, p.b));
  rep.checks.push_back(record("b_upper", p.b, (1.0 - p.beta) / (2.0 * p.beta)));
  rep.checks.push_back(record("gamma_positive", 0.0, p.gamma));
  rep.checks.push_back(record(
      "gamma_upper", p.gamma,
      (p.b - 1.0) * (1.0 - p.beta - 2.0 * p.beta * p.b) / (p.b + 1.0)));
  rep.checks.push_back(record("alpha_positive", 0.0, p.alpha));
  // Amplitude-gain exponent inequality: the glued-stress exponent on the left
  // must sit strictly below the next-level stress budget on the right.
  rep.checks.push_back(record(
      "amplitude_exponent_gain",
      -p.beta * p.b - p.beta + 1.0 + p.gamma - p.b + 5.0 * p.alpha * p.b,
      -2.0 * p.beta * p.b * p.b - p.gamma * p.b - 3.0 * p.alpha * p.b));
  rep.checks.push_back(record("alpha_vs_b_margin", 6.0 * p.alpha * p.b,
                              (p.b - 1.0) * (1.0 - p.beta), /*strict=*/false));
  // a-floor conditions: the bad set must shrink by a definite factor,
  rep.checks.push_back(
      record("bad_set_shrink_factor", 10.0 * kPi * std::pow(p.a, -p.gamma), 1.0));
  // and consecutive time scales must nest for every requested level.
  for (int q = 0; q <= chain_horizon; ++q) {
    bool ok = true;
    double lhs = std::numeric_limits<double>::infinity(), rhs = 0;
    try {
      QScales cur = scales(p, q), next = scales(p, q + 1);
      lhs = 2.0 * next.theta_q;
      rhs = cur.tau_q;
    } catch (const Fault&) {
      ok = false;
    }
    CheckRecord r = record("theta_below_tau_q" + std::to_string(q), lhs, rhs);
    if (!ok) r.pass = false;
    rep.checks.push_back(r);
  }
  finish(rep);
  return rep;
}

ValidationReport check_chain(const SchemeParams& p, int q) {
  require(q >= 0, "chain precondition", "q must be >= 0");
  ValidationReport rep;
  QScales cur = scales(p, q);
  QScales next = scales(p, q + 1);
  QScales next2 = scales(p, q + 2);
  rep.checks.push_back(record("five_tau_below_theta", 5.0 * next.tau_q, next.theta_q));
  rep.checks.push_back(record("two_theta_below_tau", 2.0 * next.theta_q, cur.tau_q));
  rep.checks.push_back(
      record("ell_above_lambda_neg_3_2", std::pow(cur.lambda_q, -1.5), cur.ell_q));
  rep.checks.push_back(record("ell_below_lambda_inv", cur.ell_q, 1.0 / cur.lambda_q));
  rep.checks.push_back(record("ell_inv_below_next_lambda", 1.0 / cur.ell_q, next.lambda_q));
  // Stress-amplitude chain: glued-stress size at level q stays below the
  // stress budget of level q+1.
  rep.checks.push_back(record(
      "stress_amplitude_chain",
      std::sqrt(next.delta_q) * std::sqrt(cur.delta_q) *
          std::pow(cur.lambda_q, 1.0 + p.gamma) *
          std::pow(next.lambda_q, 5.0 * p.alpha - 1.0),
      next2.delta_q * std::pow(next.lambda_q, -p.gamma - 3.0 * p.alpha),
      /*strict=*/false));
  finish(rep);
  return rep;
}

double find_a_floor(SchemeParams p, int q, double a_hi) {
  auto passes = [&](double a) {
    p.a = a;
    try {
      ValidationReport chain = check_chain(p, q);
      const char* floors[] = {"bad_set_shrink_factor", "theta_below_tau_q0"};
      ValidationReport val = validate(p, q);
      for (const auto& c : chain.checks)
        if (!c.pass) return false;
      for (const char* f : floors)
        if (const CheckRecord* r = val.find(f); r && !r->pass) return false;
      return true;
    } catch (const Fault&) {
      return false;
    }
  };
  double lo = 2.0, hi = lo;
  if (passes(lo)) return lo;
  while (hi < a_hi && !passes(hi)) hi *= 2.0;
  if (hi >= a_hi && !passes(hi)) return std::numeric_limits<double>::infinity();
  // Bisection in log a on [lo (fails), hi (passes)].
  for (int it = 0; it < 200; ++it) {
    double mid = std::sqrt(lo * hi);
    (passes(mid) ? hi : lo) = mid;
    if (hi / lo < 1.0 + 1e-12) break;
  }
  return hi;
}

DimensionBounds dimension_bounds(double beta, double b, double gamma, double alpha) {
  require(beta > 0.0 && beta < 1.0 / 3.0, "dimension domain",
          "beta must lie in (0, 1/3)");
  DimensionBounds d;
  d.box_dim_bound = 1.0 - gamma * b / ((b - 1.0) * (1.0 - beta + 3.0 * alpha + gamma));
  d.lower_bound = 2.0 * beta / (1.0 - beta);
  d.theorem_bound = 0.5 + 0.5 * d.lower_bound;
  return d;
}

namespace {
Rational reduced(long long num, long long den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  long long g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Rational{num, den};
}
}  // namespace

Rational lower_bound_rational(long long num, long long den) {
  require(den > 0 && num > 0 && 3 * num <= den, "dimension domain",
          "beta must lie in (0, 1/3]");
  // 2*(num/den) / (1 - num/den) = 2*num / (den - num)
  return reduced(2 * num, den - num);
}

Rational theorem_bound_rational(long long num, long long den) {
  require(den > 0 && num > 0 && 3 * num <= den, "dimension domain",
          "beta must lie in (0, 1/3]");
  // (1 + beta) / (2*(1 - beta)) = (den + num) / (2*(den - num))
  return reduced(den + num, 2 * (den - num));
}

double infimum_scan(double beta) {
  require(beta > 0.0 && beta < 1.0 / 3.0, "dimension domain",
          "beta must lie in (0, 1/3)");
  double best = std::numeric_limits<double>::infinity();
  double b_max = (1.0 - beta) / (2.0 * beta);
  // Refining scan: the bound decreases towards the corner b->1+,
  // gamma->sup(b, alpha), alpha->0; each round shrinks the margins.
  for (int j = 1; j <= 8; ++j) {
    double eps = std::pow(10.0, -j);
    for (double bstep : {1.0 + eps, 1.0 + 3.0 * eps, std::min(1.0 + 100.0 * eps, 0.5 * (1.0 + b_max))}) {
      double b = bstep;
      if (b <= 1.0 || b >= b_max) continue;
      double gmax = (b - 1.0) * (1.0 - beta - 2.0 * beta * b) / (b + 1.0);
      if (gmax <= 0) continue;
      // Keep alpha small enough that the sharpened gamma ceiling
      // gmax - 8*alpha*b/(b+1) still admits gamma below.
      double alpha = gmax * eps * (b + 1.0) / (16.0 * b);
      for (double f : {1.0 - eps, 1.0 - 0.3 * eps}) {
        double gamma = f * (gmax - 8.0 * alpha * b / (b + 1.0));
        if (gamma <= 0) continue;
        SchemeParams p;
        p.beta = beta;
        p.b = b;
        p.gamma = gamma;
        p.alpha = alpha;
        p.a = 1e6;  // the box bound itself does not involve a
        ValidationReport v = validate(p, 0);
        bool adm = true;
        for (const auto& c : v.checks) {
          if (c.name.rfind("theta_below_tau", 0) == 0 || c.name == "bad_set_shrink_factor")
            continue;  // a-floor conditions do not constrain the exponents
          adm = adm && c.pass;
        }
        if (!adm) continue;
        best = std::min(best, dimension_bounds(beta, b, gamma, alpha).box_dim_bound);
      }
    }
  }
  return best;
}

}  // namespace ciforge
