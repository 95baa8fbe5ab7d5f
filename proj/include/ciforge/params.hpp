#pragma once
// Scheme parameter bookkeeping: the (beta, b, gamma, alpha, a, T, M) tuple,
// the per-step derived scales, admissibility checks with slack margins, and
// the singular-set dimension formulas.
#include <string>
#include <vector>

#include "ciforge/common.hpp"

namespace ciforge {

struct SchemeParams {
  double beta = 0.25;   // Hölder exponent target, in (0, 1/3)
  double b = 1.3;       // super-exponential frequency base, > 1
  double gamma = 0.64;  // stress localization exponent
  double alpha = 1e-3;  // small slack exponent
  double a = 2.0;       // base frequency parameter, >= 2
  double T = 1.0;       // time horizon before rescaling
  double M = 1.0;       // geometric constant supplied by the pipe-flow family
};

// Derived scales at one step q.  Values are evaluated in extended precision
// internally; `formula` strings record the defining expressions so tests can
// re-derive each value independently.
struct QScales {
  int q = 0;
  double lambda_q = 0;  // 2*pi*ceil(a^(b^q))
  double lambda_int = 0;  // ceil(a^(b^q)) as a real (may exceed integer range)
  double delta_q = 0;   // lambda_q^(-2*beta)
  double theta_q = 0;   // (delta_{q-1}^{1/2} lambda_{q-1}^{1+3alpha})^{-1}; theta_0 := T
  double tau_q = 0;     // lambda_{q-1}^{-gamma} theta_q; tau_0 := T/15
  double ell_q = 0;     // delta_{q+1}^{1/2} / (delta_q^{1/2} lambda_q^{1+gamma/2+3alpha/2})
  static const char* formulas();
};

// One inequality evaluation.  slack = rhs - lhs (a passing check has
// positive slack for strict inequalities, nonnegative otherwise).
struct CheckRecord {
  std::string name;
  double lhs = 0, rhs = 0, slack = 0;
  bool pass = false;
  bool strict = true;
};

struct ValidationReport {
  std::vector<CheckRecord> checks;
  bool all_pass = false;
  const CheckRecord* find(const std::string& name) const;
};

// Admissibility inequalities on the parameter tuple plus the a-floor
// conditions (bad-set shrink factor and 2*theta_{q+1} < tau_q for
// q = 0..chain_horizon).  Invalid parameters yield failing records, never a
// fault.
ValidationReport validate(const SchemeParams& p, int chain_horizon = 2);

// Derived scales at step q (q >= 0).  Faults if a^(b^q) exceeds the
// extended-precision range.
QScales scales(const SchemeParams& p, int q);

// The inter-scale orderings used by the construction at step q:
// 5*tau_{q+1} < theta_{q+1}, 2*theta_{q+1} < tau_q, the mollification-length
// window, ell_q^{-1} < lambda_{q+1}, and the stress-amplitude chain.
ValidationReport check_chain(const SchemeParams& p, int q);

// Smallest a >= 2 for which all records of `predicate` pass, found by
// bisection in log a (the proofs only assert existence of such a floor).
// Returns +inf if no a <= a_hi works.
double find_a_floor(SchemeParams p, int q, double a_hi = 1e9);

struct DimensionBounds {
  double box_dim_bound = 0;  // 1 - gamma*b / ((b-1)(1-beta+3alpha+gamma))
  double lower_bound = 0;    // 2*beta/(1-beta)
  double theorem_bound = 0;  // 1/2 + (1/2)*2*beta/(1-beta)
};

// Closed-form dimension values at the given exponents.  Faults if beta is
// outside (0,1/3).
DimensionBounds dimension_bounds(double beta, double b, double gamma, double alpha);

// Exact rational arithmetic for the boundary cases (beta = num/den).
struct Rational {
  long long num = 0, den = 1;  // reduced, den > 0
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};
Rational lower_bound_rational(long long num, long long den);    // 2*beta/(1-beta)
Rational theorem_bound_rational(long long num, long long den);  // (1+beta)/(2(1-beta))

// Numerically minimizes the box-dimension bound over the admissible
// (b, gamma, alpha) region by refining scan; converges to the same closed
// form as theorem_bound (the minimum is approached as b->1+, gamma->sup,
// alpha->0).
double infimum_scan(double beta);

}  // namespace ciforge
