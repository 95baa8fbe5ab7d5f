#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "ciforge/params.hpp"

using namespace ciforge;

namespace {
constexpr double kPi = 3.14159265358979323846;

// Reference tuple: every exponent inequality passes (hand-checked margins in
// the asserts below); only the a-floor conditions depend on a.
SchemeParams reference_tuple() {
  SchemeParams p;
  p.beta = 0.25;
  p.b = 1.1;
  p.gamma = 0.9 * (p.b - 1.0) * (1.0 - p.beta - 2.0 * p.beta * p.b) / (p.b + 1.0);
  p.alpha = 1e-4;
  p.a = 1e6;
  p.T = 1.0;
  return p;
}

bool exponent_checks_pass(const ValidationReport& r) {
  // The inequalities on (beta, b, gamma, alpha) alone, excluding the a-floor
  // records (bad_set_shrink_factor, theta_below_tau_*).
  for (const auto& c : r.checks) {
    if (c.name == "bad_set_shrink_factor") continue;
    if (c.name.rfind("theta_below_tau", 0) == 0) continue;
    if (!c.pass) return false;
  }
  return true;
}
}  // namespace

TEST_CASE("derived scales match hand substitution") {
  SchemeParams p;
  p.a = 3;
  p.b = 2;
  p.beta = 0.25;
  p.T = 15.0;

  // lambda_1 = 2*pi*ceil(3^2) = 18*pi
  QScales s1 = scales(p, 1);
  CHECK(s1.lambda_q == doctest::Approx(18.0 * kPi).epsilon(1e-15));
  CHECK(s1.lambda_int == 9.0);

  // delta_0 = lambda_0^(-2*beta) = (6*pi)^(-1/2) at beta = 1/4
  QScales s0 = scales(p, 0);
  CHECK(s0.lambda_q == doctest::Approx(6.0 * kPi).epsilon(1e-15));
  CHECK(s0.delta_q == doctest::Approx(1.0 / std::sqrt(6.0 * kPi)).epsilon(1e-14));

  // tau_0 = T/15 exactly
  CHECK(s0.tau_q == 1.0);

  // theta_1 and tau_1 re-derived from their definitions
  double theta1 = 1.0 / (std::sqrt(s0.delta_q) * std::pow(s0.lambda_q, 1.0 + 3.0 * p.alpha));
  double tau1 = std::pow(s0.lambda_q, -p.gamma) * theta1;
  CHECK(s1.theta_q == doctest::Approx(theta1).epsilon(1e-13));
  CHECK(s1.tau_q == doctest::Approx(tau1).epsilon(1e-13));

  // ell_0 re-derived
  double ell0 = std::sqrt(s1.delta_q) /
                (std::sqrt(s0.delta_q) *
                 std::pow(s0.lambda_q, 1.0 + 0.5 * p.gamma + 1.5 * p.alpha));
  CHECK(s0.ell_q == doctest::Approx(ell0).epsilon(1e-13));
}

TEST_CASE("scales overflow guard faults instead of returning garbage") {
  SchemeParams p;
  p.a = 100;
  p.b = 10;  // a^(b^4) = 100^10000, beyond extended precision
  CHECK_THROWS_AS(scales(p, 4), Fault);
  CHECK_NOTHROW(scales(p, 1));
}

TEST_CASE("scales are monotone across q") {
  SchemeParams p = reference_tuple();
  p.a = 25;  // large enough that four levels stay in range comfortably
  QScales prev = scales(p, 0);
  for (int q = 1; q <= 4; ++q) {
    QScales cur = scales(p, q);
    CHECK(cur.lambda_q > prev.lambda_q);
    CHECK(cur.delta_q < prev.delta_q);
    CHECK(cur.tau_q < prev.tau_q);
    prev = cur;
  }
}

TEST_CASE("reference tuple passes every exponent inequality") {
  SchemeParams p = reference_tuple();
  ValidationReport r = validate(p);
  CHECK(exponent_checks_pass(r));

  // Hand-derived margins frozen as oracles:
  //   gamma_upper rhs = 0.1*0.2/2.1 = 1/105
  const CheckRecord* g = r.find("gamma_upper");
  REQUIRE(g != nullptr);
  CHECK(g->rhs == doctest::Approx(0.1 * 0.2 / 2.1).epsilon(1e-12));
  CHECK(g->pass);

  //   amplitude_exponent_gain: lhs = -0.275-0.25+1+gamma-1.1+5e-4*1.1,
  //   rhs = -0.605 - 1.1*gamma - 3.3e-4; slack ~ 1.1e-3 > 0
  const CheckRecord* e = r.find("amplitude_exponent_gain");
  REQUIRE(e != nullptr);
  double gamma = p.gamma;
  CHECK(e->lhs == doctest::Approx(-0.275 - 0.25 + 1.0 + gamma - 1.1 + 5.5e-4).epsilon(1e-12));
  CHECK(e->rhs == doctest::Approx(-0.605 - 1.1 * gamma - 3.3e-4).epsilon(1e-12));
  CHECK(e->pass);

  // The nesting conditions 2*theta_{q+1} < tau_q also hold at a = 1e6.
  for (const char* name : {"theta_below_tau_q0", "theta_below_tau_q1", "theta_below_tau_q2"}) {
    const CheckRecord* c = r.find(name);
    REQUIRE(c != nullptr);
    CHECK(c->pass);
  }

  // The bad-set shrink factor needs an astronomically larger a at this gamma:
  // 10*pi*(1e6)^(-1/105) = 27.9... > 1, a failing record (not a fault).
  const CheckRecord* f = r.find("bad_set_shrink_factor");
  REQUIRE(f != nullptr);
  CHECK(f->lhs == doctest::Approx(10.0 * kPi * std::pow(1e6, -gamma)).epsilon(1e-12));
  CHECK(f->lhs > 1.0);
  CHECK_FALSE(f->pass);
}

TEST_CASE("boundary parameter choices fail the right records") {
  SchemeParams p = reference_tuple();
  p.beta = 1.0 / 3.0;
  ValidationReport r = validate(p);
  const CheckRecord* c = r.find("beta_below_one_third");
  REQUIRE(c != nullptr);
  CHECK_FALSE(c->pass);
  CHECK_FALSE(r.all_pass);

  SchemeParams q = reference_tuple();
  q.b = 2.0;
  ValidationReport r2 = validate(q);
  const CheckRecord* c2 = r2.find("b_upper");
  REQUIRE(c2 != nullptr);
  CHECK(c2->rhs == doctest::Approx(1.5));  // (1-1/4)/(2/4)
  CHECK_FALSE(c2->pass);
}

TEST_CASE("chain report evaluates each inequality exactly once") {
  SchemeParams p = reference_tuple();
  p.a = 2;
  ValidationReport r = check_chain(p, 0);
  std::set<std::string> names;
  for (const auto& c : r.checks) names.insert(c.name);
  CHECK(names.size() == r.checks.size());
  CHECK(names ==
        std::set<std::string>{"five_tau_below_theta", "two_theta_below_tau",
                              "ell_above_lambda_neg_3_2", "ell_below_lambda_inv",
                              "ell_inv_below_next_lambda", "stress_amplitude_chain"});
}

TEST_CASE("a-floor bisection finds a passing threshold") {
  SchemeParams p = reference_tuple();
  double a0 = find_a_floor(p, 0, 1e260);
  REQUIRE(std::isfinite(a0));
  p.a = a0 * 1.05;
  CHECK(check_chain(p, 0).all_pass);
  const CheckRecord* shrink_hi = validate(p, 0).find("bad_set_shrink_factor");
  REQUIRE(shrink_hi != nullptr);
  CHECK(shrink_hi->pass);
  // Below the floor the combined predicate fails (here the binding constraint
  // is the bad-set shrink factor; the chain alone may still hold).
  p.a = a0 / 4.0;
  const CheckRecord* shrink_lo = validate(p, 0).find("bad_set_shrink_factor");
  REQUIRE(shrink_lo != nullptr);
  bool below_floor_ok = check_chain(p, 0).all_pass && shrink_lo->pass;
  CHECK_FALSE(below_floor_ok);
}

TEST_CASE("oversized alpha breaks the stress-amplitude chain") {
  SchemeParams p = reference_tuple();
  p.alpha = (p.b - 1.0) * (1.0 - p.beta) / (5.0 * p.b);
  ValidationReport r = check_chain(p, 0);
  const CheckRecord* c = r.find("stress_amplitude_chain");
  REQUIRE(c != nullptr);
  CHECK_FALSE(c->pass);
}

TEST_CASE("nesting theta_{q+1} < tau_q < theta_q holds for q <= 3 at large a") {
  SchemeParams p = reference_tuple();
  for (int q = 1; q <= 3; ++q) {
    QScales cur = scales(p, q);
    QScales next = scales(p, q + 1);
    CHECK(next.theta_q < cur.tau_q);
    CHECK(cur.tau_q < cur.theta_q);
  }
}

TEST_CASE("dimension bounds: closed forms and exact boundary values") {
  // lower bound at beta = 1/4: 2*(1/4)/(3/4) = 2/3
  DimensionBounds d = dimension_bounds(0.25, 1.1, 0.005, 1e-4);
  CHECK(d.lower_bound == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // theorem bound at beta' = 1/4: 1/2 + (1/2)(2/3) = 5/6
  CHECK(d.theorem_bound == doctest::Approx(5.0 / 6.0).epsilon(1e-15));

  // Exact rational boundary values at beta = 1/3.
  CHECK(lower_bound_rational(1, 3) == Rational{1, 1});
  CHECK(theorem_bound_rational(1, 3) == Rational{1, 1});
  CHECK(theorem_bound_rational(1, 4) == Rational{5, 6});
  CHECK(lower_bound_rational(1, 4) == Rational{2, 3});

  CHECK_THROWS_AS(dimension_bounds(0.4, 1.1, 0.005, 1e-4), Fault);
  CHECK_THROWS_AS(dimension_bounds(-0.1, 1.1, 0.005, 1e-4), Fault);
}

TEST_CASE("box bound stays inside (0,1) on admissible samples") {
  for (double beta : {0.05, 0.15, 0.25, 0.30}) {
    for (double bf : {0.1, 0.5, 0.9}) {
      double bmax = (1.0 - beta) / (2.0 * beta);
      double b = 1.0 + bf * (std::min(bmax, 3.0) - 1.0) * 0.99;
      double gmax = (b - 1.0) * (1.0 - beta - 2.0 * beta * b) / (b + 1.0);
      if (gmax <= 0) continue;
      for (double gf : {0.2, 0.8}) {
        DimensionBounds d = dimension_bounds(beta, b, gf * gmax, 1e-6);
        CHECK(d.box_dim_bound > 0.0);
        CHECK(d.box_dim_bound < 1.0);
      }
    }
  }
}

TEST_CASE("infimum scan reproduces the closed form") {
  for (double beta : {0.04, 0.08, 0.12, 0.16, 0.20, 0.24, 0.28, 0.30, 0.32, 0.10}) {
    double closed = 0.5 + 0.5 * (2.0 * beta / (1.0 - beta));
    double scanned = infimum_scan(beta);
    CHECK(std::abs(scanned - closed) < 1e-3);
    // The scan stays above the true infimum (it only samples admissible
    // points, never the limit itself).
    CHECK(scanned >= closed - 1e-12);
  }
}
