#include "ciforge/singular.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciforge/common.hpp"
#include "ciforge/io.hpp"

namespace ciforge {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::pair<double, double>> sorted_copy(
    std::vector<std::pair<double, double>> ivs) {
  std::sort(ivs.begin(), ivs.end());
  return ivs;
}

// Merge a list of intervals into disjoint ascending spans.
std::vector<std::pair<double, double>> merged(
    const std::vector<std::pair<double, double>>& ivs) {
  std::vector<std::pair<double, double>> s = sorted_copy(ivs);
  std::vector<std::pair<double, double>> out;
  for (const auto& iv : s) {
    if (!out.empty() && iv.first <= out.back().second + 1e-15) {
      out.back().second = std::max(out.back().second, iv.second);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

bool segment_covered(const std::vector<std::pair<double, double>>& cover,
                     double lo, double hi, double slack) {
  for (const auto& iv : cover)
    if (lo >= iv.first - slack && hi <= iv.second + slack) return true;
  return false;
}

struct FitLine {
  double slope = 0, intercept = 0;
};

FitLine least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (!(det > 0)) fail("interval family", "regression abscissae are degenerate");
  FitLine f;
  f.slope = (n * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

void validate_family(const IntervalFamilySequence& seq) {
  if (seq.size() < 2)
    fail("interval family", "box dimension needs at least two levels, got " +
          std::to_string(seq.size()));
  for (std::size_t li = 0; li < seq.size(); ++li) {
    const auto ivs = sorted_copy(seq[li].intervals);
    if (ivs.empty())
      fail("interval family", "level " + std::to_string(seq[li].level) +
            " has no intervals");
    double lmin = std::numeric_limits<double>::infinity(), lmax = 0;
    for (std::size_t k = 0; k < ivs.size(); ++k) {
      const double len = ivs[k].second - ivs[k].first;
      if (!(len > 0))
        fail("interval family", "degenerate interval at level " +
              std::to_string(seq[li].level));
      lmin = std::min(lmin, len);
      lmax = std::max(lmax, len);
      if (k > 0 && ivs[k].first < ivs[k - 1].second - 1e-12 * lmax)
        fail("interval family", "overlapping intervals at level " +
              std::to_string(seq[li].level));
    }
    if (lmax - lmin > 1e-6 * lmax)
      fail("interval family", "unequal interval lengths at level " +
            std::to_string(seq[li].level));
    if (li > 0) {
      const auto parents = merged(seq[li - 1].intervals);
      const double slack = 1e-9 * std::max(1.0, lmax);
      for (const auto& iv : ivs)
        if (!segment_covered(parents, iv.first, iv.second, slack))
          fail("interval family", "not nested — level " +
                std::to_string(seq[li].level) + " interval [" +
                std::to_string(iv.first) + ", " + std::to_string(iv.second) +
                "] escapes level " + std::to_string(seq[li - 1].level));
    }
  }
}

}  // namespace

double IntervalFamily::measure() const {
  double m = 0;
  for (const auto& iv : intervals) m += iv.second - iv.first;
  return m;
}

double IntervalFamily::scale() const {
  double s = 0;
  for (const auto& iv : intervals) s = std::max(s, iv.second - iv.first);
  return s;
}

bool IntervalFamily::contains(double t) const {
  for (const auto& iv : intervals)
    if (t >= iv.first && t <= iv.second) return true;
  return false;
}

DimensionFit box_dimension(const IntervalFamilySequence& seq) {
  validate_family(seq);
  const std::size_t levels = seq.size();
  std::vector<double> scales(levels);
  for (std::size_t li = 0; li < levels; ++li) scales[li] = seq[li].scale();

  bool shrinking = true, fixed = true;
  for (std::size_t li = 1; li < levels; ++li) {
    if (!(scales[li] < 0.999 * scales[li - 1])) shrinking = false;
    if (std::abs(scales[li] / scales[li - 1] - 1.0) > 1e-9) fixed = false;
  }

  DimensionFit fit;
  if (shrinking) {
    // The level's own intervals are the covering at that level's scale.
    for (std::size_t li = 0; li < levels; ++li)
      fit.rows.push_back({seq[li].level, scales[li],
                          static_cast<double>(seq[li].intervals.size())});
  } else if (fixed) {
    // The scale ladder does not contract (a fixed set repeated at every
    // level); count grid boxes of dyadically shrinking size over the deepest
    // level instead.
    const auto set = merged(seq.back().intervals);
    const double anchor = set.front().first;
    for (std::size_t li = 0; li < levels; ++li) {
      const double eps = scales[0] * std::pow(0.5, static_cast<double>(li));
      double count = 0;
      for (const auto& iv : set) {
        const double j0 = std::floor((iv.first - anchor) / eps + 1e-12);
        const double j1 = std::floor((iv.second - anchor) / eps - 1e-12);
        count += j1 - j0 + 1;
      }
      fit.rows.push_back({seq[li].level, eps, count});
    }
  } else {
    fail("interval family", "level scales neither contract nor stay fixed");
  }

  std::vector<double> x, y;
  for (const auto& row : fit.rows) {
    x.push_back(std::log(1.0 / row.scale));
    y.push_back(std::log(row.count));
  }
  const FitLine line = least_squares(x, y);
  fit.dimension = line.slope;
  fit.intercept = line.intercept;
  return fit;
}

double covering_exponent_prelimit(const SchemeParams& params, int level) {
  if (level < 1) fail("covering scale", "pre-limit exponent needs level >= 1");
  const QScales s = scales(params, level);
  const double denom = std::log(1.0 / (5.0 * s.tau_q));
  if (!(denom > 0))
    fail("covering scale", "5*tau_q >= 1 at level " + std::to_string(level) +
          " — the covering ladder has not started contracting");
  const double geom = (std::pow(params.b, level) - 1.0) / (params.b - 1.0);
  const double log_count = level * std::log(40.0 * kPi) + std::log(params.T) -
                           params.gamma * geom * std::log(params.a) + denom;
  return log_count / denom;
}

HolderBoundReport holder_increase_bound(
    const EnergyProfile& e, const std::vector<std::pair<double, double>>& cover,
    double theta, double flat_tol) {
  if (!(theta > 0.0) || !(theta < 1.0))
    fail("holder exponent", "theta must lie in (0,1), got " + std::to_string(theta));
  const std::size_t n = e.times.size();
  if (n < 2 || e.e.size() != n)
    fail("energy profile", "needs >= 2 matched samples");
  for (std::size_t i = 1; i < n; ++i)
    if (!(e.times[i] > e.times[i - 1]))
      fail("energy profile", "times must be strictly increasing");

  const auto cov = merged(cover);
  double emax = 0;
  for (double v : e.e) emax = std::max(emax, std::abs(v));
  const double span = e.times.back() - e.times.front();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(e.e[i + 1] - e.e[i]) <= flat_tol * std::max(1.0, emax)) continue;
    if (!segment_covered(cov, e.times[i], e.times[i + 1], 1e-12 * span))
      fail("off-cover variation", "e moves on [" + std::to_string(e.times[i]) +
            ", " + std::to_string(e.times[i + 1]) +
            "] which no cover interval contains");
  }

  HolderBoundReport rep;
  for (std::size_t i = 0; i < n; ++i)
    rep.lhs = std::max(rep.lhs, std::abs(e.e[i] - e.e[0]));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dt = e.times[j] - e.times[i];
      rep.seminorm = std::max(
          rep.seminorm, std::abs(e.e[j] - e.e[i]) / std::pow(dt, theta));
    }
  for (const auto& iv : cover)
    rep.cover_sum += std::pow(std::max(0.0, iv.second - iv.first), theta);
  rep.rhs = rep.seminorm * rep.cover_sum;
  rep.pass = rep.lhs <= rep.rhs * 1.01;
  return rep;
}

RegularityFit energy_regularity_fit(const EnergyProfile& e, double beta) {
  const std::size_t n = e.times.size();
  if (n < 64 || e.e.size() != n)
    fail("energy profile", "regularity fit needs >= 64 samples, got " +
          std::to_string(n));
  for (std::size_t i = 1; i < n; ++i)
    if (!(e.times[i] > e.times[i - 1]))
      fail("energy profile", "times must be strictly increasing");

  RegularityFit fit;
  fit.target = 2.0 * beta / (1.0 - beta);

  double emax = 0;
  for (double v : e.e) emax = std::max(emax, std::abs(v));
  const double floor = 1e-13 * std::max(1.0, emax);

  // Geometric lag bins, ~12 per decade, spanning two decades below a quarter
  // of the record; each bin keeps the sup increment and the lag achieving it.
  const double h_max = (e.times.back() - e.times.front()) / 4.0;
  const double ratio = std::pow(10.0, 1.0 / 12.0);
  const int bins = 25;
  std::vector<double> sup(bins, 0.0), arg(bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double h = e.times[j] - e.times[i];
      if (h > h_max * std::sqrt(ratio)) break;
      const double k_real = std::log(h_max / h) / std::log(ratio);
      const int k = static_cast<int>(std::lround(k_real));
      if (k < 0 || k >= bins) continue;
      const double de = std::abs(e.e[j] - e.e[i]);
      if (de > sup[k]) {
        sup[k] = de;
        arg[k] = h;
      }
    }
  }

  std::vector<double> x, y;
  for (int k = 0; k < bins; ++k) {
    if (sup[k] > floor) {
      fit.lags.emplace_back(arg[k], sup[k]);
      x.push_back(std::log(arg[k]));
      y.push_back(std::log(sup[k]));
    }
  }
  if (x.size() < 3) {
    fit.flat = true;
    fit.exponent = 0.0;
    return fit;
  }
  fit.exponent = least_squares(x, y).slope;
  return fit;
}

double good_set_flatness(const EnergyProfile& e,
                         const std::vector<std::pair<double, double>>& good) {
  const std::size_t n = e.times.size();
  if (n < 3 || e.e.size() != n) return 0.0;
  const auto g = merged(good);
  const double span = n > 1 ? e.times.back() - e.times.front() : 1.0;
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!segment_covered(g, e.times[i - 1], e.times[i + 1], 1e-12 * span)) continue;
    const double dt = e.times[i + 1] - e.times[i - 1];
    if (!(dt > 0)) continue;
    worst = std::max(worst, std::abs(e.e[i + 1] - e.e[i - 1]) / dt);
  }
  return worst;
}

IntervalFamily load_badset_intervals(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("interval family", "cannot open " + path);
  nlohmann::json j;
  is >> j;
  IntervalFamily fam;
  fam.level = j.at("level").get<int>();
  for (const auto& iv : j.at("intervals"))
    fam.intervals.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
  return fam;
}

EnergyProfile load_energy_profile(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("energy profile", "cannot open " + path);
  EnergyProfile e;
  std::string line;
  if (!std::getline(is, line)) fail("energy profile", "empty file " + path);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    if (!std::getline(ls, cell, ',')) continue;
    const double t = std::stod(cell);
    if (!std::getline(ls, cell, ',')) continue;
    const double ev = std::stod(cell);
    e.times.push_back(t);
    e.e.push_back(ev);
  }
  return e;
}

void dump_dimension_report(const DimensionFit& fit, const SchemeParams* params,
                           const std::string& path) {
  nlohmann::json j;
  j["dimension"] = fit.dimension;
  j["intercept"] = fit.intercept;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : fit.rows)
    j["rows"].push_back({{"level", r.level}, {"count", r.count}, {"scale", r.scale}});
  if (params != nullptr) {
    const int deepest = fit.rows.back().level;
    nlohmann::json pj;
    pj["level"] = deepest;
    if (deepest >= 1) {
      pj["exponent"] = covering_exponent_prelimit(*params, deepest);
    }
    const DimensionBounds b =
        dimension_bounds(params->beta, params->b, params->gamma, params->alpha);
    pj["box_dim_bound"] = b.box_dim_bound;
    pj["lower_bound"] = b.lower_bound;
    pj["theorem_bound"] = b.theorem_bound;
    j["prelimit"] = pj;
  }
  write_json_file(path, j.dump(2));
}

void dump_covering_csv(const DimensionFit& fit, const std::string& path) {
  std::ofstream os(path);
  os << std::setprecision(17);
  os << "level,count,scale\n";
  for (const auto& r : fit.rows)
    os << r.level << ',' << r.count << ',' << r.scale << '\n';
}

}  // namespace ciforge
