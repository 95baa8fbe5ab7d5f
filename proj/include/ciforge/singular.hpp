#pragma once
// Geometry of the residual time set and the energy profile it leaves behind:
// box-counting dimension of nested interval families, the Hölder-increase
// bound harness for energy profiles flat off a cover, a power-law fit of
// energy increments, and flatness measurement on the good set.
#include <string>
#include <utility>
#include <vector>

#include "ciforge/params.hpp"

namespace ciforge {

// One level of a nested interval family: disjoint ascending closed intervals
// of (approximately) equal length.
struct IntervalFamily {
  int level = 0;
  std::vector<std::pair<double, double>> intervals;

  double measure() const;
  double scale() const;  // common interval length (max over intervals)
  bool contains(double t) const;
};

// Levels ordered by increasing depth; each level's intervals must sit inside
// the previous level's.
using IntervalFamilySequence = std::vector<IntervalFamily>;

struct CoveringRow {
  int level = 0;
  double scale = 0.0;  // covering interval length
  double count = 0.0;  // number of intervals covering the set at this level
};

struct DimensionFit {
  double dimension = 0.0;  // least-squares slope of log count vs log (1/scale)
  double intercept = 0.0;
  std::vector<CoveringRow> rows;
};

// Box-counting dimension estimate of ⋂_q (union of level-q intervals) by
// regression of log covering count against log inverse scale across levels.
// Faults "interval family" on fewer than two levels, non-nested levels,
// overlapping intervals, or unequal lengths within a level (1e-6 relative).
DimensionFit box_dimension(const IntervalFamilySequence& seq);

// Finite-level covering exponent of the scheme's construction: the level-q
// bad set is covered by at most count_q = (40π)^q T a^{-γ(b^q-1)/(b-1)} /
// (5 τ_q) intervals of length 5 τ_q, giving log count_q / log(1/(5 τ_q)).
double covering_exponent_prelimit(const SchemeParams& params, int level);

// Sampled energy history e(t) = kinetic energy per slice.
struct EnergyProfile {
  std::vector<double> times;
  std::vector<double> e;
};

struct HolderBoundReport {
  double lhs = 0.0;        // max_t |e(t) - e(0)|
  double seminorm = 0.0;   // discrete Hölder seminorm [e]_θ
  double cover_sum = 0.0;  // Σ_i r_i^θ over the cover
  double rhs = 0.0;        // seminorm * cover_sum
  bool pass = false;       // lhs ≤ rhs * 1.01
};

// Energy-increase bound for a profile that is constant outside the cover:
// every total increment must be explained by the Hölder seminorm times the
// cover's θ-sum.  Faults "holder exponent" unless θ ∈ (0,1) and
// "off-cover variation" when the profile moves between samples not covered.
HolderBoundReport holder_increase_bound(const EnergyProfile& e,
                                        const std::vector<std::pair<double, double>>& cover,
                                        double theta, double flat_tol = 1e-8);

struct RegularityFit {
  double exponent = 0.0;  // fitted slope of log sup-increment vs log lag
  double target = 0.0;    // 2 β / (1 - β)
  bool flat = false;      // increments at the noise floor; exponent not meaningful
  std::vector<std::pair<double, double>> lags;  // (lag, sup |Δe|) per bin
};

// Power-law fit of sup_{|t-s|≈h} |e(t)-e(s)| against h over geometric lag
// bins.  Faults "energy profile" on fewer than 64 samples.
RegularityFit energy_regularity_fit(const EnergyProfile& e, double beta);

// Max centered-difference |de/dt| over sample triplets lying inside the given
// good intervals (zero when no triplet qualifies).
double good_set_flatness(const EnergyProfile& e,
                         const std::vector<std::pair<double, double>>& good);

// ---------------------------------------------------------------------------
// Artifact plumbing

// Reads one badset.json written by the iteration (fields level, tau,
// intervals) into an interval family.
IntervalFamily load_badset_intervals(const std::string& path);

// Reads a metrics.csv written by the iteration (header t,e_v,...) into an
// energy profile.
EnergyProfile load_energy_profile(const std::string& path);

// dimension_report.json: the regression rows and slope, plus the finite-level
// construction exponent when params are supplied.
void dump_dimension_report(const DimensionFit& fit, const SchemeParams* params,
                           const std::string& path);

// Plot-data CSV with one row per level: level,count,scale.
void dump_covering_csv(const DimensionFit& fit, const std::string& path);

}  // namespace ciforge
