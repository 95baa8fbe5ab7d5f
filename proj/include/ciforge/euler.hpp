#pragma once
// Spectral solver for the incompressible equations on the unit torus:
// dealiased RK4 on the Leray-projected form, short-horizon local solves
// around a base time, characteristic flow maps, a transport diagnostic, and
// the stress-equation residual every constructed pair is measured by.
#include <array>
#include <string>
#include <vector>

#include "ciforge/field.hpp"
#include "ciforge/sampler.hpp"

namespace ciforge {

// Instantaneous state: divergence-free velocity, its time, and the pressure
// recovered from the velocity (diagnostic only; never used to advance).
struct EulerState {
  VectorField v;
  double t = 0.0;
  ScalarField p;
};

// Validates the velocity (faults "state divergence") and fills the pressure.
EulerState make_state(VectorField v, double t);

// -P div(u (x) u) with u = v (+ background if given): the product is formed
// alias-free on a 3n/2 grid, divergence / projection / 2/3 truncation happen
// in one spectral pass.  The m = 0 coefficient of the result is identically
// zero, so stepping never moves the velocity mean.
VectorField euler_rhs(const VectorField& v, const VectorField* background = nullptr);

struct StepOptions {
  double cfl = 0.5;      // require |dt| <= cfl x spacing / ||v||_0
  bool pressure = true;  // fill the diagnostic pressure of the new state
};

// One classical RK4 step of size dt (either sign).  Faults "CFL guard" when
// the step size violates the advective limit.
EulerState step(const EulerState& state, double dt,
                const VectorField* v_background = nullptr, const StepOptions& opts = {});

struct SolveOptions {
  double alpha = 0.5;          // Holder exponent of the horizon guard norm
  double cfl = 0.5;
  int min_steps_per_side = 8;  // lower bound on steps each side of t0
  double blowup_factor = 1e3;  // fault when ||v||_1 exceeds this x initial
  bool pressure = true;        // per-slice diagnostic pressure
  bool diagnostics = true;     // growth ratios for N = 1, 2
};

struct LocalSolveReport {
  double dt = 0.0;
  int steps_per_side = 0;
  double horizon = 0.0;
  double guard_norm = 0.0;  // ||v0||_{1+alpha} used by the horizon guard
  double growth_1 = 1.0;    // max_t ||v(t)||_{1+alpha} / ||v0||_{1+alpha}
  double growth_2 = 1.0;    // same with 2+alpha
  std::vector<double> cfl_history;  // |dt| ||v(t)||_0 / spacing, per step
};

struct LocalSolve {
  TimeSlab<EulerState> slab;
  LocalSolveReport report;
};

void dump_report(const LocalSolveReport& r, const std::string& path);

// Integrates forward and backward from (v0, t0) at uniform dt so the slab
// covers [t0 - horizon, t0 + horizon] with t0 itself a slice.  Faults
// "Prop B.1 horizon" when horizon > 0.1 / ||v0||_{1+alpha} and "Prop B.1
// guard" when ||v||_1 blows past blowup_factor x its initial value.
// Independent calls share no mutable state and may run concurrently.
LocalSolve solve_local(const VectorField& v0, double t0, double horizon,
                       const SolveOptions& opts = {});

enum class FlowDirection { forward, backward };

// Back-to-base characteristic map at one evaluation time, stored as the
// smooth periodic displacement (map minus identity).  Trajectories are not
// wrapped into [0,1)^3, so long traces keep a continuous displacement.
struct FlowMap {
  double base_time = 0.0;
  double eval_time = 0.0;
  FlowDirection direction = FlowDirection::forward;
  VectorField displacement;
};

// Solves (d_t + v . grad) Phi = 0, Phi(., s_i) = id: traces every grid node
// from time t back to s_i with RK4, sampling v spectrally in space and
// linearly in time between slices.  At t = s_i the displacement is exactly
// zero.  Faults "Prop E.1 hypothesis" when |t - s_i| ||v||_1 > 1.
FlowMap flow_map(const TimeSlab<EulerState>& slab, double s_i, double t);

// Forward flux X(s_i -> t): position at t of the trajectory seeded at x at
// time s_i; the inverse of flow_map on its range.  Same guards.
FlowMap forward_flux(const TimeSlab<EulerState>& slab, double s_i, double t);

// Incremental flow_map for a monotone sequence of evaluation times with a
// fixed base: each advance traces only the new time segment and composes it
// with the stored map, so a full sweep costs one pass over the slab.
class FlowMarcher {
 public:
  FlowMarcher(const TimeSlab<EulerState>& slab, double s_i);

  void advance_to(double t);  // t must move away from the base monotonically
  FlowMap snapshot() const;
  double current_time() const { return cur_; }

 private:
  const TimeSlab<EulerState>* slab_;
  double base_ = 0.0;
  double cur_ = 0.0;
  std::array<std::vector<double>, 3> disp_;
};

struct TransportReport {
  ScalarField f;           // transported field at the requested time
  double f_norm = 0.0;     // ||f(t)||_alpha
  double rhs_bound = 0.0;  // ||f0||_alpha + |t - t0| ||g||_alpha
  double ratio = 0.0;      // f_norm / rhs_bound
};

// Solves d_t f + v . grad f = g along characteristics from (f0, t0) to t and
// reports ||f(t)||_alpha against its a-priori bound.  Guards as flow_map.
TransportReport transport_probe(const ScalarField& f0, const ScalarField& g,
                                const TimeSlab<EulerState>& slab, double t0, double t,
                                double alpha = 0.5);

// max over interior slices of ||d_t v + div(v (x) v) + grad p - div R||_0
// with centered time differences; stress / pressure may be null (zero).
double euler_reynolds_residual(const std::vector<double>& times,
                               const std::vector<VectorField>& v,
                               const std::vector<SymTensorField>* stress,
                               const std::vector<ScalarField>* pressure);
double euler_reynolds_residual(const TimeSlab<EulerState>& slab,
                               const TimeSlab<SymTensorField>* stress = nullptr);

}  // namespace ciforge
