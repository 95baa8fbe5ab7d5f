#pragma once
// Nonlocal solenoidal calculus as diagonal Fourier multipliers: inverse
// divergence, Biot-Savart, pressure solve, Leray projection, and the
// oscillatory/commutator diagnostics built on them.
//
// Multiplier symbols, for wavevector m != 0 with xi = m/|m|, kappa = 2 pi |m|:
//   inverse divergence  (vector -> symmetric tensor), the unique symbol with
//     div(R f) = f on mean-zero f:
//     R^{ij,k} = (i/kappa) [ 1/2 xi_i xi_j xi_k + 1/2 delta_ij xi_k
//                            - xi_i delta_jk - xi_j delta_ik ]
//   Biot-Savart  z = (-Lap)^{-1} curl v:  zhat = i (m x vhat) / (2 pi |m|^2)
//   Leray        vhat - xi (xi . vhat)
//   inverse Laplacian  -1 / kappa^2
// Every symbol vanishes at m = 0 (mean-zero convention).
#include <array>
#include <complex>
#include <string>

#include "ciforge/field.hpp"

namespace ciforge {

struct MultiplierOp {
  std::string name;
  int out_components = 0;
  int in_components = 0;
  // Row-major out x in matrix packed at the front of the array; all zeros at
  // m = 0.
  using Symbol = std::array<std::complex<double>, 18> (*)(const std::array<int, 3>& m);
  Symbol symbol = nullptr;
};

MultiplierOp inverse_divergence_op();
MultiplierOp biot_savart_op();
MultiplierOp leray_op();
MultiplierOp inverse_laplacian_op();

template <int NCI, int NCO>
FieldT<NCO> apply_multiplier(const MultiplierOp& op, const FieldT<NCI>& f);

// Symmetric potential with div(output) = f.  Faults "nonzero mean" when
// |mean(f)| >= 1e-10 ||f||_0 componentwise.
SymTensorField inverse_divergence(const VectorField& f);

// z with curl(z) = v for div-free mean-zero v; faults "nonzero mean".
VectorField biot_savart(const VectorField& v);

// inverse_divergence(curl F): the curl makes any F mean-zero first.
SymTensorField rcurl(const VectorField& F);

// Mean-zero p with  Lap p + div div (v (x) v - R) = 0.
ScalarField solve_pressure(const VectorField& v, const SymTensorField& R);

// Divergence-free part; the spatial mean (a constant div-free field) is kept.
VectorField leray_project(const VectorField& v);

// || R( a e^{i lambda k.Phi} ) ||_alpha where Phi = id + displacement and the
// complex amplitude rides on the unit direction e3.  lambda must be 2 pi x
// integer; faults "phase map degenerate" if det(grad Phi) drops below 0.1 on
// the grid.
double stationary_phase_probe(const ScalarField& a, const VectorField& phi_displacement,
                              const std::array<int, 3>& k, double lambda, double alpha);

// || [rcurl, b.grad] (f e3) ||_alpha  for div-free b (commutator diagnostic).
double cz_commutator_probe(const VectorField& b, const ScalarField& f, double alpha);

}  // namespace ciforge
