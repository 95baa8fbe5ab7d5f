#pragma once
// Spatial mollification at scale ell with the compactly supported bump
//   phi(y) = c * exp(-1 / (1 - |y|^2))   for |y| < 1,   phi = 0 otherwise,
// rescaled to phi_ell(x) = ell^-3 phi(x/ell) and normalized to unit mass
// discretely (so means are preserved to the last bit).
//
// The kernel is sampled at grid points with minimum-image coordinates and
// convolved by coefficient multiplication; with unit torus volume the
// discrete convolution weight h^3 makes that representation exact.
#include "ciforge/field.hpp"

namespace ciforge {

// Faults: "mollify scale" if ell < 2*spacing (kernel under-resolved) or
// ell >= 1/4 (support wraps into itself ambiguously).
template <int NC>
FieldT<NC> mollify(const FieldT<NC>& f, double ell);

// Sup norm of the smoothing commutator of a pointwise product:
//   || f_ell * g_ell - (f g)_ell ||_0.
// For smooth inputs it scales like ell^2 (quadratic commutator estimate);
// tests pin the measured slope.
double cet_commutator(const ScalarField& f, const ScalarField& g, double ell);

}  // namespace ciforge
