#pragma once
// Discrete Holder-norm estimation on periodic grid fields.
//
// Seminorm estimator: max over grid points x and a family of exact lattice
// displacements d of |f(x+d) - f(x)| / |d|^alpha.  Displacements run over 13
// integer directions (axes, face diagonals, body diagonals) at dyadic
// multiples of the grid spacing, capped at |d| <= 1/4.  Differences use grid
// values only (no interpolation), so the result is a certified LOWER bound of
// the continuum seminorm that converges from below under refinement.
//
// Norms follow the convention
//   ||f||_m         = sum_{j<=m} [f]_j,            [f]_j = max_{|g|=j} ||D^g f||_0,
//   ||f||_{m+alpha} = ||f||_m + [f]_{m+alpha},     [f]_{m+alpha} = max_{|g|=m} [D^g f]_alpha.
#include "ciforge/field.hpp"

namespace ciforge {

// Exact spectral partial derivative d^{j1+j2+j3} f / dx1^j1 dx2^j2 dx3^j3.
template <int NC>
FieldT<NC> partial_derivative(const FieldT<NC>& f, int j1, int j2, int j3);

// [f]_j: max over multi-indices of given order of the sup magnitude.
template <int NC>
double derivative_sup(const FieldT<NC>& f, int order);

// Holder seminorm estimator, alpha in (0,1).
template <int NC>
double holder_seminorm(const FieldT<NC>& f, double alpha);

// ||f||_s for s = m + alpha (alpha = 0 gives the C^m norm).
template <int NC>
double holder_norm(const FieldT<NC>& f, double s);

}  // namespace ciforge
