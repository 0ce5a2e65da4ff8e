#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

// Polynomial quadratic differentials phi(z) dz^2 on the plane:
// coefficient storage, evaluation, root extraction, and branch-tracked
// integrals of sqrt(phi) along polyline paths.  Everything downstream
// (leaf tracing, dual trees, the flat metric |phi|^{1/2}|dz|) sits on
// these primitives.

namespace qdlab {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Coefficient list is empty or all zero.
struct ZeroDifferential : Error {
  using Error::Error;
};

// Root finding failed to converge (both the simultaneous iteration and the
// companion-matrix fallback).
struct RootFailure : Error {
  using Error::Error;
};

// A path for integrate_sqrt passes within tolerance of a zero of phi.
struct PathThroughZero : Error {
  using Error::Error;
};

// An adaptive procedure exhausted its refinement budget.
struct NonConvergent : Error {
  using Error::Error;
};

// Tree construction hit an ambiguous configuration (e.g. cyclic order of
// merged prongs cannot be resolved at working precision).
struct Degenerate : Error {
  using Error::Error;
};

// Requested epsilon violates the ball-disjointness precondition.
struct EpsilonTooLarge : Error {
  using Error::Error;
};

// A zero of phi lies too close to the solver domain boundary.
struct SingularBoundary : Error {
  using Error::Error;
};

// Certification requested for t < 1; the constants envelope is calibrated
// for t >= 1 only.
struct TBelowOne : Error {
  using Error::Error;
};

// trace_leaf asked to start within the capture radius of a zero.
struct StartAtZero : Error {
  using Error::Error;
};

// A separatrix trace exhausted its length budget before classification.
struct TruncatedSeparatrix : Error {
  using Error::Error;
};

// The collapsing map was asked for a point beyond the traced wall region.
struct OutOfRegion : Error {
  using Error::Error;
};

// A grid-based operation received a point outside its grid.
struct OutOfGrid : Error {
  using Error::Error;
};

// Internal assertion: the shortest-path search found no route (cannot
// happen on a connected grid).
struct NoPath : Error {
  using Error::Error;
};

// Damped Newton failed to reduce the residual below tolerance.
struct NewtonDiverged : Error {
  using Error::Error;
};

// A staircase deformation needed a leaf trace that ended Truncated.
struct Unresolved : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Polynomial differential

struct Zero {
  cplx position;
  int multiplicity = 1;  // m: order of vanishing of phi
  int prongs = 3;        // m + 2 vertical (equally many horizontal) prongs
};

class PolyQD {
 public:
  // Coefficients in ascending degree order; invariant: non-empty and the
  // leading (last) coefficient is nonzero.
  explicit PolyQD(std::vector<cplx> coeffs);

  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  int sides() const { return degree() + 2; }  // k: pole order at infinity is k+2
  const std::vector<cplx>& coeffs() const { return coeffs_; }
  cplx leading() const { return coeffs_.back(); }

  cplx eval(cplx z) const;        // Horner
  cplx eval_deriv(cplx z) const;  // phi'
  // phi^(n)(z) / n!
  cplx eval_deriv_scaled(cplx z, int n) const;

  // phi scaled by a constant factor (e.g. -1 swaps the two foliations).
  PolyQD scaled(cplx factor) const;

 private:
  std::vector<cplx> coeffs_;
};

// Strips trailing zero coefficients; throws ZeroDifferential when nothing
// remains.  Degree 0 (constant phi) is accepted.
PolyQD make_qd(const std::vector<cplx>& coeffs);

// All roots with multiplicities.  Simultaneous (Aberth-Ehrlich) iteration
// with a companion-matrix eigenvalue fallback; roots closer than
// 1e-7 * (1 + |z|) are clustered into one multiple zero.
std::vector<Zero> zeros(const PolyQD& qd);

// Companion-matrix eigenvalues only (no clustering).  Exposed as the
// independent cross-check for the primary root finder.
std::vector<cplx> roots_companion(const PolyQD& qd);

// ---------------------------------------------------------------------------
// Branch-tracked integrals along polylines

struct PathPolyline {
  std::vector<cplx> pts;  // at least 2 points
};

struct BranchedIntegral {
  cplx delta_zeta;         // integral of the continued sqrt(phi) dz
  double xi_measure = 0;   // accumulated |Re d_zeta| over substeps
  double eta_measure = 0;  // accumulated |Im d_zeta| over substeps
  int sign_flips = 0;      // continuations that crossed the principal branch cut
  cplx sqrt_begin;         // continued branch value at the path start
  cplx sqrt_end;           // ... and at the path end
};

struct IntegrateOptions {
  double tol = 1e-10;           // absolute tolerance on delta_zeta and measures
  double zero_clearance = 1e-6; // |phi|-distance below which PathThroughZero fires
  int max_intervals = 200000;
  // Branch seed: the continuation starts at the sqrt(phi) value closest to
  // this direction when it is nonzero, else at the principal branch.
  cplx branch_seed = {0.0, 0.0};
};

// Integral of the branch-continued sqrt(phi) along the polyline together
// with the total-variation measures of its real and imaginary parts.
// Substeps are refined until arg(phi) rotates < pi/2 per step and the
// measures stabilise, so xi/eta_measure converge to int |d xi|, int |d eta|.
BranchedIntegral integrate_sqrt(const PolyQD& qd, const PathPolyline& path,
                                const IntegrateOptions& opts = {});

// Length of the polyline in the singular flat metric |phi|^{1/2} |dz|.
// Zeros of phi on the path are allowed (integrable singularity).
double flat_length(const PolyQD& qd, const PathPolyline& path,
                   double rel_tol = 1e-8);

// Straight-segment flat length, the workhorse chord estimate.
double flat_chord(const PolyQD& qd, cplx a, cplx b, double rel_tol = 1e-8);

// Flat distance from z to the nearest zero, estimated through the local
// normal form of phi at each zero (exact for a single-zero differential
// along the radial direction, an upper bound in general).
double flat_zero_clearance(const PolyQD& qd, const std::vector<Zero>& zs,
                           cplx z);

}  // namespace qdlab
