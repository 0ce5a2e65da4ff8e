#pragma once

#include <string>
#include <vector>

#include "qdlab/qd_core.hpp"

// The harmonic-map ray metric g_t: scalar elliptic solve for
// u = log H on a Cartesian disk grid, the derived tension field
// G = u - log(t|phi|), metric evaluation, curve lengths and grid
// shortest-path distances.
//
// Scalar reduction (re-derived and pinned by the metric display below):
//   Delta u = 2 e^u - 2 t^2 |phi|^2 e^{-u},   boundary u = log(t |phi|),
// equivalently Delta G = 4 t |phi| sinh G away from zeros.  The rescaled
// pullback metric is
//   ds^2 = ((cosh G + 1)/2) d xi^2 + ((cosh G - 1)/2) d eta^2,
// i.e. in z-coordinates with phi = a + b i
//   g = 1/2 [ |phi| cosh G * I + [[a, -b], [-b, -a]] ],
// with eigenvalues (|phi|/2)(cosh G +- 1) along the horizontal/vertical
// directions.

namespace qdlab {

struct SolveOptions {
  double residual_tol = 1e-10;  // RMS of the discrete residual
  int max_newton = 60;
  double rotation = 0.0;  // grid rotation angle (symmetry testing)
  // Test hook: optional forcing added to the right-hand side for
  // manufactured-solution checks; empty in production.
  std::vector<double> forcing;
  std::vector<double> boundary_override;  // ditto, Dirichlet data
};

class GField {
 public:
  GField() = default;
  GField(const PolyQD& qd, double t, double R_dom, int n, double rotation);

  double t() const { return t_; }
  double R_dom() const { return R_dom_; }
  double h() const { return h_; }
  int nx() const { return n_; }
  int ny() const { return n_; }
  double rotation() const { return rotation_; }
  const PolyQD& qd() const { return qd_; }

  // Grid node -> plane coordinate (includes the optional rotation).
  cplx node(int i, int j) const;
  bool interior(int i, int j) const { return interior_[idx(i, j)]; }

  double u(int i, int j) const { return u_[idx(i, j)]; }
  const std::vector<double>& u_data() const { return u_; }

  // G = u - log(t|phi|), projected onto G >= 0 (the continuum solution is
  // nonnegative by the maximum principle; the discrete solve can undershoot
  // by truncation error).  Returns +inf at nodes where phi vanishes.
  double G(int i, int j) const;

  // Greatest violation of G >= 0 before projection (diagnostic; <= 0).
  double min_raw_G() const { return min_raw_G_; }
  double residual_rms() const { return residual_rms_; }
  int newton_iterations() const { return newton_iterations_; }

  // Bilinear interpolation of u; z must lie inside the grid square.
  double interp_u(cplx z) const;
  // Bilinear interpolation of the raw tension u - log(t|phi|) from the four
  // stencil nodes.  Only valid where the stencil is clear of zeros and the
  // nodal values are small (returns false otherwise); there it avoids the
  // h^2 floor that interpolating u leaves under G, which would mask the
  // collapse of the vertical eigenvalue at large t.
  bool interp_raw_G(cplx z, double& raw) const;
  bool in_grid(cplx z, double margin = 0.0) const;

  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(j) * n_ + i;
  }

  // mutable internals for the solver / deserialiser
  std::vector<double>& u_mut() { return u_; }
  void set_diags(double residual_rms, double min_raw_G, int iters);

 private:
  PolyQD qd_{std::vector<cplx>{cplx(1, 0)}};
  double t_ = 1, R_dom_ = 1, h_ = 1, rotation_ = 0;
  int n_ = 0;
  std::vector<double> u_;
  std::vector<char> interior_;
  double residual_rms_ = 0, min_raw_G_ = 0;
  int newton_iterations_ = 0;

  friend GField read_field(const std::string& path, const PolyQD& qd);
};

// Damped Newton solve of the u-equation on the uniform n x n Cartesian grid
// spanning [-R_dom, R_dom]^2 (h = 2 R_dom / (n-1)); nodes outside the
// inscribed disk carry Dirichlet data u = log(t|phi|).  Throws
// SingularBoundary if a zero of phi comes within 2h of the Dirichlet layer,
// NewtonDiverged if the damped iteration stalls.
GField solve_field(const PolyQD& qd, double t, double R_dom, int n,
                   const SolveOptions& opts = {});

struct MetricSample {
  double g11 = 0, g12 = 0, g22 = 0;
  double G = 0;       // projected tension value used
  double abs_phi = 0;

  double length_of(cplx v) const;  // sqrt(g(v, v))
  double eig_min() const;
  double eig_max() const;
};

// g_t at z from the solved field: u interpolated bilinearly, phi evaluated
// exactly, G projected onto [0, inf).
MetricSample metric_at(const GField& field, cplx z);

// Adaptive quadrature of sqrt(g(gamma', gamma')) along a polyline.
double curve_length_gt(const GField& field, const PathPolyline& path,
                       double rel_tol = 1e-8);

struct DistanceResult {
  double value = 0;      // length of the straightened polyline
  double graph_value = 0;  // raw grid shortest-path value (>= value)
  // h-scale error bar: |raw graph - value| plus the midpoint-rule vs
  // quadrature gap along the final path.
  double error_estimate = 0;
  PathPolyline path;     // the straightened polyline
};

// Grid shortest path (16-neighbour stencil, midpoint-rule edge lengths)
// followed by local straightening; the returned value is the quadrature
// length of the straightened path, an upper approximant of d_t.
DistanceResult distance_gt(const GField& field, cplx x1, cplx x2);

// Max |G_1 - G_2| over the common interior of two solves with different
// domain radii: the boundary-truncation error estimate.
double boundary_truncation_gap(const PolyQD& qd, double t, double R1,
                               double R2, double h);

}  // namespace qdlab
