#pragma once

#include <string>
#include <vector>

#include "qdlab/foliation_tree.hpp"
#include "qdlab/harmonic_metric.hpp"
#include "qdlab/qd_core.hpp"

// Certified two-sided bounds I_phi <= d_t <= I_phi + envelope(t) from the
// explicit constants ledger, the staircase deformation realising the tree
// geodesic as a plane path, and the Gromov-Hausdorff convergence experiment
// driver.

namespace qdlab {

// ---------------------------------------------------------------------------
// Constants ledger

struct ConstantsLedger {
  int k = 0;          // sides (= degree + 2)
  int zero_count = 0; // N': number of distinct zeros
  int max_order = 1;  // largest zero multiplicity
  double C = 0;  // sink parameter: half the shortest loop around infinity in U
  double B = 0;  // tension bound in the sink: 2 asinh((k-2) / (2 C^2))
  double A = 0;  // sqrt(cosh(B e^{-x}) - 1) <= A e^{-x}:  A = B/sqrt(2) + 1
  double W = 0;  // maximal horizontal-strip width
  double D = 0;  // arc-comparison constant: max(D_sink, D_compact)
  double D_sink = 0;     // (A/sqrt 2)(2W + 1), lines inside the sink, t >= 1
  double D_compact = 0;  // compact arcs at distance >= epsilon from zeros
  double K = 0;  // max xi/eta-measure between grid points of the compact part
  double M = 0;  // ball-crossing constant: 2 * max_order * (1 + 2D)
  double epsilon = 0;
  double sink_radius = 0;  // |z|-radius whose exterior is the sink U

  // Worst-case certified envelope width at time t (uses N' balls):
  // (2K + 4 N' eps + 2) D e^{-eps sqrt t} + N' M eps.
  double envelope(double t) const;
};

struct LedgerOptions {
  double epsilon = 0;     // 0: auto = 0.05 * min(pairwise zero gap, C) / 2
  double K_safety = 1.1;  // multiplier on the sampled compact-part maximum
  double K_grid_h = 0;    // 0: auto from the compact-part size
};

// Computes every constant from the skeleton and grid sweeps; validates
// epsilon < C and disjointness of the 2-epsilon balls (EpsilonTooLarge).
ConstantsLedger build_ledger(const PolyQD& qd, const LedgerOptions& opts = {});

// ---------------------------------------------------------------------------
// Staircase deformation

enum class StairSegKind { Horizontal, Vertical, BallBridge };

struct StairSegment {
  StairSegKind kind = StairSegKind::Horizontal;
  double xi = 0;    // transverse measures carried by this piece
  double eta = 0;
  int ball_zero = -1;  // zero index for BallBridge pieces
};

struct StaircasePath {
  cplx x1, x2;
  double xi_total = 0;   // = I_phi(x1, x2) by construction
  double eta_total = 0;  // flat-geodesic eta-measure + 4 eps per ball
  int balls_visited = 0; // N: distinct zeros whose eps-ball the path crosses
  double epsilon = 0;
  std::vector<StairSegment> segments;
  PathPolyline flat_geodesic;  // the approximate |phi|-geodesic it deforms
};

// Deforms the (numerically straightened) flat geodesic from x1 to x2 into
// the staircase normal form: horizontal/vertical runs outside the
// eps-balls of the zeros, bridges inside.  Horizontal measure is preserved
// (= I_phi); vertical measure grows by at most 4 eps per visited ball.
StaircasePath staircase(const MetricTree& tree, cplx x1, cplx x2,
                        double epsilon);

// ---------------------------------------------------------------------------
// Certification

struct CertBound {
  double t = 1;
  double lower = 0;  // = I_phi
  double upper = 0;
  double horizontal_term = 0;  // (K + 1) D e^{-eps sqrt t}
  double vertical_term = 0;    // (K + 4 N eps + 1) D e^{-eps sqrt t}
  double ball_term = 0;        // N M eps
};

// Two-sided certified bounds on d_t(x1, x2) for t >= 1 (TBelowOne below).
CertBound certify(const ConstantsLedger& ledger, const StaircasePath& stair,
                  double t);

// ---------------------------------------------------------------------------
// Convergence experiment

struct PairResult {
  cplx x1, x2;
  double I_phi = 0;
  double d_t = 0;
  double lower = 0, upper = 0;
  double solver_err = 0;
};

struct TimeSlice {
  double t = 1;
  double sup_gap = 0;        // max |d_t - I_phi| over the sample
  double eps_fraction = 0;   // share of pairs with |d_t - I_phi| < epsilon
  double residual_rms = 0;
  double min_raw_G = 0;
  std::vector<PairResult> pairs;
};

struct Report {
  std::vector<cplx> phi;  // coefficients, ascending
  std::uint64_t seed = 0;
  int samples = 0;
  double sample_radius = 0;
  double epsilon = 0;      // epsilon-approximation threshold for eps_fraction
  double R_dom = 0;
  int grid_n = 0;
  double ledger_epsilon = 0;
  std::vector<TimeSlice> slices;  // ascending t
  double fit_slope = 0;    // linear fit of log sup_gap against sqrt t
  double fit_r2 = 0;
};

struct ReportOptions {
  std::vector<double> t_list = {1, 4, 16, 64};  // strictly ascending, >= 1
  int samples = 50;
  double sample_radius = 3.0;
  std::uint64_t seed = 7;
  double epsilon = 0;  // 0: auto = 0.05 * max sampled I_phi
  double R_dom = 0;    // 0: auto from zeros and sample radius
  int grid_n = 512;
  double ledger_epsilon = 0;  // forwarded to build_ledger
};

// Runs the whole experiment: tree, ledger, per-t field solves, sampled
// distances, certified bounds, sup-gap decay fit.
Report convergence_report(const PolyQD& qd, const ReportOptions& opts = {});

// Least-squares fit of y against x; returns {slope, intercept, r2}.
struct LineFit {
  double slope = 0, intercept = 0, r2 = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Smallest domain radius whose Dirichlet layer is at |phi|-distance >= 2
// from the sample disk and at least twice the zero radius.
double suggest_domain_radius(const PolyQD& qd, double sample_radius);

}  // namespace qdlab
