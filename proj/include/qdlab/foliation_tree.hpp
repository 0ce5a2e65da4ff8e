#pragma once

#include <optional>
#include <vector>

#include "qdlab/qd_core.hpp"

// Vertical-foliation geometry of phi dz^2: leaf tracing, the separatrix
// skeleton, the dual metric tree of the leaf space, the collapsing map, and
// the transverse intersection number together with its independent grid
// oracle.

namespace qdlab {

// ---------------------------------------------------------------------------
// Leaf tracing

enum class LeafDir { Vertical, Horizontal };

enum class Termination { HitZero, Escaped, Truncated };

struct Trajectory {
  std::vector<cplx> pts;        // traced polyline
  std::vector<double> xi_acc;   // accumulated |d xi| at each point
  std::vector<double> eta_acc;  // accumulated |d eta| at each point
  double arc_length_flat = 0;   // |phi|-length of the polyline
  Termination termination = Termination::Truncated;
  int hit_zero = -1;            // index into the zero list when HitZero
  int escape_sector = -1;       // asymptotic sector index when Escaped
  cplx sqrt_end;                // continued branch value at the last point
};

struct TraceOptions {
  double tol = 1e-9;          // local error target per unit flat length
  double capture_flat = 1e-4; // HitZero capture radius in |phi|-distance
  double max_flat_length = 0; // 0: derived from the escape radius
  cplx branch_seed = {0, 0};  // orientation seed for sqrt(phi) at the start
};

// Traces the vertical or horizontal leaf through z0 in one orientation at
// unit flat speed, with transverse drift correction (a vertical leaf holds
// xi constant to within tol * arc length).  Stops at a zero (capture radius
// with bisection refinement), at the escape radius with outward radial
// derivative, or at the length budget.
Trajectory trace_leaf(const PolyQD& qd, cplx z0, LeafDir dir,
                      const TraceOptions& opts = {});

// ---------------------------------------------------------------------------
// Separatrix skeleton

struct SeparatrixRay {
  int zero = -1;              // index of the emitting zero
  double angle = 0;           // departure direction at the zero
  Trajectory trace;           // the traced ray (starts just off the zero)
  double launch_xi = 0;       // |d xi| spent between the zero and trace start
  double launch_eta = 0;
};

struct SaddleConnection {
  int ray = -1;  // index into rays
  int from_zero = -1;
  int to_zero = -1;
  double xi = 0;   // transverse measures along the connection
  double eta = 0;
  double flat = 0; // |phi|-length
};

struct SeparatrixGraph {
  explicit SeparatrixGraph(PolyQD qd_) : qd(std::move(qd_)) {}

  PolyQD qd;
  std::vector<Zero> zs;
  std::vector<SeparatrixRay> rays;                 // vertical separatrices
  std::vector<SaddleConnection> vertical_connections;
  std::vector<double> sector_angles;               // k cyclic boundary directions
  double escape_radius_flat = 0;                   // in |phi|-distance units
  double escape_radius_z = 0;                      // the matching |z| radius
  double sink_C = 0;      // half the shortest |phi|-loop around infinity in U
  double sink_radius = 0; // |z|-radius whose exterior is the sink U
  double strip_width_W = 0;  // maximal horizontal-strip width (0 if none)

  int sector_count() const { return static_cast<int>(sector_angles.size()); }
};

// Traces the m+2 vertical separatrices of every zero, classifies their ends,
// collects vertical saddle connections, fixes the cyclic sectors at infinity
// and the sink-neighbourhood constants.  Requires degree >= 1.
SeparatrixGraph separatrix_skeleton(const PolyQD& qd,
                                    const TraceOptions& opts = {});

// ---------------------------------------------------------------------------
// Dual metric tree

struct TreeVertex {
  std::vector<int> zero_indices;  // zeros collapsed into this vertex
  cplx anchor;                    // representative zero position
  int valence = 0;                // tree valence (finite edges + ends)
};

struct TreeEdge {
  int v = -1, w = -1;
  double length = 0;  // |d xi|-measure across the separating strip
};

struct TreeEnd {
  int vertex = -1;  // attachment vertex
  int sector = -1;  // asymptotic sector at infinity (cyclic label)
};

// Location of a point in the tree: exactly one carrier is set.
struct TreePoint {
  int vertex = -1;

  int edge = -1;
  double edge_offset = 0;  // distance from tree.edges[edge].v

  int end = -1;
  double end_offset = 0;   // distance from the attachment vertex

  bool on_vertex() const { return vertex >= 0; }
  bool on_edge() const { return edge >= 0; }
  bool on_end() const { return end >= 0; }
};

struct MetricTree {
  explicit MetricTree(PolyQD qd_) : qd(std::move(qd_)) {}

  PolyQD qd;
  std::vector<Zero> zs;
  std::vector<TreeVertex> vertices;
  std::vector<TreeEdge> edges;
  std::vector<TreeEnd> ends;  // sorted by sector label: the cyclic order
  // All-pairs vertex distances (empty for the degenerate line tree).
  std::vector<std::vector<double>> vertex_dist;

  // Degree-0 differentials collapse to a line; represented as one virtual
  // valence-2 vertex at xi = 0 with two ends.
  bool line_tree = false;
  cplx line_sqrt = {1, 0};  // fixed global branch of sqrt(phi)

  // Vertical separatrix walls kept for the collapsing map: crossing wall i
  // means passing the tree vertex wall_class[i].  Each polyline starts at
  // its zero.  The working region of project() is bounded by wall_budget
  // (a flat-length cap on the traces).
  std::vector<std::vector<cplx>> walls;
  std::vector<int> wall_class;
  double wall_budget = 0;
  double escape_radius_z = 0;
  double escape_radius_flat = 0;

  int zero_class(int zero_index) const;  // vertex containing a zero
};

// Builds the dual tree of the vertical foliation: vertices are classes of
// zeros joined by vertical saddle connections, finite edges carry the
// |d xi|-width of the separating strip, ends are labelled by the sectors at
// infinity.  Validates the four-point condition on random quadruples.
MetricTree build_tree(const PolyQD& qd, const TraceOptions& opts = {});
MetricTree build_tree(const SeparatrixGraph& skeleton,
                      const TraceOptions& opts = {});

// Collapsing map: the tree point carrying z.
TreePoint project(const MetricTree& tree, cplx z,
                  const TraceOptions& opts = {});

// Path metric of the tree.
double tree_distance(const MetricTree& tree, const TreePoint& a,
                     const TreePoint& b);

// I_phi(x1, x2) = tree_distance(project(x1), project(x2)): the infimum of
// int |d xi| over paths joining x1 and x2.
double intersection_number(const MetricTree& tree, cplx x1, cplx x2,
                           const TraceOptions& opts = {});

// ---------------------------------------------------------------------------
// Independent grid oracle

struct GridOracleOptions {
  double radius = 3.0;  // half-side of the square grid centred at 0
  double h = 0.01;      // spacing
};

// Shortest-path approximation of I_phi on a 16-neighbour grid with edge
// costs |Re(sqrt(phi(midpoint)) * dz)|.  Deliberately independent of the
// tree machinery; converges to I_phi from above as h -> 0.
double grid_transverse_oracle(const PolyQD& qd, cplx x1, cplx x2,
                              const GridOracleOptions& opts = {});

// Same grid sweep with costs |Im(...)|: the eta-measure counterpart (used
// for the compact-part constant of the certification ledger).
double grid_eta_oracle(const PolyQD& qd, cplx x1, cplx x2,
                       const GridOracleOptions& opts = {});

// Estimated diameter of the |z| <= R disk in the xi- (eta_measure: eta-)
// pseudo-metric: the farthest grid distance over sweeps from boundary-ring
// and zero sources.  Feeds the compact-part measure bound of the ledger.
double grid_measure_diameter(const PolyQD& qd, double R, double h,
                             bool eta_measure);

}  // namespace qdlab
