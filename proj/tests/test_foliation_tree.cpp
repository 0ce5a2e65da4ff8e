#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include "qdlab/foliation_tree.hpp"
#include "qdlab/qd_core.hpp"
#include "qdlab/support.hpp"

using namespace qdlab;

namespace {

const double kPi = 3.14159265358979323846;

PolyQD poly(std::vector<cplx> ascending) { return make_qd(std::move(ascending)); }

double flat_axis(double r) { return 2.0 / 3.0 * std::pow(r, 1.5); }  // phi = z

}  // namespace

TEST_CASE("vertical trace of a constant differential runs straight") {
  PolyQD qd = poly({{4, 0}});
  Trajectory tr = trace_leaf(qd, cplx(1, 0), LeafDir::Vertical);
  CHECK(tr.termination == Termination::Escaped);
  for (cplx z : tr.pts) CHECK(std::abs(z.real() - 1.0) < 1e-8);
  CHECK(tr.xi_acc.back() < 1e-6);
  CHECK(tr.eta_acc.back() == doctest::Approx(tr.arc_length_flat).epsilon(1e-9));
  // the opposite branch runs the other way
  Trajectory dn = trace_leaf(qd, cplx(1, 0), LeafDir::Vertical,
                             [] {
                               TraceOptions o;
                               o.branch_seed = cplx(-2, 0);
                               return o;
                             }());
  CHECK(dn.pts.back().imag() * tr.pts.back().imag() < 0);
}

TEST_CASE("vertical leaf of 1 - z^2 through the origin is the imaginary axis") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {-1, 0}});
  Trajectory tr = trace_leaf(qd, cplx(0, 1e-3), LeafDir::Vertical);
  CHECK(tr.termination == Termination::Escaped);
  for (cplx z : tr.pts) CHECK(std::abs(z.real()) < 1e-7);
  CHECK(tr.xi_acc.back() < 1e-6 * (1 + tr.arc_length_flat));
}

TEST_CASE("horizontal leaf of 1 - z^2 from the origin reaches a zero") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {-1, 0}});
  Trajectory tr = trace_leaf(qd, cplx(0, 0), LeafDir::Horizontal);
  REQUIRE(tr.termination == Termination::HitZero);
  CHECK(std::abs(tr.pts.back() - cplx(1, 0)) < 5e-3);
  // quarter of the full arc: int_0^1 sqrt(1-x^2) = pi/4, minus the capture gap
  CHECK(tr.arc_length_flat == doctest::Approx(kPi / 4).epsilon(5e-4));
  CHECK(tr.eta_acc.back() < 1e-6 * (1 + tr.arc_length_flat));
}

TEST_CASE("starting a trace on a zero is rejected") {
  PolyQD qd = poly({{0, 0}, {1, 0}});
  CHECK_THROWS_AS(trace_leaf(qd, cplx(1e-9, 0), LeafDir::Vertical),
                  StartAtZero);
}

TEST_CASE("separatrix skeleton of z") {
  PolyQD qd = poly({{0, 0}, {1, 0}});
  SeparatrixGraph g = separatrix_skeleton(qd);
  REQUIRE(g.rays.size() == 3);
  REQUIRE(g.zs.size() == 1);
  CHECK(g.vertical_connections.empty());
  std::vector<double> angles;
  std::set<int> sectors;
  for (const SeparatrixRay& r : g.rays) {
    CHECK(r.trace.termination == Termination::Escaped);
    CHECK(r.launch_xi < 1e-10);
    angles.push_back(std::fmod(r.angle + 2 * 2 * kPi, 2 * kPi));
    sectors.insert(r.trace.escape_sector);
  }
  std::sort(angles.begin(), angles.end());
  CHECK(angles[0] == doctest::Approx(kPi / 3).epsilon(1e-9));
  CHECK(angles[1] == doctest::Approx(kPi).epsilon(1e-9));
  CHECK(angles[2] == doctest::Approx(5 * kPi / 3).epsilon(1e-9));
  CHECK(sectors.size() == 3);
  CHECK(g.escape_radius_flat == doctest::Approx(4.0));
  // sink bound: the radial march from the lone zero gives exactly diam+1 = 1
  CHECK(g.sink_C > 0.9);
  CHECK(g.sink_C <= 1.0);
  CHECK(g.sink_radius ==
        doctest::Approx(std::pow(1.5, 2.0 / 3.0)).epsilon(5e-3));
  CHECK(g.strip_width_W == 0.0);
}

TEST_CASE("separatrix skeleton of 1 - z^2") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {-1, 0}});
  SeparatrixGraph g = separatrix_skeleton(qd);
  CHECK(g.rays.size() == 6);
  CHECK(g.vertical_connections.empty());
  CHECK(g.strip_width_W == 0.0);
}

TEST_CASE("separatrix skeleton of 1 + z^2 finds the saddle connection") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {1, 0}});
  SeparatrixGraph g = separatrix_skeleton(qd);
  CHECK(g.rays.size() == 6);
  REQUIRE(g.vertical_connections.size() == 1);
  const SaddleConnection& c = g.vertical_connections[0];
  CHECK(c.from_zero != c.to_zero);
  CHECK(c.eta == doctest::Approx(kPi / 2).epsilon(1e-6));
  CHECK(c.xi < 1e-6);
  // the orthogonal foliation has one strip of width pi/2
  CHECK(g.strip_width_W == doctest::Approx(kPi / 2).epsilon(1e-6));
}

TEST_CASE("tree of z is a tripod") {
  PolyQD qd = poly({{0, 0}, {1, 0}});
  MetricTree T = build_tree(qd);
  CHECK_FALSE(T.line_tree);
  REQUIRE(T.vertices.size() == 1);
  CHECK(T.edges.empty());
  REQUIRE(T.ends.size() == 3);
  CHECK(T.vertices[0].valence == 3);
  CHECK(T.vertices[0].zero_indices == std::vector<int>{0});
  for (int s = 0; s < 3; ++s) {
    CHECK(T.ends[s].sector == s);
    CHECK(T.ends[s].vertex == 0);
  }
  CHECK(T.vertex_dist == std::vector<std::vector<double>>{{0.0}});
}

TEST_CASE("tree of 1 - z^2 is an interval with four ends") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {-1, 0}});
  MetricTree T = build_tree(qd);
  REQUIRE(T.vertices.size() == 2);
  REQUIRE(T.edges.size() == 1);
  REQUIRE(T.ends.size() == 4);
  CHECK(T.edges[0].length == doctest::Approx(kPi / 2).epsilon(1e-6));
  CHECK(T.vertices[0].valence == 3);
  CHECK(T.vertices[1].valence == 3);
  CHECK(T.vertices[0].zero_indices.size() == 1);
  CHECK(T.vertices[1].zero_indices.size() == 1);
  // two ends hang off each endpoint of the interval
  int per_vertex[2] = {0, 0};
  for (const TreeEnd& e : T.ends) ++per_vertex[e.vertex];
  CHECK(per_vertex[0] == 2);
  CHECK(per_vertex[1] == 2);
  CHECK(T.vertex_dist[0][1] == doctest::Approx(kPi / 2).epsilon(1e-6));
}

TEST_CASE("tree of 1 + z^2 collapses to a single four-valent vertex") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {1, 0}});
  MetricTree T = build_tree(qd);
  REQUIRE(T.vertices.size() == 1);
  CHECK(T.edges.empty());
  CHECK(T.ends.size() == 4);
  CHECK(T.vertices[0].valence == 4);
  CHECK(T.vertices[0].zero_indices == std::vector<int>{0, 1});
}

TEST_CASE("tree of z^3 - 1 is a path on three vertices") {
  PolyQD qd = poly({{-1, 0}, {0, 0}, {0, 0}, {1, 0}});
  MetricTree T = build_tree(qd);
  REQUIRE(T.vertices.size() == 3);
  CHECK(T.edges.size() == 2);
  CHECK(T.ends.size() == 5);
  for (const TreeVertex& v : T.vertices) CHECK(v.valence == 3);
  for (const TreeEdge& e : T.edges) CHECK(e.length > 1e-3);
}

TEST_CASE("projection for 1 - z^2") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {-1, 0}});
  MetricTree T = build_tree(qd);
  int c_neg = -1, c_pos = -1;
  for (std::size_t i = 0; i < T.zs.size(); ++i)
    (T.zs[i].position.real() < 0 ? c_neg : c_pos) = T.zero_class(int(i));
  TreePoint pm = project(T, cplx(-2, 0));
  REQUIRE(pm.on_vertex());
  CHECK(pm.vertex == c_neg);
  TreePoint pp = project(T, cplx(2, 0));
  REQUIRE(pp.on_vertex());
  CHECK(pp.vertex == c_pos);
  // 3i projects to the midpoint of the edge by symmetry
  TreePoint pe = project(T, cplx(0, 3));
  REQUIRE(pe.on_edge());
  CHECK(pe.edge_offset == doctest::Approx(kPi / 4).epsilon(1e-5));
}

TEST_CASE("projection onto vertices and ends for the tripod") {
  PolyQD qd = poly({{0, 0}, {1, 0}});
  MetricTree T = build_tree(qd);
  // a point on a vertical separatrix projects to the vertex
  cplx on_ray = std::polar(std::pow(3.0, 2.0 / 3.0), kPi / 3);
  TreePoint pv = project(T, on_ray);
  REQUIRE(pv.on_vertex());
  CHECK(pv.vertex == 0);
  // a point within the capture radius projects to the vertex
  TreePoint pc = project(T, cplx(1e-9, 0));
  CHECK(pc.on_vertex());
  // z = 2 lies on a horizontal leaf into the zero, distance (2/3) 2^{3/2}
  TreePoint pe = project(T, cplx(2, 0));
  REQUIRE(pe.on_end());
  CHECK(pe.end_offset == doctest::Approx(flat_axis(2)).epsilon(1e-5));
  CHECK(T.ends[pe.end].vertex == 0);
}

TEST_CASE("tree distances through the tripod vertex") {
  PolyQD qd = poly({{0, 0}, {1, 0}});
  MetricTree T = build_tree(qd);
  cplx a(2, 0);
  cplx b = std::polar(2.0, 2 * kPi / 3);
  TreePoint pa = project(T, a), pb = project(T, b);
  REQUIRE(pa.on_end());
  REQUIRE(pb.on_end());
  CHECK(pa.end != pb.end);
  double d = tree_distance(T, pa, pb);
  CHECK(d == doctest::Approx(2 * flat_axis(2)).epsilon(1e-5));
  CHECK(d == doctest::Approx(intersection_number(T, a, b)).epsilon(1e-12));
  CHECK(intersection_number(T, a, a) == 0.0);
}

TEST_CASE("intersection numbers on the interval tree of 1 - z^2") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {-1, 0}});
  MetricTree T = build_tree(qd);
  CHECK(intersection_number(T, cplx(-2, 0), cplx(2, 0)) ==
        doctest::Approx(kPi / 2).epsilon(1e-6));
  // symmetry
  CHECK(intersection_number(T, cplx(0, 3), cplx(-2, 0)) ==
        doctest::Approx(intersection_number(T, cplx(-2, 0), cplx(0, 3)))
            .epsilon(1e-12));
}

TEST_CASE("points on one vertical leaf have intersection number zero") {
  PolyQD qd = poly({{0, 0}, {1, 0}});
  Trajectory tr = trace_leaf(qd, cplx(1, 2), LeafDir::Vertical);
  REQUIRE(tr.pts.size() > 20);
  MetricTree T = build_tree(qd);
  cplx a = tr.pts[5], b = tr.pts[15];
  CHECK(intersection_number(T, a, b) < 1e-6);
}

TEST_CASE("degenerate line tree of a constant differential") {
  PolyQD qd = poly({{0, 4}});
  MetricTree T = build_tree(qd);
  CHECK(T.line_tree);
  REQUIRE(T.ends.size() == 2);
  cplx rc = std::sqrt(cplx(0, 4));
  Rng rng(42);
  for (int i = 0; i < 10; ++i) {
    cplx a = rng.in_disk(3.0), b = rng.in_disk(3.0);
    double want = std::abs((rc * a).real() - (rc * b).real());
    CHECK(intersection_number(T, a, b) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("triangle inequality and symmetry for z^3 - 1") {
  PolyQD qd = poly({{-1, 0}, {0, 0}, {0, 0}, {1, 0}});
  MetricTree T = build_tree(qd);
  Rng rng(1234);
  std::vector<cplx> pts;
  for (int i = 0; i < 6; ++i) pts.push_back(rng.in_disk(2.5));
  std::vector<TreePoint> tp;
  for (cplx z : pts) tp.push_back(project(T, z));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      double dij = tree_distance(T, tp[i], tp[j]);
      CHECK(dij == doctest::Approx(tree_distance(T, tp[j], tp[i]))
                       .epsilon(1e-12));
      for (std::size_t k = 0; k < pts.size(); ++k)
        CHECK(dij <= tree_distance(T, tp[i], tp[k]) +
                         tree_distance(T, tp[k], tp[j]) + 1e-9);
    }
}

TEST_CASE("rotation equivariance of the tripod metric") {
  // multiplying phi = z by a phase rotates the picture; the tree metric is
  // invariant under z -> e^{2 pi i / 3} z which preserves z dz^2
  PolyQD qd = poly({{0, 0}, {1, 0}});
  MetricTree T = build_tree(qd);
  cplx rot = std::polar(1.0, 2 * kPi / 3);
  Rng rng(777);
  for (int i = 0; i < 8; ++i) {
    cplx a = rng.in_disk(2.0), b = rng.in_disk(2.0);
    double d1 = intersection_number(T, a, b);
    double d2 = intersection_number(T, rot * a, rot * b);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-6));
  }
}

TEST_CASE("grid oracle on a constant differential") {
  PolyQD qd = poly({{1, 0}});
  GridOracleOptions o;
  o.radius = 3;
  o.h = 0.02;
  double v = grid_transverse_oracle(qd, cplx(0, 0), cplx(1, 1), o);
  CHECK(v >= 1.0 - 1e-9);
  CHECK(v <= 1.0 + 3 * o.h);
  CHECK_THROWS_AS(grid_transverse_oracle(qd, cplx(0, 0), cplx(9, 0), o),
                  OutOfGrid);
}

TEST_CASE("grid oracle brackets the tree intersection number") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {-1, 0}});
  MetricTree T = build_tree(qd);
  GridOracleOptions o;
  o.radius = 3;
  o.h = 0.02;
  double tree_val = intersection_number(T, cplx(-2, 0), cplx(2, 0));
  double grid_val = grid_transverse_oracle(qd, cplx(-2, 0), cplx(2, 0), o);
  // graph paths over-measure, modulo the per-hop quadrature bias near zeros
  CHECK(grid_val >= tree_val - 1e-3);
  CHECK(grid_val <= tree_val + std::max(0.02 * tree_val, 3 * o.h));
  // points on one vertical leaf: the oracle must go to zero with h
  double same = grid_transverse_oracle(qd, cplx(0, 0.5), cplx(0, 2.5), o);
  CHECK(same <= 5 * o.h);
}

TEST_CASE("eta oracle measures the orthogonal crossing") {
  PolyQD qd = poly({{1, 0}, {0, 0}, {1, 0}});  // 1 + z^2
  GridOracleOptions o;
  o.radius = 3;
  o.h = 0.02;
  // +-i/2 sit on the vertical connection; the eta distance between them is
  // int_{-1/2}^{1/2} sqrt(1 - y^2) dy and cannot be shortcut
  double want = std::sqrt(3.0) / 4 + kPi / 6;
  double v = grid_eta_oracle(qd, cplx(0, -0.5), cplx(0, 0.5), o);
  CHECK(v >= want - 1e-3);
  CHECK(v <= want + 3 * o.h);
  // two points on one horizontal leaf: eta distance zero
  double zero = grid_eta_oracle(qd, cplx(-0.5, 0), cplx(0.5, 0), o);
  CHECK(zero <= 3 * o.h);
}

TEST_CASE("grid measure diameter sanity") {
  PolyQD qd = poly({{0, 0}, {1, 0}});
  double d = grid_measure_diameter(qd, 1.0, 0.02, false);
  CHECK(d > 0.3);
  CHECK(d < 3.0);
  double de = grid_measure_diameter(qd, 1.0, 0.02, true);
  CHECK(de > 0.3);
  CHECK(de < 3.0);
}
