#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "qdlab/convergence_lab.hpp"
#include "qdlab/foliation_tree.hpp"
#include "qdlab/io.hpp"
#include "qdlab/qd_core.hpp"

using namespace qdlab;

namespace {

PolyQD one_minus_z2() { return PolyQD({cplx(1, 0), cplx(0, 0), cplx(-1, 0)}); }
PolyQD tripod() { return PolyQD({cplx(0, 0), cplx(1, 0)}); }

int count_kind(const StaircasePath& sp, StairSegKind k) {
  int n = 0;
  for (const StairSegment& s : sp.segments) n += s.kind == k;
  return n;
}

}  // namespace

TEST_CASE("ledger constants satisfy their defining identities") {
  ConstantsLedger lg = build_ledger(one_minus_z2());
  CHECK(lg.k == 4);
  CHECK(lg.zero_count == 2);
  CHECK(lg.max_order == 1);
  CHECK(lg.C > 0);
  CHECK(lg.W >= 0);
  CHECK(lg.sink_radius > 1.0);

  // Bit-exact recomputation of the derived constants.
  CHECK(lg.B == 2 * std::asinh((lg.k - 2) / (2 * lg.C * lg.C)));
  CHECK(lg.A == lg.B / std::sqrt(2.0) + 1);
  CHECK(std::abs(lg.A - 1 - lg.B / std::sqrt(2.0)) <= 1e-15);
  CHECK(lg.D_sink == lg.A / std::sqrt(2.0) * (2 * lg.W + 1));
  CHECK(lg.D == std::max(lg.D_sink, lg.D_compact));
  CHECK(lg.M == 2.0 * lg.max_order * (1 + 2 * lg.D));
  CHECK(lg.D_compact > 0);
  CHECK(lg.K > 0);

  CHECK(lg.epsilon > 0);
  CHECK(lg.epsilon < lg.C);

  // Envelope decays towards the residual ball width.
  CHECK(lg.envelope(4) < lg.envelope(1));
  double tail = lg.zero_count * lg.M * lg.epsilon;
  CHECK(lg.envelope(1e8) ==
        doctest::Approx(tail).epsilon(1e-6).scale(tail));
}

TEST_CASE("epsilon validation separates the zero balls") {
  LedgerOptions ok;
  ok.epsilon = 0.1;
  ConstantsLedger lg = build_ledger(one_minus_z2(), ok);
  CHECK(lg.epsilon == 0.1);

  LedgerOptions bad;
  bad.epsilon = 0.5;  // 4 eps = 2 exceeds the flat gap pi/2 between -1, 1
  CHECK_THROWS_AS(build_ledger(one_minus_z2(), bad), EpsilonTooLarge);
}

TEST_CASE("staircase on a shared vertical leaf is a single vertical slide") {
  MetricTree tree = build_tree(one_minus_z2());
  StaircasePath sp = staircase(tree, cplx(0, 0.5), cplx(0, 2), 0.05);
  CHECK(sp.xi_total <= 1e-12);
  CHECK(sp.balls_visited == 0);
  REQUIRE(sp.segments.size() == 1);
  CHECK(sp.segments[0].kind == StairSegKind::Vertical);

  // eta equals the flat length of the imaginary-axis leaf segment:
  // int_{1/2}^{2} sqrt(1 + y^2) dy.
  auto F = [](double y) {
    return 0.5 * (y * std::hypot(1.0, y) + std::asinh(y));
  };
  double exact = F(2) - F(0.5);
  CHECK(sp.eta_total == doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("staircase across both zeros visits two balls and keeps I_phi") {
  MetricTree tree = build_tree(one_minus_z2());
  const double eps = 0.05;
  StaircasePath sp = staircase(tree, cplx(-2, 0), cplx(2, 0), eps);

  CHECK(sp.xi_total == doctest::Approx(3.14159265358979 / 2).epsilon(1e-6));
  CHECK(sp.xi_total ==
        tree_distance(tree, project(tree, cplx(-2, 0)),
                      project(tree, cplx(2, 0))));
  CHECK(sp.balls_visited == 2);
  CHECK(count_kind(sp, StairSegKind::BallBridge) == 2);
  CHECK(count_kind(sp, StairSegKind::Vertical) == 2);

  // Segment measures add up to the declared totals.
  double sx = 0, se = 0;
  for (const StairSegment& s : sp.segments) {
    sx += s.xi;
    se += s.eta;
  }
  CHECK(sx == doctest::Approx(sp.xi_total).epsilon(1e-12));
  CHECK(se == doctest::Approx(sp.eta_total).epsilon(1e-12));

  // Flat geodesic eta-measure: 2 int_1^2 sqrt(x^2-1) dx, plus 4 eps a ball.
  double eta_exact = 2 * std::sqrt(3.0) - std::log(2 + std::sqrt(3.0));
  CHECK(sp.eta_total ==
        doctest::Approx(eta_exact + 8 * eps).epsilon(0.02));
}

TEST_CASE("tripod staircase routes through the single branch point") {
  MetricTree tree = build_tree(tripod());
  StaircasePath sp =
      staircase(tree, cplx(1, 0), std::polar(1.0, 2 * 3.14159265358979 / 3),
                0.02);
  CHECK(sp.balls_visited == 1);
  CHECK(sp.xi_total == doctest::Approx(4.0 / 3).epsilon(1e-6));
  CHECK(count_kind(sp, StairSegKind::Horizontal) == 2);
}

TEST_CASE("certified bounds bracket correctly and tighten with t") {
  PolyQD qd = one_minus_z2();
  ConstantsLedger lg = build_ledger(qd);
  MetricTree tree = build_tree(qd);
  StaircasePath sp = staircase(tree, cplx(-2, 0), cplx(2, 0), lg.epsilon);

  CertBound c1 = certify(lg, sp, 1);
  CertBound c4 = certify(lg, sp, 4);
  CertBound c16 = certify(lg, sp, 16);

  CHECK(c4.lower == sp.xi_total);
  double decay = std::exp(-lg.epsilon * std::sqrt(4.0));
  CHECK(c4.horizontal_term == (lg.K + 1) * lg.D * decay);
  CHECK(c4.vertical_term ==
        (lg.K + 4 * sp.balls_visited * lg.epsilon + 1) * lg.D * decay);
  CHECK(c4.ball_term == sp.balls_visited * lg.M * lg.epsilon);
  CHECK(c4.upper == c4.lower + c4.horizontal_term + c4.vertical_term +
                        c4.ball_term);

  CHECK(c16.upper <= c4.upper);
  CHECK(c4.upper <= c1.upper);
  CHECK(c16.upper > c16.lower);

  CHECK_THROWS_AS(certify(lg, sp, 0.5), TBelowOne);

  StaircasePath other = staircase(tree, cplx(-2, 0), cplx(2, 0),
                                  0.5 * lg.epsilon);
  CHECK_THROWS_AS(certify(lg, other, 4), Error);
}

TEST_CASE("line fit recovers an exact affine law") {
  std::vector<double> x{1, 2, 3, 4};
  std::vector<double> y;
  for (double v : x) y.push_back(5 - 2 * v);
  LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(f.r2 == 1.0);

  LineFit flat = fit_line(x, {3, 3, 3, 3});
  CHECK(flat.slope == 0.0);
  CHECK(flat.r2 == 1.0);

  CHECK_THROWS_AS(fit_line({1}, {2}), Error);
  CHECK_THROWS_AS(fit_line({1, 1}, {2, 3}), Error);
}

TEST_CASE("suggested domain radius clears the sample disk") {
  double r_tripod = suggest_domain_radius(tripod(), 3.0);
  CHECK(r_tripod > 3.5);
  CHECK(r_tripod < 8.0);

  double r_pair = suggest_domain_radius(one_minus_z2(), 3.0);
  CHECK(r_pair > 3.2);
  CHECK(r_pair < 6.0);
  CHECK(r_pair >= 2.2);  // at least twice the zero radius
}

TEST_CASE("convergence report: decay, sandwich, and determinism") {
  PolyQD qd = tripod();
  ReportOptions opts;
  opts.t_list = {1, 4};
  opts.samples = 4;
  opts.sample_radius = 2.0;
  opts.seed = 11;
  opts.grid_n = 129;

  Report rep = convergence_report(qd, opts);

  CHECK(rep.seed == 11);
  CHECK(rep.samples == 4);
  CHECK(rep.sample_radius == 2.0);
  CHECK(rep.grid_n == 129);
  CHECK(rep.ledger_epsilon > 0);
  CHECK(rep.epsilon > 0);
  CHECK(rep.R_dom > 2.0);
  REQUIRE(rep.slices.size() == 2);
  CHECK(rep.slices[0].t == 1);
  CHECK(rep.slices[1].t == 4);

  for (const TimeSlice& sl : rep.slices) {
    CHECK(sl.residual_rms <= 1e-8);
    CHECK(sl.min_raw_G >= -1e-3);
    CHECK(sl.eps_fraction >= 0);
    CHECK(sl.eps_fraction <= 1);
    REQUIRE(sl.pairs.size() == 4);
    for (const PairResult& pr : sl.pairs) {
      CHECK(pr.d_t + pr.solver_err + 1e-6 >= pr.lower);
      CHECK(pr.d_t <= pr.upper + pr.solver_err + 1e-6);
      CHECK(pr.upper > pr.lower);
      CHECK(pr.I_phi == pr.lower);
    }
  }
  CHECK(rep.slices[1].sup_gap < rep.slices[0].sup_gap);
  CHECK(rep.fit_slope < 0);

  Report rep2 = convergence_report(qd, opts);
  CHECK(report_to_json(rep) == report_to_json(rep2));
}

TEST_CASE("report validation rejects bad time lists") {
  ReportOptions bad;
  bad.t_list = {0.5, 4};
  bad.samples = 2;
  bad.grid_n = 33;
  CHECK_THROWS_AS(convergence_report(tripod(), bad), TBelowOne);

  bad.t_list = {4, 1};
  CHECK_THROWS_AS(convergence_report(tripod(), bad), Error);

  bad.t_list = {};
  CHECK_THROWS_AS(convergence_report(tripod(), bad), Error);
}
