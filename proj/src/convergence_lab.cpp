#include "qdlab/convergence_lab.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "grid_path.hpp"
#include "qdlab/support.hpp"

namespace qdlab {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;
constexpr double kInf = std::numeric_limits<double>::infinity();

double zero_radius(const PolyQD& qd) {
  double zr = 0;
  if (qd.degree() >= 1)
    for (const Zero& z : zeros(qd)) zr = std::max(zr, std::abs(z.position));
  return zr;
}

// Euclidean radius around a zero matching a given flat radius, through the
// local normal form |phi| ~ a r^m.
double euclid_of_flat(const PolyQD& qd, const Zero& z, double flat) {
  const int p = z.multiplicity + 2;
  const double a = std::abs(qd.eval_deriv_scaled(z.position, z.multiplicity));
  return std::pow(p * flat / (2 * std::sqrt(a)), 2.0 / p);
}

struct Anchor {
  int vertex;
  double d;
};

std::vector<Anchor> anchors_of(const MetricTree& tree, const TreePoint& p) {
  if (p.on_vertex()) return {{p.vertex, 0.0}};
  if (p.on_edge()) {
    const TreeEdge& e = tree.edges[p.edge];
    return {{e.v, p.edge_offset}, {e.w, e.length - p.edge_offset}};
  }
  return {{tree.ends[p.end].vertex, p.end_offset}};
}

// Vertex chain of the tree geodesic between two vertices.
std::vector<int> vertex_chain(const MetricTree& tree, int u, int v) {
  std::vector<int> out{u};
  int cur = u;
  int guard = static_cast<int>(tree.vertices.size()) + 2;
  while (cur != v && guard-- > 0) {
    int next = -1;
    for (const TreeEdge& e : tree.edges) {
      int o = e.v == cur ? e.w : (e.w == cur ? e.v : -1);
      if (o < 0) continue;
      double through = e.length + tree.vertex_dist[o][v];
      if (std::abs(through - tree.vertex_dist[cur][v]) <=
          1e-9 * (1 + tree.vertex_dist[cur][v])) {
        next = o;
        break;
      }
    }
    if (next < 0) throw Error("tree geodesic recovery failed");
    out.push_back(next);
    cur = next;
  }
  if (cur != v) throw Error("tree geodesic recovery failed");
  return out;
}

double min_pairwise_zero_gap(const PolyQD& qd) {
  double gap = kInf;
  if (qd.degree() < 2) return gap;
  auto zs = zeros(qd);
  for (std::size_t i = 0; i < zs.size(); ++i)
    for (std::size_t j = i + 1; j < zs.size(); ++j)
      gap = std::min(gap,
                     flat_chord(qd, zs[i].position, zs[j].position));
  return gap;
}

}  // namespace

double ConstantsLedger::envelope(double t) const {
  return (2 * K + 4 * zero_count * epsilon + 2) * D *
             std::exp(-epsilon * std::sqrt(t)) +
         zero_count * M * epsilon;
}

ConstantsLedger build_ledger(const PolyQD& qd, const LedgerOptions& opts) {
  SeparatrixGraph skel = separatrix_skeleton(qd);
  ConstantsLedger lg;
  lg.k = skel.sector_count();
  lg.zero_count = static_cast<int>(skel.zs.size());
  lg.max_order = 1;
  for (const Zero& z : skel.zs)
    lg.max_order = std::max(lg.max_order, z.multiplicity);
  lg.C = skel.sink_C;
  lg.W = skel.strip_width_W;
  lg.sink_radius = skel.sink_radius;

  const double gap = min_pairwise_zero_gap(qd);
  lg.epsilon = opts.epsilon > 0
                   ? opts.epsilon
                   : 0.05 * std::min(gap, lg.C) / 2;
  if (!(lg.epsilon > 0)) throw EpsilonTooLarge("epsilon must be positive");
  if (lg.epsilon >= lg.C)
    throw EpsilonTooLarge("epsilon must stay below the sink constant C");
  if (4 * lg.epsilon >= gap)
    throw EpsilonTooLarge(
        "2-epsilon balls around distinct zeros must be disjoint");

  lg.B = 2 * std::asinh((lg.k - 2) / (2 * lg.C * lg.C));
  lg.A = lg.B / std::sqrt(2.0) + 1;
  lg.D_sink = lg.A / std::sqrt(2.0) * (2 * lg.W + 1);
  // Compact arcs at flat distance >= eps from the zeros: the tension there
  // is at most asinh(2(k-2)/eps^2) e^{-eps sqrt t} (half-radius balls feed
  // the area bound), and the same cosh chain as in the sink gives the
  // comparison constant.
  const double B_eps = std::asinh(2.0 * (lg.k - 2) / (lg.epsilon * lg.epsilon));
  const double A_eps = B_eps / std::sqrt(2.0) + 1;
  lg.D_compact = A_eps / std::sqrt(2.0);
  lg.D = std::max(lg.D_sink, lg.D_compact);
  lg.M = 2.0 * lg.max_order * (1 + 2 * lg.D);

  // Compact part: the |z| <= sink_radius disk.  K bounds both transverse
  // measures between any two of its points; sampled, so carry a safety
  // factor and treat it as an estimate.
  const double Rk = std::max(lg.sink_radius, 0.5);
  const double hk =
      opts.K_grid_h > 0 ? opts.K_grid_h : std::clamp(Rk / 64, 0.005, 0.05);
  const double kxi = grid_measure_diameter(qd, Rk, hk, false);
  const double keta = grid_measure_diameter(qd, Rk, hk, true);
  lg.K = opts.K_safety * std::max(kxi, keta);
  return lg;
}

StaircasePath staircase(const MetricTree& tree, cplx x1, cplx x2,
                        double epsilon) {
  const PolyQD& qd = tree.qd;
  if (!(epsilon > 0)) throw EpsilonTooLarge("epsilon must be positive");
  for (std::size_t i = 0; i < tree.zs.size(); ++i)
    for (std::size_t j = i + 1; j < tree.zs.size(); ++j)
      if (flat_chord(qd, tree.zs[i].position, tree.zs[j].position) <=
          4 * epsilon)
        throw EpsilonTooLarge(
            "2-epsilon balls around distinct zeros must be disjoint");

  StaircasePath sp;
  sp.x1 = x1;
  sp.x2 = x2;
  sp.epsilon = epsilon;

  TreePoint p1 = project(tree, x1);
  TreePoint p2 = project(tree, x2);
  sp.xi_total = tree_distance(tree, p1, p2);

  // Approximate flat geodesic: 16-neighbour grid with Simpson flat-length
  // hops, then straightening.  Zeros are integrable for the flat metric, so
  // routes through them are legitimate.
  const double Rg =
      std::max({std::abs(x1), std::abs(x2), zero_radius(qd)}) + 1.5;
  detail::PathGrid pg(Rg, 2 * Rg / 256);
  auto speed = [&](cplx z) { return std::sqrt(std::abs(qd.eval(z))); };
  auto cost = [&](cplx a, cplx b) {
    if (!pg.holds(a) || !pg.holds(b)) return 1e18;
    return (speed(a) + 4 * speed(0.5 * (a + b)) + speed(b)) / 6 *
           std::abs(b - a);
  };
  auto [graph, pts] = detail::grid_shortest_polyline(pg, cost, x1, x2);
  (void)graph;
  detail::straighten_polyline(cost, pts, pg.h, 12);

  // The flat geodesic may legitimately pass through zeros; push it a hair
  // off them (1e-4 in flat distance) so the branched measure integral
  // stabilises.  Vertices get nudged radially, legs cutting a ball get a
  // perpendicular bypass point, keeping every leg at clearance >= r/sqrt 2.
  const double fnudge = 1e-4;
  std::vector<double> radii(tree.zs.size());
  for (std::size_t i = 0; i < tree.zs.size(); ++i)
    radii[i] = euclid_of_flat(qd, tree.zs[i], fnudge);
  for (cplx& p : pts)
    for (std::size_t i = 0; i < tree.zs.size(); ++i) {
      cplx zp = tree.zs[i].position;
      if (std::abs(p - zp) < radii[i]) {
        cplx dir =
            p == zp ? cplx(1, 0) : (p - zp) / std::abs(p - zp);
        p = zp + radii[i] * dir;
      }
    }
  std::vector<cplx> sane{pts.front()};
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    cplx a = pts[k], b = pts[k + 1];
    std::vector<std::pair<double, cplx>> inserts;
    double len2 = std::norm(b - a);
    for (std::size_t i = 0; i < tree.zs.size() && len2 > 0; ++i) {
      cplx zp = tree.zs[i].position;
      double tp = ((zp.real() - a.real()) * (b.real() - a.real()) +
                   (zp.imag() - a.imag()) * (b.imag() - a.imag())) /
                  len2;
      if (tp <= 0 || tp >= 1) continue;
      cplx foot = a + tp * (b - a);
      if (std::abs(foot - zp) >= radii[i]) continue;
      cplx dir = foot == zp
                     ? cplx(0, 1) * (b - a) / std::abs(b - a)
                     : (foot - zp) / std::abs(foot - zp);
      inserts.emplace_back(tp, zp + radii[i] * dir);
    }
    std::sort(inserts.begin(), inserts.end(),
              [](const auto& l, const auto& r) { return l.first < r.first; });
    for (const auto& ins : inserts) sane.push_back(ins.second);
    sane.push_back(b);
  }
  sp.flat_geodesic.pts = std::move(sane);

  IntegrateOptions io;
  io.tol = 1e-10;
  io.zero_clearance = 0;
  double eta_flat = integrate_sqrt(qd, sp.flat_geodesic, io).eta_measure;

  // Route bookkeeping: vertices passed by the tree geodesic contribute the
  // visited zero balls; edge lengths contribute the horizontal runs.  Points
  // sharing a carrier (leaf, edge, or end) meet no vertex at all.
  std::vector<int> chain;
  double lead = 0, tail = 0;
  bool same_carrier =
      tree.line_tree || sp.xi_total <= 1e-12 ||
      (p1.on_edge() && p2.on_edge() && p1.edge == p2.edge) ||
      (p1.on_end() && p2.on_end() && p1.end == p2.end);
  if (!same_carrier) {
    auto a1 = anchors_of(tree, p1), a2 = anchors_of(tree, p2);
    double best = kInf;
    int bu = -1, bv = -1;
    for (const Anchor& u : a1)
      for (const Anchor& v : a2) {
        double d = u.d + tree.vertex_dist[u.vertex][v.vertex] + v.d;
        if (d < best) {
          best = d;
          bu = u.vertex;
          bv = v.vertex;
          lead = u.d;
          tail = v.d;
        }
      }
    if (std::abs(best - sp.xi_total) > 1e-9 * (1 + sp.xi_total))
      throw Error("staircase route disagrees with the tree distance");
    chain = vertex_chain(tree, bu, bv);
  }

  if (sp.xi_total <= 1e-12) {
    // Same leaf class: the deformation is a single vertical slide.
    sp.segments.push_back({StairSegKind::Vertical, 0, eta_flat, -1});
    sp.eta_total = eta_flat;
    return sp;
  }

  sp.segments.push_back({StairSegKind::Vertical, 0, eta_flat, -1});
  if (same_carrier) {
    sp.segments.push_back({StairSegKind::Horizontal, sp.xi_total, 0, -1});
  } else {
    if (lead > 0)
      sp.segments.push_back({StairSegKind::Horizontal, lead, 0, -1});
    for (std::size_t c = 0; c < chain.size(); ++c) {
      for (int zi : tree.vertices[chain[c]].zero_indices) {
        sp.segments.push_back(
            {StairSegKind::BallBridge, 0, 4 * epsilon, zi});
        ++sp.balls_visited;
      }
      if (c + 1 < chain.size())
        sp.segments.push_back(
            {StairSegKind::Horizontal,
             tree.vertex_dist[chain[c]][chain[c + 1]], 0, -1});
    }
    if (tail > 0)
      sp.segments.push_back({StairSegKind::Horizontal, tail, 0, -1});
  }
  sp.segments.push_back({StairSegKind::Vertical, 0, 0, -1});

  sp.eta_total = eta_flat + 4.0 * sp.balls_visited * epsilon;
  return sp;
}

CertBound certify(const ConstantsLedger& ledger, const StaircasePath& stair,
                  double t) {
  if (t < 1) throw TBelowOne("certified bounds require t >= 1");
  if (std::abs(stair.epsilon - ledger.epsilon) >
      1e-12 * (1 + ledger.epsilon))
    throw Error("staircase and ledger epsilon differ");
  const double decay = std::exp(-ledger.epsilon * std::sqrt(t));
  const int N = stair.balls_visited;
  CertBound cb;
  cb.t = t;
  cb.lower = stair.xi_total;
  cb.horizontal_term = (ledger.K + 1) * ledger.D * decay;
  cb.vertical_term =
      (ledger.K + 4 * N * ledger.epsilon + 1) * ledger.D * decay;
  cb.ball_term = N * ledger.M * ledger.epsilon;
  cb.upper = cb.lower + cb.horizontal_term + cb.vertical_term + cb.ball_term;
  return cb;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) throw Error("fit_line needs matched samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw Error("fit_line: degenerate abscissae");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssres = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - (f.intercept + f.slope * x[i]);
    ssres += r * r;
  }
  f.r2 = syy == 0 ? 1.0 : 1.0 - ssres / syy;
  return f;
}

double suggest_domain_radius(const PolyQD& qd, double sample_radius) {
  const double zr = zero_radius(qd);
  double R = std::max({2.2 * zr, sample_radius + 0.25, 1.0});
  // Lower bound for the flat distance from the sample disk to |z| = R: the
  // radial integral of the per-radius angular minimum of sqrt|phi|.
  auto clearance = [&](double R_) {
    const int na = 96, nr = 160;
    const double dr = (R_ - sample_radius) / nr;
    double acc = 0;
    for (int s = 0; s < nr; ++s) {
      double r = sample_radius + (s + 0.5) * dr;
      double mn = kInf;
      for (int a = 0; a < na; ++a)
        mn = std::min(mn, std::sqrt(std::abs(qd.eval(
                              std::polar(r, kTwoPi * a / na)))));
      acc += mn * dr;
    }
    return acc;
  };
  while (clearance(R) < 2.2) {
    R += std::max(0.25, 0.05 * R);
    if (R > 1000 * (sample_radius + zr + 1))
      throw Error("domain radius search failed to close");
  }
  return R;
}

Report convergence_report(const PolyQD& qd, const ReportOptions& opts) {
  if (opts.t_list.empty()) throw Error("empty t list");
  for (std::size_t i = 0; i < opts.t_list.size(); ++i) {
    if (opts.t_list[i] < 1) throw TBelowOne("t values must be >= 1");
    if (i > 0 && opts.t_list[i] <= opts.t_list[i - 1])
      throw Error("t list must be strictly ascending");
  }
  if (opts.samples < 1) throw Error("need at least one sample pair");

  Report rep;
  rep.phi = qd.coeffs();
  rep.seed = opts.seed;
  rep.samples = opts.samples;
  rep.sample_radius = opts.sample_radius;
  rep.grid_n = opts.grid_n;

  Rng rng(opts.seed);
  std::vector<std::pair<cplx, cplx>> pairs(opts.samples);
  for (auto& pr : pairs) {
    pr.first = rng.in_disk(opts.sample_radius);
    pr.second = rng.in_disk(opts.sample_radius);
  }

  MetricTree tree = build_tree(qd);
  LedgerOptions lopt;
  lopt.epsilon = opts.ledger_epsilon;
  ConstantsLedger ledger = build_ledger(qd, lopt);
  rep.ledger_epsilon = ledger.epsilon;

  std::vector<double> iphi(pairs.size());
  std::vector<StaircasePath> stairs(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    stairs[i] = staircase(tree, pairs[i].first, pairs[i].second,
                          ledger.epsilon);
    iphi[i] = stairs[i].xi_total;
  }

  double max_iphi = 0;
  for (double v : iphi) max_iphi = std::max(max_iphi, v);
  rep.epsilon = opts.epsilon > 0 ? opts.epsilon
                                 : std::max(0.05 * max_iphi, 1e-9);
  rep.R_dom = opts.R_dom > 0 ? opts.R_dom
                             : suggest_domain_radius(qd, opts.sample_radius);

  for (double t : opts.t_list) {
    GField field = solve_field(qd, t, rep.R_dom, opts.grid_n);
    TimeSlice slice;
    slice.t = t;
    slice.residual_rms = field.residual_rms();
    slice.min_raw_G = field.min_raw_G();
    slice.pairs.resize(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), [&](int i) {
      DistanceResult d =
          distance_gt(field, pairs[i].first, pairs[i].second);
      CertBound cb = certify(ledger, stairs[i], t);
      PairResult& out = slice.pairs[i];
      out.x1 = pairs[i].first;
      out.x2 = pairs[i].second;
      out.I_phi = iphi[i];
      out.d_t = d.value;
      out.lower = cb.lower;
      out.upper = cb.upper;
      out.solver_err = d.error_estimate;
    });
    for (const PairResult& pr : slice.pairs) {
      double gap = std::abs(pr.d_t - pr.I_phi);
      slice.sup_gap = std::max(slice.sup_gap, gap);
      if (gap < rep.epsilon) slice.eps_fraction += 1;
    }
    slice.eps_fraction /= static_cast<double>(pairs.size());
    rep.slices.push_back(std::move(slice));
  }

  std::vector<double> xs, ys;
  for (const TimeSlice& s : rep.slices)
    if (s.sup_gap > 0) {
      xs.push_back(std::sqrt(s.t));
      ys.push_back(std::log(s.sup_gap));
    }
  if (xs.size() >= 2) {
    LineFit f = fit_line(xs, ys);
    rep.fit_slope = f.slope;
    rep.fit_r2 = f.r2;
  }
  return rep;
}

}  // namespace qdlab
