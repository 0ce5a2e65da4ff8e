#include "qdlab/harmonic_metric.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "grid_path.hpp"

namespace qdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

GField::GField(const PolyQD& qd, double t, double R_dom, int n, double rotation)
    : qd_(qd), t_(t), R_dom_(R_dom), rotation_(rotation), n_(n) {
  if (n < 2) throw Error("field grid needs at least two nodes per side");
  h_ = 2 * R_dom / (n - 1);
  u_.assign(static_cast<std::size_t>(n) * n, 0.0);
  interior_.assign(u_.size(), 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      // Unknowns live strictly inside the inscribed disk; every other node
      // (square-edge nodes included) belongs to the Dirichlet layer.
      double x = -R_dom + i * h_, y = -R_dom + j * h_;
      interior_[idx(i, j)] = std::hypot(x, y) < R_dom ? 1 : 0;
    }
}

cplx GField::node(int i, int j) const {
  cplx rot(std::cos(rotation_), std::sin(rotation_));
  return rot * cplx(-R_dom_ + i * h_, -R_dom_ + j * h_);
}

double GField::G(int i, int j) const {
  double ap = std::abs(qd_.eval(node(i, j)));
  if (ap == 0.0) return kInf;
  return std::max(0.0, u_[idx(i, j)] - std::log(t_ * ap));
}

double GField::interp_u(cplx z) const {
  cplx g = cplx(std::cos(rotation_), -std::sin(rotation_)) * z;
  double fx = (g.real() + R_dom_) / h_, fy = (g.imag() + R_dom_) / h_;
  int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, n_ - 2);
  int j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, n_ - 2);
  double wx = std::clamp(fx - i0, 0.0, 1.0);
  double wy = std::clamp(fy - j0, 0.0, 1.0);
  double lo = (1 - wx) * u_[idx(i0, j0)] + wx * u_[idx(i0 + 1, j0)];
  double hi = (1 - wx) * u_[idx(i0, j0 + 1)] + wx * u_[idx(i0 + 1, j0 + 1)];
  return (1 - wy) * lo + wy * hi;
}

bool GField::interp_raw_G(cplx z, double& raw) const {
  cplx g = cplx(std::cos(rotation_), -std::sin(rotation_)) * z;
  double fx = (g.real() + R_dom_) / h_, fy = (g.imag() + R_dom_) / h_;
  int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, n_ - 2);
  int j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, n_ - 2);
  const int di[4] = {0, 1, 0, 1}, dj[4] = {0, 0, 1, 1};
  double c[4];
  for (int k = 0; k < 4; ++k) {
    const int i = i0 + di[k], j = j0 + dj[k];
    const double ap = std::abs(qd_.eval(node(i, j)));
    if (ap == 0.0) return false;
    c[k] = u_[idx(i, j)] - std::log(t_ * ap);
    // Large nodal values mean the stencil sits against a zero, where the
    // interpolant of the singular log term is poor; let the caller use u.
    if (std::abs(c[k]) > 1.0) return false;
  }
  double wx = std::clamp(fx - i0, 0.0, 1.0);
  double wy = std::clamp(fy - j0, 0.0, 1.0);
  raw = (1 - wy) * ((1 - wx) * c[0] + wx * c[1]) +
        wy * ((1 - wx) * c[2] + wx * c[3]);
  return true;
}

bool GField::in_grid(cplx z, double margin) const {
  cplx g = cplx(std::cos(rotation_), -std::sin(rotation_)) * z;
  return std::abs(g.real()) <= R_dom_ - margin &&
         std::abs(g.imag()) <= R_dom_ - margin;
}

void GField::set_diags(double residual_rms, double min_raw_G, int iters) {
  residual_rms_ = residual_rms;
  min_raw_G_ = min_raw_G;
  newton_iterations_ = iters;
}

GField solve_field(const PolyQD& qd, double t, double R_dom, int n,
                   const SolveOptions& opts) {
  if (!(t > 0) || !(R_dom > 0) || n < 8)
    throw Error("solve_field: bad grid parameters");
  GField field(qd, t, R_dom, n, opts.rotation);
  const double h = field.h();
  if (qd.degree() >= 1)
    for (const Zero& z : zeros(qd))
      if (std::abs(z.position) >= R_dom - 2 * h)
        throw SingularBoundary(
            "zero within 2h of the Dirichlet layer; enlarge R_dom");

  const std::size_t nn = static_cast<std::size_t>(n) * n;
  if (!opts.forcing.empty() && opts.forcing.size() != nn)
    throw Error("forcing vector size mismatch");
  if (!opts.boundary_override.empty() && opts.boundary_override.size() != nn)
    throw Error("boundary override size mismatch");

  // Geometry tables: w = t^2 |phi|^2 and log(t|phi|) per node.
  std::vector<double> w(nn), lphi(nn);
  std::vector<double>& u = field.u_mut();
  std::vector<std::size_t> cells;
  std::vector<int> gi(nn, -1);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t id = field.idx(i, j);
      const double ap = std::abs(qd.eval(field.node(i, j)));
      w[id] = t * t * ap * ap;
      lphi[id] = std::log(t * ap);  // -inf exactly at zeros
      if (field.interior(i, j)) {
        gi[id] = static_cast<int>(cells.size());
        cells.push_back(id);
        u[id] = std::log(t * std::max(ap, h * h));
      } else {
        u[id] = opts.boundary_override.empty() ? lphi[id]
                                               : opts.boundary_override[id];
        if (!std::isfinite(u[id]))
          throw SingularBoundary("phi vanishes on the Dirichlet layer");
      }
    }
  const int m = static_cast<int>(cells.size());
  if (m == 0) throw Error("solve_field: empty interior");

  const double ih2 = 1.0 / (h * h);
  auto force = [&](std::size_t id) {
    return opts.forcing.empty() ? 0.0 : opts.forcing[id];
  };

  Eigen::VectorXd F(m);
  auto residual = [&](const std::vector<double>& uu) {
    for (int r = 0; r < m; ++r) {
      const std::size_t id = cells[r];
      const int i = static_cast<int>(id) % n, j = static_cast<int>(id) / n;
      double lap = (uu[field.idx(i - 1, j)] + uu[field.idx(i + 1, j)] +
                    uu[field.idx(i, j - 1)] + uu[field.idx(i, j + 1)] -
                    4 * uu[id]) *
                   ih2;
      F(r) = lap - 2 * std::exp(uu[id]) + 2 * w[id] * std::exp(-uu[id]) -
             force(id);
    }
    return F.norm() / std::sqrt(static_cast<double>(m));
  };

  // M = -Jacobian = -Lap_h + diag(2 e^u + 2 w e^{-u}), symmetric positive
  // definite; the pattern is fixed so only the diagonal changes per iteration.
  Eigen::SparseMatrix<double> M(m, m);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(5 * static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) {
      const std::size_t id = cells[r];
      const int i = static_cast<int>(id) % n, j = static_cast<int>(id) / n;
      trips.emplace_back(r, r, 4 * ih2 + 1.0);
      const std::size_t nb[4] = {field.idx(i - 1, j), field.idx(i + 1, j),
                                 field.idx(i, j - 1), field.idx(i, j + 1)};
      for (std::size_t b : nb)
        if (gi[b] >= 0) trips.emplace_back(r, gi[b], -ih2);
    }
    M.setFromTriplets(trips.begin(), trips.end());
    M.makeCompressed();
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.analyzePattern(M);

  const double tol = std::max(opts.residual_tol, 1e-14);
  double rms = residual(u);
  int iters = 0;
  while (rms > tol) {
    if (iters >= opts.max_newton)
      throw NewtonDiverged("no convergence after " +
                           std::to_string(opts.max_newton) +
                           " Newton iterations; residual rms " +
                           std::to_string(rms));
    Eigen::VectorXd rhs = F;
    for (int r = 0; r < m; ++r) {
      const std::size_t id = cells[r];
      M.coeffRef(r, r) =
          4 * ih2 + 2 * std::exp(u[id]) + 2 * w[id] * std::exp(-u[id]);
    }
    ldlt.factorize(M);
    if (ldlt.info() != Eigen::Success)
      throw NewtonDiverged("linear solve failed during Newton iteration");
    Eigen::VectorXd step = ldlt.solve(rhs);
    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
      std::vector<double> un = u;
      for (int r = 0; r < m; ++r) un[cells[r]] += alpha * step(r);
      double rn = residual(un);
      if (rn < rms * (1 - 1e-4 * alpha) || rn < tol) {
        u = std::move(un);
        rms = rn;
        accepted = true;
        break;
      }
    }
    ++iters;
    if (!accepted)
      throw NewtonDiverged("damped step stalled at residual rms " +
                           std::to_string(rms));
  }

  double min_raw = 0.0;
  for (int r = 0; r < m; ++r) {
    const std::size_t id = cells[r];
    if (std::isfinite(lphi[id])) min_raw = std::min(min_raw, u[id] - lphi[id]);
  }
  field.set_diags(rms, min_raw, iters);
  return field;
}

double MetricSample::length_of(cplx v) const {
  double q = g11 * v.real() * v.real() + 2 * g12 * v.real() * v.imag() +
             g22 * v.imag() * v.imag();
  return std::sqrt(std::max(0.0, q));
}

double MetricSample::eig_max() const {
  return 0.5 * (g11 + g22) + std::hypot(0.5 * (g11 - g22), g12);
}

double MetricSample::eig_min() const {
  return std::max(0.0,
                  0.5 * (g11 + g22) - std::hypot(0.5 * (g11 - g22), g12));
}

MetricSample metric_at(const GField& field, cplx z) {
  if (!field.in_grid(z)) throw OutOfGrid("metric sample outside solved grid");
  const double t = field.t();
  const cplx p = field.qd().eval(z);
  const double ap = std::abs(p);
  // |phi| cosh G = (e^u / t + t |phi|^2 e^{-u}) / 2, finite at zeros of phi.
  // Where the discrete solve undershoots (raw G < 0) the projected G = 0 is
  // used, i.e. the cosh factor collapses to |phi|.
  double ch, G, raw;
  if (ap > 0.0 && field.interp_raw_G(z, raw)) {
    ch = raw <= 0.0 ? ap : ap * std::cosh(raw);
    G = std::max(0.0, raw);
  } else {
    const double uu = field.interp_u(z);
    const double ep = std::exp(uu);
    if (ap == 0.0) {
      ch = 0.5 * ep / t;
      G = kInf;
    } else {
      raw = uu - std::log(t * ap);
      ch = raw <= 0.0 ? ap : 0.5 * (ep / t + t * ap * ap / ep);
      G = std::max(0.0, raw);
    }
  }
  MetricSample s;
  s.g11 = 0.5 * (ch + p.real());
  s.g12 = -0.5 * p.imag();
  s.g22 = 0.5 * (ch - p.real());
  s.abs_phi = ap;
  s.G = G;
  return s;
}

namespace {

double seg_speed(const GField& f, cplx a, cplx dir, double s) {
  return metric_at(f, a + s * dir).length_of(dir);
}

double seg_adapt(const GField& f, cplx a, cplx dir, double s0, double s2,
                 double f0, double f1, double f2, double whole, double tol,
                 int depth) {
  const double sm = 0.5 * (s0 + s2);
  const double fl = seg_speed(f, a, dir, 0.5 * (s0 + sm));
  const double fr = seg_speed(f, a, dir, 0.5 * (sm + s2));
  const double left = (s2 - s0) / 12 * (f0 + 4 * fl + f1);
  const double right = (s2 - s0) / 12 * (f1 + 4 * fr + f2);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15;
  return seg_adapt(f, a, dir, s0, sm, f0, fl, f1, left, tol / 2, depth - 1) +
         seg_adapt(f, a, dir, sm, s2, f1, fr, f2, right, tol / 2, depth - 1);
}

}  // namespace

double curve_length_gt(const GField& field, const PathPolyline& path,
                       double rel_tol) {
  const std::vector<cplx>& pts = path.pts;
  if (pts.size() < 2) return 0.0;
  double total = 0.0;
  std::vector<double> coarse(pts.size() - 1, 0.0);
  double coarse_sum = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    cplx dir = pts[i + 1] - pts[i];
    if (std::abs(dir) == 0.0) continue;
    coarse[i] = (seg_speed(field, pts[i], dir, 0.0) +
                 4 * seg_speed(field, pts[i], dir, 0.5) +
                 seg_speed(field, pts[i], dir, 1.0)) /
                6;
    coarse_sum += coarse[i];
  }
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    cplx dir = pts[i + 1] - pts[i];
    if (std::abs(dir) == 0.0) continue;
    double f0 = seg_speed(field, pts[i], dir, 0.0);
    double f1 = seg_speed(field, pts[i], dir, 0.5);
    double f2 = seg_speed(field, pts[i], dir, 1.0);
    double tol =
        rel_tol * std::max(coarse[i], 1e-6 * coarse_sum) + 1e-300;
    total += seg_adapt(field, pts[i], dir, 0.0, 1.0, f0, f1, f2, coarse[i],
                       tol, 24);
  }
  return total;
}

DistanceResult distance_gt(const GField& field, cplx x1, cplx x2) {
  if (!field.in_grid(x1) || !field.in_grid(x2))
    throw OutOfGrid("distance endpoint outside solved grid");
  if (x1 == x2) {
    DistanceResult same;
    same.path.pts = {x1, x2};
    return same;
  }
  const double th = field.rotation();
  const cplx rot(std::cos(th), std::sin(th));
  const cplx inv = std::conj(rot);
  // All shortest-path bookkeeping happens in grid-frame coordinates so the
  // lattice matches the solved field; costs evaluate in plane coordinates.
  detail::PathGrid pg(field.R_dom(), field.h());
  auto hop = [&](cplx a, cplx b) {
    if (!pg.holds(a) || !pg.holds(b)) return 1e18;
    cplx pa = rot * a, pb = rot * b;
    return metric_at(field, 0.5 * (pa + pb)).length_of(pb - pa);
  };
  // Straightening proposes chords much longer than a lattice hop; composite
  // midpoint with pieces at most h keeps those costs honest where the metric
  // varies on the 1/sqrt(t) scale.
  auto cost = [&](cplx a, cplx b) {
    if (!pg.holds(a) || !pg.holds(b)) return 1e18;
    cplx pa = rot * a, pb = rot * b;
    int m = std::clamp(1 + static_cast<int>(std::abs(pb - pa) / field.h()), 1,
                       256);
    double acc = 0;
    for (int k = 0; k < m; ++k) {
      cplx u0 = pa + (static_cast<double>(k) / m) * (pb - pa);
      cplx u1 = pa + (static_cast<double>(k + 1) / m) * (pb - pa);
      acc += metric_at(field, 0.5 * (u0 + u1)).length_of(u1 - u0);
    }
    return acc;
  };
  auto [graph, pts] = detail::grid_shortest_polyline(pg, hop, inv * x1,
                                                     inv * x2);
  detail::straighten_polyline(cost, pts, field.h(), 12);
  // Second seed: the cheap direction of g_t tracks the vertical foliation at
  // every t, so a shortest path for the t-independent transverse measure
  // starts the relaxation inside the right channel even when 16-direction
  // quantization makes the metric graph prefer a costlier cut.
  {
    const PolyQD& qd = field.qd();
    auto measure_hop = [&](cplx a, cplx b) {
      if (!pg.holds(a) || !pg.holds(b)) return 1e18;
      cplx pa = rot * a, pb = rot * b, d = pb - pa;
      cplx s0 = std::sqrt(qd.eval(pa));
      cplx sm = std::sqrt(qd.eval(0.5 * (pa + pb)));
      if (std::real(sm * std::conj(s0)) < 0) sm = -sm;
      cplx s1 = std::sqrt(qd.eval(pb));
      if (std::real(s1 * std::conj(sm)) < 0) s1 = -s1;
      return (std::abs(std::real(s0 * d)) + 4 * std::abs(std::real(sm * d)) +
              std::abs(std::real(s1 * d))) /
             6.0;
    };
    auto measure_hop_gnc = [&](cplx a, cplx b, double kappa) {
      if (!pg.holds(a) || !pg.holds(b)) return 1e18;
      cplx pa = rot * a, pb = rot * b, d = pb - pa;
      cplx s0 = std::sqrt(qd.eval(pa));
      cplx sm = std::sqrt(qd.eval(0.5 * (pa + pb)));
      if (std::real(sm * std::conj(s0)) < 0) sm = -sm;
      cplx s1 = std::sqrt(qd.eval(pb));
      if (std::real(s1 * std::conj(sm)) < 0) s1 = -s1;
      cplx avg = (s0 * d + 4.0 * (sm * d) + s1 * d) / 6.0;
      return std::hypot(avg.real(), kappa * avg.imag());
    };
    auto [mgraph, mpts] = detail::grid_shortest_polyline(pg, measure_hop,
                                                         inv * x1, inv * x2);
    (void)mgraph;
    // Relax under the measure first: that landscape has no barrier between
    // the lattice route and the channel, so this step actually finds the
    // channel; the g_t relax then only has to polish within the basin.  The
    // pure measure is flat along leaves, so anneal the leaf-direction weight
    // from 1 toward 0 before the pure pass (same schedule as the grid
    // oracle) to keep wide detours from wedging.
    for (double kappa : {1.0, 0.4, 0.15, 0.05, 0.02}) {
      auto gnc = [&](cplx a, cplx b) { return measure_hop_gnc(a, b, kappa); };
      detail::straighten_polyline(gnc, mpts, field.h(), 6);
    }
    detail::straighten_polyline(measure_hop, mpts, field.h(), 12);
    detail::straighten_polyline(cost, mpts, field.h(), 12);
    if (detail::polyline_cost(cost, mpts) < detail::polyline_cost(cost, pts))
      pts = std::move(mpts);
  }
  const double mid = detail::polyline_cost(cost, pts);
  DistanceResult res;
  res.path.pts.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) res.path.pts[i] = rot * pts[i];
  res.value = curve_length_gt(field, res.path, 1e-8);
  res.graph_value = std::max(graph, res.value);
  // Two measurable discrepancies bound the h-scale error: raw graph vs
  // quadrature value, and midpoint-rule vs quadrature on the final path.
  res.error_estimate =
      std::abs(graph - res.value) + std::abs(mid - res.value);
  return res;
}

double boundary_truncation_gap(const PolyQD& qd, double t, double R1,
                               double R2, double h) {
  auto solve_at = [&](double R) {
    int n = std::max(9, static_cast<int>(std::lround(2 * R / h)) + 1);
    return solve_field(qd, t, R, n);
  };
  GField fa = solve_at(R1), fb = solve_at(R2);
  const GField& inner = R1 <= R2 ? fa : fb;
  const GField& outer = R1 <= R2 ? fb : fa;
  double gap = 0.0;
  for (int j = 0; j < inner.ny(); ++j)
    for (int i = 0; i < inner.nx(); ++i) {
      if (!inner.interior(i, j)) continue;
      cplx z = inner.node(i, j);
      if (std::abs(z) > inner.R_dom() - 2 * inner.h()) continue;
      double ap = std::abs(qd.eval(z));
      if (ap == 0.0) continue;
      double l = std::log(t * ap);
      double ga = std::max(0.0, inner.u(i, j) - l);
      double gb = std::max(0.0, outer.interp_u(z) - l);
      gap = std::max(gap, std::abs(ga - gb));
    }
  return gap;
}

}  // namespace qdlab
