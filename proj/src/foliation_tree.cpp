#include "qdlab/foliation_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "grid_path.hpp"
#include "qdlab/support.hpp"

namespace qdlab {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2 * kPi;
const double kInf = std::numeric_limits<double>::infinity();

double wrap2pi(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0 ? a + kTwoPi : a;
}

// Branch continuation: the sqrt(phi) value on the same sheet as the seed.
cplx aligned_sqrt(cplx phi, cplx seed) {
  cplx w = std::sqrt(phi);
  if (seed != cplx(0, 0) &&
      w.real() * seed.real() + w.imag() * seed.imag() < 0)
    w = -w;
  return w;
}

double dot(cplx a, cplx b) { return a.real() * b.real() + a.imag() * b.imag(); }

// ---------------------------------------------------------------------------
// Local normal form at a zero: phi ~ a (z - z0)^m, flat distance along a ray
// is (2/p) sqrt|a| r^{p/2} with p = m + 2.

struct LocalModel {
  cplx z0;
  int m = 1;
  int p = 3;
  cplx a;
  double sqa = 1;

  double flat_of_r(double r) const {
    return 2.0 / p * sqa * std::pow(r, 0.5 * p);
  }
  double r_of_flat(double f) const {
    return std::pow(0.5 * p * f / sqa, 2.0 / p);
  }
};

std::vector<LocalModel> local_models(const PolyQD& qd,
                                     const std::vector<Zero>& zs) {
  std::vector<LocalModel> lms;
  lms.reserve(zs.size());
  for (const Zero& z : zs) {
    LocalModel lm;
    lm.z0 = z.position;
    lm.m = z.multiplicity;
    lm.p = z.multiplicity + 2;
    lm.a = qd.eval_deriv_scaled(z.position, z.multiplicity);
    lm.sqa = std::sqrt(std::abs(lm.a));
    lms.push_back(lm);
  }
  return lms;
}

double clearance_flat(const std::vector<LocalModel>& lms, cplx z,
                      int* which = nullptr) {
  double best = kInf;
  int arg = -1;
  for (std::size_t i = 0; i < lms.size(); ++i) {
    double f = lms[i].flat_of_r(std::abs(z - lms[i].z0));
    if (f < best) {
      best = f;
      arg = static_cast<int>(i);
    }
  }
  if (which) *which = arg;
  return best;
}

// ---------------------------------------------------------------------------
// Sectors at infinity: the k = d + 2 vertical asymptotic directions solve
// arg(a_d) + k theta = pi (mod 2 pi); sector j spans [theta_j, theta_{j+1}).

std::vector<double> vertical_directions(const PolyQD& qd) {
  int k = qd.sides();
  std::vector<double> th(k);
  for (int j = 0; j < k; ++j) {
    double a = (kPi - std::arg(qd.leading()) + j * kTwoPi) / k;
    th[j] = std::atan2(std::sin(a), std::cos(a));
  }
  std::sort(th.begin(), th.end());
  return th;
}

// The tiny positive nudge keeps points exactly on a boundary direction (the
// separatrix rays themselves) classified deterministically.
int sector_of(const std::vector<double>& bounds, double ang) {
  double a = ang + 1e-9;
  int best = 0;
  double bestd = kInf;
  for (std::size_t j = 0; j < bounds.size(); ++j) {
    double d = wrap2pi(a - bounds[j]);
    if (d < bestd) {
      bestd = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Escape radii: |zeta| beyond 4 * (flat zero diameter + 1) cannot return,
// converted to a |z| radius through the leading-order flat metric.

struct EscapeSpec {
  double flat = 0;
  double zrad = 0;
  double diam = 0;
};

EscapeSpec escape_spec(const PolyQD& qd, const std::vector<Zero>& zs) {
  EscapeSpec es;
  double rz = 0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    rz = std::max(rz, std::abs(zs[i].position));
    for (std::size_t j = i + 1; j < zs.size(); ++j)
      es.diam = std::max(es.diam,
                         flat_chord(qd, zs[i].position, zs[j].position));
  }
  es.flat = 4 * (es.diam + 1);
  int k = qd.sides();
  double rphi =
      std::pow(k * es.flat / (2 * std::sqrt(std::abs(qd.leading()))), 2.0 / k);
  es.zrad = std::max(rphi, 3 * (rz + 1));
  return es;
}

double default_budget(const EscapeSpec& es) { return 3 * es.flat + 16; }

// ---------------------------------------------------------------------------
// Separatrix launch: leave a zero along a prong at a small flat distance,
// with the departure angle refined until the transverse coordinate vanishes
// at the launch point.

struct RayProbe {
  cplx zeta;  // branch-tracked natural coordinate, zero at the zero itself
  cplx z;
  cplx w;
};

RayProbe probe_ray(const PolyQD& qd, const LocalModel& lm, double s, double th,
                   double flat_tiny, double flat_launch) {
  double rt = lm.r_of_flat(flat_tiny);
  double rl = lm.r_of_flat(flat_launch);
  cplx ra = std::sqrt(lm.a);
  cplx zt = lm.z0 + std::polar(rt, th);
  cplx zl = lm.z0 + std::polar(rl, th);
  cplx zeta_t = s * (2.0 / lm.p) * ra * std::pow(rt, 0.5 * lm.p) *
                std::polar(1.0, 0.5 * lm.p * th);
  cplx wt = s * ra * std::pow(rt, 0.5 * lm.m) * std::polar(1.0, 0.5 * lm.m * th);
  IntegrateOptions io;
  io.tol = 1e-13;
  io.branch_seed = wt;
  io.zero_clearance = 0.25 * flat_tiny;
  BranchedIntegral bi = integrate_sqrt(qd, PathPolyline{{zt, zl}}, io);
  return {zeta_t + bi.delta_zeta, zl, bi.sqrt_end};
}

struct Launch {
  cplx z;
  cplx w;          // oriented so the trace departs outward
  double xi0 = 0;  // measures spent between the zero and the launch point
  double eta0 = 0;
  double flat0 = 0;
  double angle = 0;
};

Launch launch_separatrix(const PolyQD& qd, const LocalModel& lm, double th0,
                         LeafDir dir, double nearest_flat) {
  double fl = std::min(1e-3, 0.125 * nearest_flat);
  double ft = 0.01 * fl;
  cplx ra = std::sqrt(lm.a);
  double phase = std::arg(ra) + 0.5 * lm.p * th0;
  double s;
  if (dir == LeafDir::Vertical)
    s = std::sin(phase) >= 0 ? 1.0 : -1.0;  // zeta heads towards +i infinity
  else
    s = std::cos(phase) >= 0 ? 1.0 : -1.0;
  auto held = [&](const RayProbe& pr) {
    return dir == LeafDir::Vertical ? pr.zeta.real() : pr.zeta.imag();
  };
  double cap = 0.35 * kTwoPi / lm.p;
  double a0 = th0, a1 = th0 + 1e-6 / lm.p;
  RayProbe p1 = probe_ray(qd, lm, s, a1, ft, fl);
  double f0 = held(probe_ray(qd, lm, s, a0, ft, fl));
  double f1 = held(p1);
  for (int it = 0; it < 60 && std::abs(f1) > 1e-13 * (1 + fl); ++it) {
    if (f1 == f0) break;
    double an = a1 - f1 * (a1 - a0) / (f1 - f0);
    an = std::clamp(an, th0 - cap, th0 + cap);
    a0 = a1;
    f0 = f1;
    a1 = an;
    p1 = probe_ray(qd, lm, s, a1, ft, fl);
    f1 = held(p1);
  }
  if (std::abs(f1) > 1e-9 * (1 + fl))
    throw NonConvergent("separatrix launch refinement did not converge");
  Launch L;
  L.z = p1.z;
  L.w = p1.w;
  L.angle = a1;
  L.xi0 = std::abs(p1.zeta.real());
  L.eta0 = std::abs(p1.zeta.imag());
  L.flat0 = std::abs(p1.zeta);
  return L;
}

// ---------------------------------------------------------------------------
// Wall crossing machinery: a spatial hash over the stored separatrix
// segments, exact segment intersections, and the merge rules implied by the
// geometry (a horizontal trace meets each vertical wall, and each vertex
// class, at one xi-offset only).

struct WallIndex {
  std::vector<cplx> sa, sb;
  std::vector<cplx> ref;  // a sample on the true wall, never the zero itself
  std::vector<int> seg_wall;
  double cell = 1;
  std::unordered_map<long long, std::vector<int>> buckets;

  static long long key(int ix, int iy) {
    return (static_cast<long long>(ix) << 32) ^
           static_cast<unsigned int>(iy);
  }

  void build(const std::vector<std::vector<cplx>>& walls) {
    double maxlen = 1e-6;
    for (const auto& w : walls)
      for (std::size_t i = 0; i + 1 < w.size(); ++i)
        maxlen = std::max(maxlen, std::abs(w[i + 1] - w[i]));
    cell = maxlen;
    for (std::size_t wi = 0; wi < walls.size(); ++wi) {
      const auto& w = walls[wi];
      for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        int id = static_cast<int>(sa.size());
        sa.push_back(w[i]);
        sb.push_back(w[i + 1]);
        ref.push_back(i == 0 ? w[i + 1] : w[i]);
        seg_wall.push_back(static_cast<int>(wi));
        int x0 = static_cast<int>(std::floor(
            std::min(w[i].real(), w[i + 1].real()) / cell));
        int x1 = static_cast<int>(std::floor(
            std::max(w[i].real(), w[i + 1].real()) / cell));
        int y0 = static_cast<int>(std::floor(
            std::min(w[i].imag(), w[i + 1].imag()) / cell));
        int y1 = static_cast<int>(std::floor(
            std::max(w[i].imag(), w[i + 1].imag()) / cell));
        for (int x = x0; x <= x1; ++x)
          for (int y = y0; y <= y1; ++y) buckets[key(x, y)].push_back(id);
      }
    }
  }

  void candidates(cplx a, cplx b, std::vector<int>& out) const {
    out.clear();
    int x0 = static_cast<int>(std::floor(std::min(a.real(), b.real()) / cell));
    int x1 = static_cast<int>(std::floor(std::max(a.real(), b.real()) / cell));
    int y0 = static_cast<int>(std::floor(std::min(a.imag(), b.imag()) / cell));
    int y1 = static_cast<int>(std::floor(std::max(a.imag(), b.imag()) / cell));
    for (int x = x0; x <= x1; ++x)
      for (int y = y0; y <= y1; ++y) {
        auto it = buckets.find(key(x, y));
        if (it != buckets.end())
          out.insert(out.end(), it->second.begin(), it->second.end());
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
};

double cross2(cplx a, cplx b) { return a.real() * b.imag() - a.imag() * b.real(); }

bool seg_intersect(cplx p0, cplx p1, cplx q0, cplx q1, double& s, double& t) {
  cplx r = p1 - p0, u = q1 - q0;
  double det = cross2(r, u);
  // vertical and horizontal leaves meet perpendicularly; a near-parallel
  // configuration is a tangency artefact, not a transversal crossing
  if (std::abs(det) < 1e-12 * std::abs(r) * std::abs(u)) return false;
  cplx d = q0 - p0;
  s = cross2(d, u) / det;
  t = cross2(d, r) / det;
  if (s < -1e-9 || s > 1 + 1e-9 || t < -1e-9 || t > 1 + 1e-9) return false;
  s = std::clamp(s, 0.0, 1.0);
  t = std::clamp(t, 0.0, 1.0);
  return true;
}

struct CrossEvent {
  double xi = 0;
  int cls = -1;
  int wall = -1;  // -1: synthetic (launch or terminal capture)
};

std::vector<CrossEvent> raw_crossings(const PolyQD& qd, const WallIndex& wi,
                                      const std::vector<int>& wall_cls,
                                      const std::vector<cplx>& pts,
                                      const std::vector<double>& xi_abs) {
  std::vector<CrossEvent> out;
  std::vector<int> cand;
  // zeta is a local primitive: the chord integral from the stored sample to
  // the intersection gives the exact xi there, and a second integral onto a
  // true wall sample removes the sagitta of the discretised wall (xi is
  // constant along the wall)
  auto leg = [&](cplx a, cplx b, cplx seed, cplx* wend) -> double {
    if (std::abs(b - a) < 1e-14 * (1 + std::abs(a))) {
      *wend = seed;
      return 0.0;
    }
    IntegrateOptions io;
    io.tol = 1e-12;
    io.zero_clearance = 0;
    io.branch_seed = seed;
    BranchedIntegral bi = integrate_sqrt(qd, PathPolyline{{a, b}}, io);
    *wend = bi.sqrt_end;
    return bi.delta_zeta.real();
  };
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    wi.candidates(pts[i], pts[i + 1], cand);
    for (int sidx : cand) {
      double s, t;
      if (seg_intersect(pts[i], pts[i + 1], wi.sa[sidx], wi.sb[sidx], s, t)) {
        cplx x = pts[i] + s * (pts[i + 1] - pts[i]);
        // the scan branch makes Re zeta increase along the travel direction
        cplx seed = std::conj(pts[i + 1] - pts[i]);
        cplx wend;
        double xi = xi_abs[i] + leg(pts[i], x, seed, &wend);
        xi += leg(x, wi.ref[sidx], wend, &wend);
        out.push_back({xi, wall_cls[wi.seg_wall[sidx]], wi.seg_wall[sidx]});
      }
    }
  }
  return out;
}

// A wall is a vertical leaf, so its xi-offset from the scan start is single
// valued; likewise a vertex class is passed at one offset (tree geodesics
// are injective).  Violations beyond tolerance are genuine degeneracies.
std::vector<CrossEvent> merge_events(std::vector<CrossEvent> ev) {
  std::sort(ev.begin(), ev.end(), [](const CrossEvent& a, const CrossEvent& b) {
    return a.xi < b.xi;
  });
  std::vector<CrossEvent> out;
  std::unordered_map<int, double> wall_seen, cls_seen;
  for (const CrossEvent& e : ev) {
    double tol = 1e-5 * (1 + std::abs(e.xi));
    auto wit = wall_seen.find(e.wall);
    if (e.wall >= 0 && wit != wall_seen.end()) {
      if (std::abs(e.xi - wit->second) > tol)
        throw Degenerate(
            "a horizontal trace crossed one vertical wall at two offsets; "
            "retry with a phase-rotated differential exp(i a) phi");
      continue;
    }
    auto cit = cls_seen.find(e.cls);
    if (cit != cls_seen.end()) {
      if (std::abs(e.xi - cit->second) > tol)
        throw Degenerate(
            "one vertex class was crossed at two separated offsets; retry "
            "with a phase-rotated differential exp(i a) phi");
      continue;
    }
    if (e.wall >= 0) wall_seen[e.wall] = e.xi;
    cls_seen[e.cls] = e.xi;
    out.push_back(e);
  }
  return out;
}

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(n) {
    for (int i = 0; i < n; ++i) p[i] = i;
  }
  int find(int x) {
    while (p[x] != x) x = p[x] = p[p[x]];
    return x;
  }
  void unite(int a, int b) { p[find(a)] = find(b); }
};

double prong_angle(const LocalModel& lm, int j, LeafDir dir) {
  double target = dir == LeafDir::Vertical ? kPi : 0.0;
  return (target - std::arg(lm.a) + j * kTwoPi) / lm.p;
}

SeparatrixGraph skeleton_impl(const PolyQD& qd, const TraceOptions& opts,
                              bool extras);

// Lower bound on the flat distance crossed radially outward from the zeros,
// marched until it exceeds the cluster diameter + 1; the stop radius bounds
// the sink neighbourhood.
void sink_constants(const PolyQD& qd, const std::vector<Zero>& zs, double diam,
                    double* C, double* RU) {
  double rz = 0;
  for (const Zero& z : zs) rz = std::max(rz, std::abs(z.position));
  const int na = 1440;
  auto ring_min = [&](double r) {
    double mn = kInf;
    for (int i = 0; i < na; ++i)
      mn = std::min(mn, std::sqrt(std::abs(
                            qd.eval(std::polar(r, i * kTwoPi / na)))));
    return mn;
  };
  double target = diam + 1;
  double r = rz, acc = 0, dr = 0.005 * (1 + rz), stop = 0;
  for (int it = 0; it < 200000; ++it) {
    double m = ring_min(r + 0.5 * dr);
    if (m > 0 && acc + m * dr >= target) {
      stop = r + (target - acc) / m;
      acc = target;
      break;
    }
    acc += m * dr;
    r += dr;
    dr = std::min(dr * 1.05, 0.02 * (1 + r));
  }
  if (acc < target)
    throw NonConvergent("radial flat-distance march failed to reach its target");
  // shortest loop around infinity outside the stop radius: per-angle minimum
  // of sqrt|phi| r over the annulus (the integrand only grows further out)
  const int nr = 48;
  double loop = 0;
  for (int i = 0; i < na; ++i) {
    double th = i * kTwoPi / na, mn = kInf;
    for (int j = 0; j < nr; ++j) {
      double rr = stop * std::pow(4.0, static_cast<double>(j) / (nr - 1));
      mn = std::min(mn, std::sqrt(std::abs(qd.eval(std::polar(rr, th)))) * rr);
    }
    loop += mn * (kTwoPi / na);
  }
  // 0.98: margin for the angular sampling of the two minima
  *C = 0.98 * std::min(target, 0.45 * loop);
  *RU = stop;
}

}  // namespace

// ---------------------------------------------------------------------------
// Leaf tracing

Trajectory trace_leaf(const PolyQD& qd, cplx z0, LeafDir dir,
                      const TraceOptions& opts) {
  std::vector<Zero> zs = qd.degree() >= 1 ? zeros(qd) : std::vector<Zero>{};
  std::vector<LocalModel> lms = local_models(qd, zs);
  int near0 = -1;
  if (clearance_flat(lms, z0, &near0) < opts.capture_flat)
    throw StartAtZero("trace_leaf started within the capture radius of a zero");
  EscapeSpec es = escape_spec(qd, zs);
  double budget =
      opts.max_flat_length > 0 ? opts.max_flat_length : 2 * es.flat + 16;
  std::vector<double> sectors = vertical_directions(qd);
  const cplx fac = dir == LeafDir::Vertical ? cplx(0, 1) : cplx(1, 0);

  auto vel = [&](cplx z, cplx wref, cplx* wout) -> cplx {
    cplx w = aligned_sqrt(qd.eval(z), wref);
    *wout = w;
    return fac / w;
  };
  // one RK4 step of dz/ds = fac / sqrt(phi) at flat step h
  auto rk4 = [&](cplx z, cplx w, double h, cplx* wend) -> cplx {
    cplx w1, w2, w3, w4;
    cplx k1 = vel(z, w, &w1);
    cplx k2 = vel(z + 0.5 * h * k1, w1, &w2);
    cplx k3 = vel(z + 0.5 * h * k2, w2, &w3);
    cplx k4 = vel(z + h * k3, w3, &w4);
    cplx zn = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    *wend = aligned_sqrt(qd.eval(zn), w4);
    return zn;
  };
  // branch-tracked Simpson of sqrt(phi) dz over a chord (zeta is a local
  // primitive, so the chord integral equals the step's delta zeta)
  auto simpson = [&](cplx a, cplx b, cplx wref, cplx* wend) -> cplx {
    cplx wm = aligned_sqrt(qd.eval(0.5 * (a + b)), wref);
    cplx wb = aligned_sqrt(qd.eval(b), wm);
    *wend = wb;
    return (b - a) / 6.0 * (wref + 4.0 * wm + wb);
  };

  Trajectory T;
  cplx z = z0;
  cplx w = aligned_sqrt(qd.eval(z0), opts.branch_seed);
  T.pts = {z0};
  T.xi_acc = {0};
  T.eta_acc = {0};
  double xi = 0, eta = 0, arc = 0;
  double clr = clearance_flat(lms, z);
  double h = std::min({0.1, 0.25 * clr, 0.5 * budget});

  auto held = [&](cplx dz) {
    return dir == LeafDir::Vertical ? dz.real() : dz.imag();
  };

  for (long iter = 0;; ++iter) {
    if (iter > 2000000)
      throw NonConvergent("leaf trace exceeded its step budget");
    h = std::clamp(h, 1e-12, std::min(0.5, 0.3 * clr));
    cplx wf, wh1, wh;
    cplx zf = rk4(z, w, h, &wf);
    cplx zm = rk4(z, w, 0.5 * h, &wh1);
    cplx zh = rk4(zm, wh1, 0.5 * h, &wh);
    double err = std::abs(zf - zh);
    double tol_step = opts.tol * h + 1e-15;
    if (err > tol_step || dot(wf, wh) <= 0) {
      h *= std::max(0.2, 0.7 * std::pow(tol_step / (err + 1e-300), 0.25));
      continue;
    }
    cplx zn = zh + (zh - zf) / 15.0;  // Richardson
    cplx wa, wb;
    cplx dz1 = simpson(z, zm, w, &wa);
    cplx dz2 = simpson(zm, zn, wa, &wb);
    cplx dzeta = dz1 + dz2;
    cplx wn = aligned_sqrt(qd.eval(zn), wb);
    if (dot(wn, w) <= 0) {  // branch safety: never rotate past a quarter turn
      h *= 0.5;
      continue;
    }

    double drift = held(dzeta);
    xi += std::abs(dzeta.real());
    eta += std::abs(dzeta.imag());
    arc += std::abs(dzeta);
    // pull the endpoint back onto the leaf: remove the accumulated
    // transverse coordinate (exact to second order in the drift)
    cplx corr = dir == LeafDir::Vertical ? cplx(-drift, 0) : cplx(0, -drift);
    zn += corr / wn;
    wn = aligned_sqrt(qd.eval(zn), wn);

    double clr_n = clearance_flat(lms, zn);
    if (clr_n < opts.capture_flat) {
      // bisect along the chord onto the capture sphere
      cplx lo = z, hi = zn;
      for (int b = 0; b < 80; ++b) {
        cplx mid = 0.5 * (lo + hi);
        if (clearance_flat(lms, mid) < opts.capture_flat)
          hi = mid;
        else
          lo = mid;
      }
      int hz = -1;
      clearance_flat(lms, hi, &hz);
      cplx wcap;
      cplx dzc = simpson(z, hi, w, &wcap);
      T.pts.push_back(hi);
      T.xi_acc.push_back(T.xi_acc.back() + std::abs(dzc.real()));
      T.eta_acc.push_back(T.eta_acc.back() + std::abs(dzc.imag()));
      T.arc_length_flat = arc - std::abs(dzeta) + std::abs(dzc);
      T.termination = Termination::HitZero;
      T.hit_zero = hz;
      T.sqrt_end = wcap;
      return T;
    }

    z = zn;
    w = wn;
    clr = clr_n;
    T.pts.push_back(z);
    T.xi_acc.push_back(xi);
    T.eta_acc.push_back(eta);

    if (std::abs(z) > es.zrad &&
        dot(z, z - T.pts[T.pts.size() - 2]) > 0) {
      T.arc_length_flat = arc;
      T.termination = Termination::Escaped;
      T.escape_sector = sector_of(sectors, std::arg(z));
      T.sqrt_end = w;
      return T;
    }
    if (arc >= budget) {
      T.arc_length_flat = arc;
      T.termination = Termination::Truncated;
      T.sqrt_end = w;
      return T;
    }
    if (err < 0.02 * tol_step) h *= 1.6;
  }
}

// ---------------------------------------------------------------------------
// Separatrix skeleton

namespace {

SeparatrixGraph skeleton_impl(const PolyQD& qd, const TraceOptions& opts,
                              bool extras) {
  if (qd.degree() < 1)
    throw Degenerate("separatrix skeleton requires degree >= 1");
  SeparatrixGraph g{qd};
  g.zs = zeros(qd);
  g.sector_angles = vertical_directions(qd);
  std::vector<LocalModel> lms = local_models(qd, g.zs);
  EscapeSpec es = escape_spec(qd, g.zs);
  g.escape_radius_flat = es.flat;
  g.escape_radius_z = es.zrad;
  double budget =
      opts.max_flat_length > 0 ? opts.max_flat_length : default_budget(es);

  struct Cand {
    int ray, from, to;
    double xi, eta, flat;
    cplx mid;
  };
  std::vector<Cand> cands;
  for (std::size_t zi = 0; zi < g.zs.size(); ++zi) {
    double nearest = kInf;
    for (std::size_t zj = 0; zj < g.zs.size(); ++zj)
      if (zj != zi)
        nearest = std::min(
            nearest, flat_chord(qd, g.zs[zi].position, g.zs[zj].position));
    for (int j = 0; j < lms[zi].p; ++j) {
      Launch L = launch_separatrix(qd, lms[zi],
                                   prong_angle(lms[zi], j, LeafDir::Vertical),
                                   LeafDir::Vertical, nearest);
      TraceOptions to = opts;
      to.branch_seed = L.w;
      to.max_flat_length = budget;
      SeparatrixRay ray;
      ray.zero = static_cast<int>(zi);
      ray.angle = L.angle;
      ray.launch_xi = L.xi0;
      ray.launch_eta = L.eta0;
      ray.trace = trace_leaf(qd, L.z, LeafDir::Vertical, to);
      if (ray.trace.termination == Termination::Truncated)
        throw TruncatedSeparatrix(
            "a vertical separatrix exhausted its length budget before "
            "escaping or reaching a zero");
      if (ray.trace.termination == Termination::HitZero) {
        const Trajectory& tr = ray.trace;
        int hz = tr.hit_zero;
        double rem = lms[hz].flat_of_r(std::abs(tr.pts.back() - lms[hz].z0));
        // curve midpoint by euclidean half-length, for pairing the two
        // traces of one connection
        double total = 0;
        for (std::size_t i = 0; i + 1 < tr.pts.size(); ++i)
          total += std::abs(tr.pts[i + 1] - tr.pts[i]);
        double want = 0.5 * total, acc = 0;
        cplx mid = tr.pts.front();
        for (std::size_t i = 0; i + 1 < tr.pts.size(); ++i) {
          double seg = std::abs(tr.pts[i + 1] - tr.pts[i]);
          if (acc + seg >= want) {
            mid = tr.pts[i] + (want - acc) / seg * (tr.pts[i + 1] - tr.pts[i]);
            break;
          }
          acc += seg;
        }
        cands.push_back({static_cast<int>(g.rays.size()),
                         static_cast<int>(zi), hz,
                         L.xi0 + tr.xi_acc.back(),
                         L.eta0 + tr.eta_acc.back() + rem,
                         L.flat0 + tr.arc_length_flat + rem, mid});
      }
      g.rays.push_back(std::move(ray));
    }
  }

  // each connection is traced once from either endpoint; pair them up
  std::vector<bool> used(cands.size(), false);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (used[i]) continue;
    for (std::size_t j = i + 1; j < cands.size(); ++j) {
      if (used[j]) continue;
      bool same_pair = (cands[i].from == cands[j].to &&
                        cands[i].to == cands[j].from) ||
                       (cands[i].from == cands[j].from &&
                        cands[i].to == cands[j].to);
      if (same_pair &&
          std::abs(cands[i].eta - cands[j].eta) <
              1e-6 * (1 + cands[i].eta) &&
          std::abs(cands[i].mid - cands[j].mid) <
              1e-2 * (1 + std::abs(cands[i].mid))) {
        used[j] = true;
        break;
      }
    }
    g.vertical_connections.push_back({cands[i].ray, cands[i].from,
                                      cands[i].to, cands[i].xi, cands[i].eta,
                                      cands[i].flat});
  }

  if (extras) {
    sink_constants(qd, g.zs, es.diam, &g.sink_C, &g.sink_radius);
    // maximal horizontal-strip width = longest finite edge of the dual tree
    // of the orthogonal foliation (phi -> -phi swaps the two)
    SeparatrixGraph gneg = skeleton_impl(qd.scaled(cplx(-1, 0)), opts, false);
    MetricTree tneg = build_tree(gneg, opts);
    double W = 0;
    for (const TreeEdge& e : tneg.edges) W = std::max(W, e.length);
    g.strip_width_W = W;
  }
  return g;
}

}  // namespace

SeparatrixGraph separatrix_skeleton(const PolyQD& qd,
                                    const TraceOptions& opts) {
  return skeleton_impl(qd, opts, true);
}

// ---------------------------------------------------------------------------
// Dual tree construction

namespace {

TreePoint random_tree_point(const MetricTree& T, Rng& rng) {
  int nv = static_cast<int>(T.vertices.size());
  int ne = static_cast<int>(T.edges.size());
  int nd = static_cast<int>(T.ends.size());
  int pick = static_cast<int>(rng.uniform01() * (nv + ne + nd));
  pick = std::min(pick, nv + ne + nd - 1);
  TreePoint p;
  if (pick < nv) {
    p.vertex = pick;
  } else if (pick < nv + ne) {
    p.edge = pick - nv;
    p.edge_offset = rng.uniform01() * T.edges[p.edge].length;
  } else {
    p.end = pick - nv - ne;
    p.end_offset = 3 * rng.uniform01();
  }
  return p;
}

void validate_four_point(const MetricTree& T) {
  Rng rng(987654321u);
  for (int trial = 0; trial < 200; ++trial) {
    TreePoint q[4];
    for (auto& p : q) p = random_tree_point(T, rng);
    double s01 = tree_distance(T, q[0], q[1]) + tree_distance(T, q[2], q[3]);
    double s02 = tree_distance(T, q[0], q[2]) + tree_distance(T, q[1], q[3]);
    double s03 = tree_distance(T, q[0], q[3]) + tree_distance(T, q[1], q[2]);
    double a[3] = {s01, s02, s03};
    std::sort(a, a + 3);
    if (std::abs(a[2] - a[1]) > 1e-9 * (1 + a[2]))
      throw Degenerate(
          "four-point condition failed on the assembled tree; retry with a "
          "phase-rotated differential exp(i a) phi");
  }
}

}  // namespace

int MetricTree::zero_class(int zero_index) const {
  for (std::size_t v = 0; v < vertices.size(); ++v)
    for (int zi : vertices[v].zero_indices)
      if (zi == zero_index) return static_cast<int>(v);
  throw Error("zero_class: no vertex carries the requested zero");
}

MetricTree build_tree(const SeparatrixGraph& g, const TraceOptions& opts) {
  const PolyQD& qd = g.qd;
  MetricTree T{qd};
  T.zs = g.zs;
  T.escape_radius_z = g.escape_radius_z;
  T.escape_radius_flat = g.escape_radius_flat;
  EscapeSpec es;
  es.flat = g.escape_radius_flat;
  es.zrad = g.escape_radius_z;
  es.diam = 0;
  for (std::size_t i = 0; i < g.zs.size(); ++i)
    for (std::size_t j = i + 1; j < g.zs.size(); ++j)
      es.diam = std::max(es.diam,
                         flat_chord(qd, g.zs[i].position, g.zs[j].position));
  double budget =
      opts.max_flat_length > 0 ? opts.max_flat_length : default_budget(es);
  T.wall_budget = budget;
  std::vector<LocalModel> lms = local_models(qd, g.zs);

  // zero classes: zeros joined by vertical saddle connections
  int nz = static_cast<int>(g.zs.size());
  UnionFind uf(nz);
  for (const SaddleConnection& c : g.vertical_connections)
    uf.unite(c.from_zero, c.to_zero);
  std::vector<int> cls(nz, -1);
  std::vector<std::vector<int>> classes;
  for (int i = 0; i < nz; ++i) {
    int r = uf.find(i);
    if (cls[r] < 0) {
      cls[r] = static_cast<int>(classes.size());
      classes.push_back({});
    }
    cls[i] = cls[r];
    classes[cls[i]].push_back(i);
  }
  int nc = static_cast<int>(classes.size());

  // walls: every vertical separatrix, prepended with its zero
  std::vector<std::vector<cplx>> walls;
  std::vector<int> wall_cls;
  for (const SeparatrixRay& r : g.rays) {
    std::vector<cplx> w;
    w.reserve(r.trace.pts.size() + 1);
    w.push_back(g.zs[r.zero].position);
    w.insert(w.end(), r.trace.pts.begin(), r.trace.pts.end());
    walls.push_back(std::move(w));
    wall_cls.push_back(cls[r.zero]);
  }
  WallIndex widx;
  widx.build(walls);

  // horizontal scans from every prong of every zero discover all edges and
  // ends: consecutive crossing events bound one strip each
  std::map<std::pair<int, int>, double> edge_reg;
  std::map<int, int> end_reg;  // sector -> class
  auto add_edge = [&](int u, int v, double len) {
    if (u == v)
      throw Degenerate(
          "a scan produced a self edge; retry with a phase-rotated "
          "differential exp(i a) phi");
    auto key = std::minmax(u, v);
    auto it = edge_reg.find(key);
    if (it == edge_reg.end()) {
      edge_reg[key] = len;
    } else {
      if (std::abs(it->second - len) > 1e-6 * (1 + len))
        throw Degenerate(
            "edge lengths from independent scans disagree; retry with a "
            "phase-rotated differential exp(i a) phi");
      it->second = std::min(it->second, len);
    }
  };

  for (int zi = 0; zi < nz; ++zi) {
    double nearest = kInf;
    for (int zj = 0; zj < nz; ++zj)
      if (zj != zi)
        nearest = std::min(
            nearest, flat_chord(qd, g.zs[zi].position, g.zs[zj].position));
    for (int j = 0; j < lms[zi].p; ++j) {
      Launch L = launch_separatrix(qd, lms[zi],
                                   prong_angle(lms[zi], j, LeafDir::Horizontal),
                                   LeafDir::Horizontal, nearest);
      TraceOptions to = opts;
      to.branch_seed = L.w;
      to.max_flat_length = budget;
      Trajectory tr = trace_leaf(qd, L.z, LeafDir::Horizontal, to);
      if (tr.termination == Termination::Truncated)
        throw TruncatedSeparatrix(
            "a horizontal scan exhausted its length budget before escaping "
            "or reaching a zero");
      std::vector<double> xa(tr.xi_acc.size());
      for (std::size_t i = 0; i < xa.size(); ++i) xa[i] = L.xi0 + tr.xi_acc[i];
      std::vector<CrossEvent> ev =
          raw_crossings(qd, widx, wall_cls, tr.pts, xa);
      ev.push_back({0.0, cls[zi], -1});  // the scan starts on its own class
      if (tr.termination == Termination::HitZero) {
        int hz = tr.hit_zero;
        if (cls[hz] == cls[zi])
          throw Degenerate(
              "a horizontal saddle connection closes a loop within one "
              "vertex class; retry with a phase-rotated differential "
              "exp(i a) phi");
        double rem = lms[hz].flat_of_r(std::abs(tr.pts.back() - lms[hz].z0));
        ev.push_back({xa.back() + rem, cls[hz], -1});
      }
      std::vector<CrossEvent> events = merge_events(std::move(ev));
      for (std::size_t i = 0; i + 1 < events.size(); ++i)
        add_edge(events[i].cls, events[i + 1].cls,
                 events[i + 1].xi - events[i].xi);
      if (tr.termination == Termination::Escaped) {
        auto it = end_reg.find(tr.escape_sector);
        if (it == end_reg.end()) {
          end_reg[tr.escape_sector] = events.back().cls;
        } else if (it->second != events.back().cls) {
          throw Degenerate(
              "two scans attach one sector at infinity to different "
              "vertices; retry with a phase-rotated differential "
              "exp(i a) phi");
        }
      }
    }
  }

  // contract edges below resolution: their endpoints are one vertex
  UnionFind vf(nc);
  for (const auto& [key, len] : edge_reg)
    if (len < 1e-7) vf.unite(key.first, key.second);
  std::vector<int> vmap(nc, -1);
  int nv = 0;
  for (int c = 0; c < nc; ++c) {
    int r = vf.find(c);
    if (vmap[r] < 0) vmap[r] = nv++;
    vmap[c] = vmap[r];
  }
  T.vertices.assign(nv, TreeVertex{{}, 0, 0});
  for (int c = 0; c < nc; ++c)
    for (int zi : classes[c])
      T.vertices[vmap[c]].zero_indices.push_back(zi);
  for (TreeVertex& v : T.vertices) {
    std::sort(v.zero_indices.begin(), v.zero_indices.end());
    v.anchor = g.zs[v.zero_indices.front()].position;
  }

  std::map<std::pair<int, int>, double> final_edges;
  for (const auto& [key, len] : edge_reg) {
    int u = vmap[key.first], v = vmap[key.second];
    if (u == v) {
      if (len >= 1e-7)
        throw Degenerate(
            "edge contraction produced a macroscopic self edge; retry with "
            "a phase-rotated differential exp(i a) phi");
      continue;
    }
    auto k2 = std::minmax(u, v);
    auto it = final_edges.find(k2);
    if (it == final_edges.end()) {
      final_edges[k2] = len;
    } else {
      if (std::abs(it->second - len) > 1e-6 * (1 + len))
        throw Degenerate(
            "merged vertices carry inconsistent edge lengths; retry with a "
            "phase-rotated differential exp(i a) phi");
      it->second = std::min(it->second, len);
    }
  }
  for (const auto& [key, len] : final_edges)
    T.edges.push_back({key.first, key.second, len});
  for (const auto& [sector, c] : end_reg) T.ends.push_back({vmap[c], sector});

  // structural validation: k ends covering every sector, tree edge count,
  // connectivity, and valence = total zero multiplicity + 2 per vertex
  int k = qd.sides();
  if (static_cast<int>(T.ends.size()) != k)
    throw Degenerate("the scans did not reach every sector at infinity; "
                     "retry with a phase-rotated differential exp(i a) phi");
  for (int s = 0; s < k; ++s)
    if (T.ends[s].sector != s)
      throw Degenerate("sector labels of the ends are not contiguous; retry "
                       "with a phase-rotated differential exp(i a) phi");
  if (static_cast<int>(T.edges.size()) != nv - 1)
    throw Degenerate("edge count does not match a tree; retry with a "
                     "phase-rotated differential exp(i a) phi");
  {
    std::vector<std::vector<int>> adj(nv);
    for (const TreeEdge& e : T.edges) {
      adj[e.v].push_back(e.w);
      adj[e.w].push_back(e.v);
    }
    std::vector<char> seen(nv, 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int u : adj[v])
        if (!seen[u]) {
          seen[u] = 1;
          stack.push_back(u);
        }
    }
    for (int v = 0; v < nv; ++v)
      if (!seen[v])
        throw Degenerate("assembled tree is not connected; retry with a "
                         "phase-rotated differential exp(i a) phi");
  }
  std::vector<int> valence(nv, 0);
  for (const TreeEdge& e : T.edges) {
    ++valence[e.v];
    ++valence[e.w];
  }
  for (const TreeEnd& e : T.ends) ++valence[e.vertex];
  for (int v = 0; v < nv; ++v) {
    T.vertices[v].valence = valence[v];
    int mult = 0;
    for (int zi : T.vertices[v].zero_indices) mult += g.zs[zi].multiplicity;
    if (valence[v] != mult + 2)
      throw Degenerate("vertex valence disagrees with its zero "
                       "multiplicities; retry with a phase-rotated "
                       "differential exp(i a) phi");
  }

  // all-pairs vertex distances (Floyd-Warshall; the tree is tiny)
  T.vertex_dist.assign(nv, std::vector<double>(nv, kInf));
  for (int v = 0; v < nv; ++v) T.vertex_dist[v][v] = 0;
  for (const TreeEdge& e : T.edges) {
    T.vertex_dist[e.v][e.w] = std::min(T.vertex_dist[e.v][e.w], e.length);
    T.vertex_dist[e.w][e.v] = T.vertex_dist[e.v][e.w];
  }
  for (int m = 0; m < nv; ++m)
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b)
        T.vertex_dist[a][b] = std::min(T.vertex_dist[a][b],
                                       T.vertex_dist[a][m] +
                                           T.vertex_dist[m][b]);

  T.walls = std::move(walls);
  T.wall_class.resize(wall_cls.size());
  for (std::size_t i = 0; i < wall_cls.size(); ++i)
    T.wall_class[i] = vmap[wall_cls[i]];

  validate_four_point(T);
  return T;
}

MetricTree build_tree(const PolyQD& qd, const TraceOptions& opts) {
  if (qd.degree() == 0) {
    MetricTree T{qd};
    T.line_tree = true;
    T.line_sqrt = std::sqrt(qd.coeffs()[0]);
    T.vertices = {TreeVertex{{}, cplx(0, 0), 2}};
    std::vector<double> dirs = vertical_directions(qd);
    int spos = sector_of(dirs, -std::arg(T.line_sqrt));
    int sneg = sector_of(dirs, std::atan2(std::sin(kPi - std::arg(T.line_sqrt)),
                                          std::cos(kPi - std::arg(T.line_sqrt))));
    T.ends = {{0, std::min(spos, sneg)}, {0, std::max(spos, sneg)}};
    EscapeSpec es = escape_spec(qd, {});
    T.escape_radius_flat = es.flat;
    T.escape_radius_z = es.zrad;
    return T;
  }
  return build_tree(separatrix_skeleton(qd, opts), opts);
}

// ---------------------------------------------------------------------------
// Collapsing map and tree metric

TreePoint project(const MetricTree& T, cplx z, const TraceOptions& opts) {
  TreePoint out;
  if (T.line_tree) {
    double xi = (T.line_sqrt * z).real();
    std::vector<double> dirs = vertical_directions(T.qd);
    int spos = sector_of(dirs, -std::arg(T.line_sqrt));
    int idx_pos = T.ends[0].sector == spos ? 0 : 1;
    out.end = xi >= 0 ? idx_pos : 1 - idx_pos;
    out.end_offset = std::abs(xi);
    return out;
  }
  const PolyQD& qd = T.qd;
  std::vector<LocalModel> lms = local_models(qd, T.zs);
  int nearest = -1;
  double clr = clearance_flat(lms, z, &nearest);
  if (clr < opts.capture_flat) {
    out.vertex = T.zero_class(nearest);
    return out;
  }
  double diam = 0;
  for (std::size_t i = 0; i < T.zs.size(); ++i)
    for (std::size_t j = i + 1; j < T.zs.size(); ++j)
      diam = std::max(diam,
                      flat_chord(qd, T.zs[i].position, T.zs[j].position));
  if (flat_chord(qd, z, T.zs[nearest].position) >
      0.5 * (T.wall_budget - diam) - 2)
    throw OutOfRegion("point lies beyond the traced wall region of the tree");

  WallIndex widx;
  widx.build(T.walls);
  cplx w0 = std::sqrt(qd.eval(z));

  struct Side {
    std::vector<CrossEvent> ev;
    bool escaped = false;
    int sector = -1;
  };
  auto scan = [&](cplx seed) -> Side {
    TraceOptions to = opts;
    to.branch_seed = seed;
    to.max_flat_length = T.wall_budget;
    Trajectory tr = trace_leaf(qd, z, LeafDir::Horizontal, to);
    if (tr.termination == Termination::Truncated)
      throw Unresolved(
          "a classification trace ended at its length budget; the point "
          "cannot be projected reliably");
    std::vector<CrossEvent> ev =
        raw_crossings(qd, widx, T.wall_class, tr.pts, tr.xi_acc);
    if (tr.termination == Termination::HitZero) {
      int hz = tr.hit_zero;
      double rem = lms[hz].flat_of_r(std::abs(tr.pts.back() - lms[hz].z0));
      ev.push_back({tr.xi_acc.back() + rem, T.zero_class(hz), -1});
    }
    Side s;
    s.ev = merge_events(std::move(ev));
    s.escaped = tr.termination == Termination::Escaped;
    s.sector = tr.escape_sector;
    return s;
  };
  Side L = scan(w0), R = scan(-w0);

  bool hasL = !L.ev.empty(), hasR = !R.ev.empty();
  if (hasL && hasR) {
    const CrossEvent& fa = L.ev.front();
    const CrossEvent& fb = R.ev.front();
    if (fa.cls == fb.cls) {
      if (std::min(fa.xi, fb.xi) < 1e-6) {
        out.vertex = fa.cls;
        return out;
      }
      throw Degenerate(
          "both horizontal directions first meet the same vertex class at "
          "separated offsets; retry with a phase-rotated differential "
          "exp(i a) phi");
    }
    if (fa.xi < 1e-9) {
      out.vertex = fa.cls;
      return out;
    }
    if (fb.xi < 1e-9) {
      out.vertex = fb.cls;
      return out;
    }
    for (std::size_t e = 0; e < T.edges.size(); ++e) {
      const TreeEdge& ed = T.edges[e];
      if ((ed.v == fa.cls && ed.w == fb.cls) ||
          (ed.v == fb.cls && ed.w == fa.cls)) {
        double sum = fa.xi + fb.xi;
        if (std::abs(sum - ed.length) > 1e-5 * (1 + ed.length))
          throw Degenerate(
              "projection offsets disagree with the carrying edge length; "
              "retry with a phase-rotated differential exp(i a) phi");
        double off = ed.v == fa.cls ? fa.xi : fb.xi;
        out.edge = static_cast<int>(e);
        out.edge_offset = std::clamp(off * ed.length / sum, 0.0, ed.length);
        return out;
      }
    }
    throw Degenerate(
        "first crossings on the two sides are not joined by an edge; retry "
        "with a phase-rotated differential exp(i a) phi");
  }
  if (hasL || hasR) {
    const Side& with = hasL ? L : R;
    const Side& free_side = hasL ? R : L;
    if (!free_side.escaped)
      throw Degenerate("a crossing-free scan did not escape; retry with a "
                       "phase-rotated differential exp(i a) phi");
    const CrossEvent& fa = with.ev.front();
    for (std::size_t i = 0; i < T.ends.size(); ++i) {
      if (T.ends[i].sector == free_side.sector) {
        if (T.ends[i].vertex != fa.cls)
          throw Degenerate(
              "end attachment does not match the first crossing; retry "
              "with a phase-rotated differential exp(i a) phi");
        out.end = static_cast<int>(i);
        out.end_offset = fa.xi;
        return out;
      }
    }
    throw Degenerate("escape sector carries no end; retry with a "
                     "phase-rotated differential exp(i a) phi");
  }
  throw OutOfRegion(
      "the horizontal leaf through the point crossed no traced wall");
}

double tree_distance(const MetricTree& T, const TreePoint& a,
                     const TreePoint& b) {
  auto valid = [](const TreePoint& p) {
    return p.on_vertex() || p.on_edge() || p.on_end();
  };
  if (!valid(a) || !valid(b)) throw Error("tree_distance: empty tree point");
  if (T.line_tree) {
    if (a.on_vertex() && b.on_vertex()) return 0;
    if (a.on_vertex()) return b.end_offset;
    if (b.on_vertex()) return a.end_offset;
    if (a.end == b.end) return std::abs(a.end_offset - b.end_offset);
    return a.end_offset + b.end_offset;
  }
  if (a.on_edge() && b.on_edge() && a.edge == b.edge)
    return std::abs(a.edge_offset - b.edge_offset);
  if (a.on_end() && b.on_end() && a.end == b.end)
    return std::abs(a.end_offset - b.end_offset);
  auto anchors =
      [&](const TreePoint& p) -> std::vector<std::pair<int, double>> {
    if (p.on_vertex()) return {{p.vertex, 0.0}};
    if (p.on_edge()) {
      const TreeEdge& e = T.edges[p.edge];
      return {{e.v, p.edge_offset}, {e.w, e.length - p.edge_offset}};
    }
    return {{T.ends[p.end].vertex, p.end_offset}};
  };
  double best = kInf;
  for (const auto& [u, du] : anchors(a))
    for (const auto& [v, dv] : anchors(b))
      best = std::min(best, du + T.vertex_dist[u][v] + dv);
  return best;
}

double intersection_number(const MetricTree& tree, cplx x1, cplx x2,
                           const TraceOptions& opts) {
  return tree_distance(tree, project(tree, x1, opts), project(tree, x2, opts));
}

// ---------------------------------------------------------------------------
// Independent grid oracle

namespace {

// Simpson over the hop with the branch aligned to the midpoint value; |Re|
// and |Im| of the increment are sign-independent, so any sheet works.
double hop_cost(const PolyQD& qd, cplx a, cplx b, bool real_part) {
  cplx wm = std::sqrt(qd.eval(0.5 * (a + b)));
  cplx wa = aligned_sqrt(qd.eval(a), wm);
  cplx wb = aligned_sqrt(qd.eval(b), wm);
  cplx d = (wa + 4.0 * wm + wb) / 6.0 * (b - a);
  return real_part ? std::abs(d.real()) : std::abs(d.imag());
}

// Smoothed variant: charges the complementary component at weight kappa, so
// the cost stays sensitive to sideways motion.  At kappa = 1 it is the flat
// length (kink-free landscape); as kappa -> 0 it tends to hop_cost.
double hop_cost_gnc(const PolyQD& qd, cplx a, cplx b, bool real_part,
                    double kappa) {
  cplx wm = std::sqrt(qd.eval(0.5 * (a + b)));
  cplx wa = aligned_sqrt(qd.eval(a), wm);
  cplx wb = aligned_sqrt(qd.eval(b), wm);
  cplx d = (wa + 4.0 * wm + wb) / 6.0 * (b - a);
  double main = real_part ? d.real() : d.imag();
  double other = real_part ? d.imag() : d.real();
  return std::hypot(main, kappa * other);
}

double grid_oracle_impl(const PolyQD& qd, cplx x1, cplx x2,
                        const GridOracleOptions& opts, bool real_part) {
  detail::PathGrid g(opts.radius, opts.h);
  if (!g.holds(x1) || !g.holds(x2))
    throw OutOfGrid("oracle endpoints must lie inside the grid square");
  auto cost = [&](cplx a, cplx b) { return hop_cost(qd, a, b, real_part); };
  // The 16 hop directions overcharge measure-cheap channels that curve
  // between them; local straightening with the same continuous cost removes
  // that bias while keeping the estimate a concrete-path value.  The pure
  // cost is flat along leaves, so straightening it directly can wedge on
  // wide detours; annealing the leaf-direction weight from 1 (flat length,
  // kink-free) toward 0 tracks the channel before the final pure pass.
  auto [raw, pts] = detail::grid_shortest_polyline(g, cost, x1, x2);
  for (double kappa : {1.0, 0.4, 0.15, 0.05, 0.02}) {
    auto gnc = [&](cplx a, cplx b) {
      return hop_cost_gnc(qd, a, b, real_part, kappa);
    };
    detail::straighten_polyline(gnc, pts, g.h, 6);
  }
  detail::straighten_polyline(cost, pts, g.h, 12);
  return std::min(raw, detail::polyline_cost(cost, pts));
}

}  // namespace

double grid_transverse_oracle(const PolyQD& qd, cplx x1, cplx x2,
                              const GridOracleOptions& opts) {
  return grid_oracle_impl(qd, x1, x2, opts, true);
}

double grid_eta_oracle(const PolyQD& qd, cplx x1, cplx x2,
                       const GridOracleOptions& opts) {
  return grid_oracle_impl(qd, x1, x2, opts, false);
}

double grid_measure_diameter(const PolyQD& qd, double R, double h,
                             bool eta_measure) {
  detail::PathGrid g(1.5 * R, h);
  auto cost = [&](cplx a, cplx b) { return hop_cost(qd, a, b, !eta_measure); };
  std::vector<int> sources;
  if (qd.degree() >= 1)
    for (const Zero& z : zeros(qd))
      if (std::abs(z.position) <= R) sources.push_back(g.snap(z.position));
  for (int j = 0; j < 24; ++j)
    sources.push_back(g.snap(std::polar(R, j * kTwoPi / 24)));
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
  double best = 0;
  for (int s : sources) {
    std::vector<double> dist = detail::grid_dijkstra(g, cost, s, -1, nullptr);
    for (int j = 0; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i)
        if (std::abs(g.node(i, j)) <= R)
          best = std::max(best, dist[g.idx(i, j)]);
  }
  return best;
}

}  // namespace qdlab
