#include "qdlab/qd_core.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>

namespace qdlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

// 7-point Gauss / 15-point Kronrod pair on [-1, 1] (QUADPACK values).
constexpr std::array<double, 8> kXgk = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985, 0.0};
constexpr std::array<double, 8> kWgk = {
    0.0229353220105292, 0.0630920926299786, 0.1047900103222502,
    0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
    0.2044329400752989, 0.2094821410847278};
constexpr std::array<double, 4> kWg = {
    0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
    0.4179591836734694};

}  // namespace

// ---------------------------------------------------------------------------
// PolyQD

PolyQD::PolyQD(std::vector<cplx> coeffs) : coeffs_(std::move(coeffs)) {
  if (coeffs_.empty() || coeffs_.back() == cplx(0, 0))
    throw ZeroDifferential("PolyQD requires a nonzero leading coefficient");
}

cplx PolyQD::eval(cplx z) const {
  cplx acc = coeffs_.back();
  for (int j = static_cast<int>(coeffs_.size()) - 2; j >= 0; --j)
    acc = acc * z + coeffs_[j];
  return acc;
}

cplx PolyQD::eval_deriv(cplx z) const {
  int n = degree();
  if (n == 0) return {0, 0};
  cplx acc = static_cast<double>(n) * coeffs_.back();
  for (int j = n - 1; j >= 1; --j)
    acc = acc * z + static_cast<double>(j) * coeffs_[j];
  return acc;
}

cplx PolyQD::eval_deriv_scaled(cplx z, int n) const {
  // p^(n)(z)/n! = sum_{j>=n} C(j, n) c_j z^{j-n}
  if (n > degree()) return {0, 0};
  cplx acc{0, 0};
  double binom = 1.0;  // C(j, n) built incrementally from j = n
  cplx zpow{1, 0};
  for (int j = n; j <= degree(); ++j) {
    acc += binom * coeffs_[j] * zpow;
    zpow *= z;
    binom *= static_cast<double>(j + 1) / static_cast<double>(j + 1 - n);
  }
  return acc;
}

PolyQD PolyQD::scaled(cplx factor) const {
  std::vector<cplx> c = coeffs_;
  for (auto& v : c) v *= factor;
  return PolyQD(std::move(c));
}

PolyQD make_qd(const std::vector<cplx>& coeffs) {
  std::vector<cplx> c = coeffs;
  while (!c.empty() && c.back() == cplx(0, 0)) c.pop_back();
  if (c.empty())
    throw ZeroDifferential("all coefficients vanish");
  return PolyQD(std::move(c));
}

// ---------------------------------------------------------------------------
// Roots

std::vector<cplx> roots_companion(const PolyQD& qd) {
  int n = qd.degree();
  if (n == 0) return {};
  Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(n, n);
  cplx lead = qd.leading();
  for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) comp(i, n - 1) = -qd.coeffs()[i] / lead;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp, false);
  if (es.info() != Eigen::Success)
    throw RootFailure("companion eigenvalue iteration failed");
  std::vector<cplx> out(n);
  for (int i = 0; i < n; ++i) out[i] = es.eigenvalues()(i);
  return out;
}

namespace {

// One Aberth-Ehrlich sweep; returns max relative displacement.
double aberth_sweep(const PolyQD& qd, std::vector<cplx>& z) {
  double worst = 0;
  int n = static_cast<int>(z.size());
  for (int i = 0; i < n; ++i) {
    cplx p = qd.eval(z[i]);
    cplx dp = qd.eval_deriv(z[i]);
    if (p == cplx(0, 0)) continue;
    cplx newton = (dp == cplx(0, 0)) ? cplx(0, 0) : p / dp;
    cplx sum{0, 0};
    for (int j = 0; j < n; ++j)
      if (j != i) sum += 1.0 / (z[i] - z[j]);
    cplx denom = 1.0 - newton * sum;
    cplx step = (std::abs(denom) < 1e-300) ? newton : newton / denom;
    z[i] -= step;
    worst = std::max(worst, std::abs(step) / (1.0 + std::abs(z[i])));
  }
  return worst;
}

std::vector<cplx> raw_roots(const PolyQD& qd) {
  int n = qd.degree();
  if (n == 0) return {};
  // Cauchy-style inclusion radius.
  double lead = std::abs(qd.leading());
  double radius = 0;
  for (int j = 0; j < n; ++j)
    radius = std::max(radius, std::pow(std::abs(qd.coeffs()[j]) / lead,
                                       1.0 / (n - j)));
  radius = 2.0 * radius + 1.0;

  std::vector<cplx> z(n);
  for (int i = 0; i < n; ++i) {
    double ang = 2.0 * kPi * (i + 0.25) / n + 0.4;  // asymmetric start
    z[i] = radius * cplx(std::cos(ang), std::sin(ang));
  }
  bool converged = false;
  for (int it = 0; it < 400; ++it) {
    if (aberth_sweep(qd, z) < 1e-14) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    z = roots_companion(qd);
    // polish eigenvalues with plain Newton
    for (auto& r : z) {
      for (int it = 0; it < 50; ++it) {
        cplx p = qd.eval(r), dp = qd.eval_deriv(r);
        if (std::abs(dp) < 1e-300) break;
        cplx step = p / dp;
        r -= step;
        if (std::abs(step) < 1e-15 * (1.0 + std::abs(r))) break;
      }
    }
  }
  return z;
}

}  // namespace

std::vector<Zero> zeros(const PolyQD& qd) {
  std::vector<cplx> r = raw_roots(qd);
  int n = static_cast<int>(r.size());
  if (n == 0) return {};

  // Transitive clustering at radius 1e-7 (1 + |z|).
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double tol = 1e-7 * (1.0 + 0.5 * (std::abs(r[i]) + std::abs(r[j])));
      if (std::abs(r[i] - r[j]) < tol) parent[find(i)] = find(j);
    }

  std::vector<Zero> out;
  std::vector<char> done(n, 0);
  for (int i = 0; i < n; ++i) {
    int root = find(i);
    if (done[root]) continue;
    done[root] = 1;
    cplx centroid{0, 0};
    int count = 0;
    for (int j = 0; j < n; ++j)
      if (find(j) == root) {
        centroid += r[j];
        ++count;
      }
    centroid /= static_cast<double>(count);
    Zero zr;
    zr.position = centroid;
    zr.multiplicity = count;
    zr.prongs = count + 2;
    out.push_back(zr);
  }
  std::sort(out.begin(), out.end(), [](const Zero& a, const Zero& b) {
    if (a.position.real() != b.position.real())
      return a.position.real() < b.position.real();
    return a.position.imag() < b.position.imag();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Branch-tracked integration

namespace {

struct BranchTracker {
  cplx w{0, 0};   // current continued sqrt value
  int sign = 1;   // chosen branch relative to principal
  int flips = 0;

  // Continue to the sqrt of phi_val nearest the current value.
  cplx advance(cplx phi_val) {
    cplx principal = std::sqrt(phi_val);
    cplx cand = principal;
    if (w != cplx(0, 0)) {
      double dot = cand.real() * w.real() + cand.imag() * w.imag();
      if (dot < 0) cand = -cand;
    }
    int s = (cand == principal || principal == cplx(0, 0)) ? 1 : -1;
    if (w != cplx(0, 0) && s != sign) ++flips;
    sign = s;
    w = cand;
    return cand;
  }
};

struct IntervalEval {
  cplx integral{0, 0};
  BranchTracker exit_state;
  bool branch_ok = true;
};

// GL7 over the sub-parameter range [a, b] of the segment z0 + s (z1 - z0).
IntervalEval gl7_eval(const PolyQD& qd, cplx z0, cplx dz, double a, double b,
                      const BranchTracker& entry) {
  static const std::array<double, 7> nodes = {
      -0.9491079123427585, -0.7415311855993944, -0.4058451513773972, 0.0,
      0.4058451513773972,  0.7415311855993944,  0.9491079123427585};
  static const std::array<double, 7> weights = {
      0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
      0.4179591836734694, 0.3818300505051189, 0.2797053914892766,
      0.1294849661688697};
  IntervalEval ev;
  ev.exit_state = entry;
  double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  cplx acc{0, 0};
  cplx prev_w = entry.w;
  for (int i = 0; i < 7; ++i) {
    double s = mid + half * nodes[i];
    cplx w = ev.exit_state.advance(qd.eval(z0 + s * dz));
    if (prev_w != cplx(0, 0)) {
      // guard: sqrt must rotate by < pi/2 between consecutive samples
      double dot = w.real() * prev_w.real() + w.imag() * prev_w.imag();
      double cross = std::abs(w.real() * prev_w.imag() - w.imag() * prev_w.real());
      if (dot <= 0 || cross > dot * 2.4142135623730951 /* tan(67.5 deg) */)
        ev.branch_ok = false;
    }
    prev_w = w;
    acc += weights[i] * w;
  }
  ev.integral = acc * half * dz;
  // continue the state to the right endpoint for the next interval
  ev.exit_state.advance(qd.eval(z0 + b * dz));
  return ev;
}

void check_clearance(const PolyQD& qd, const std::vector<Zero>& zs, cplx a,
                     cplx b, double clearance) {
  cplx d = b - a;
  double len2 = std::norm(d);
  for (const auto& z : zs) {
    double s = 0;
    if (len2 > 0) {
      s = ((z.position - a).real() * d.real() +
           (z.position - a).imag() * d.imag()) /
          len2;
      s = std::clamp(s, 0.0, 1.0);
    }
    double r = std::abs(a + s * d - z.position);
    double aloc = std::abs(qd.eval_deriv_scaled(z.position, z.multiplicity));
    double p = 0.5 * z.multiplicity + 1.0;
    double flat = std::sqrt(aloc) * std::pow(r, p) / p;
    if (flat < clearance)
      throw PathThroughZero("integration path within |phi|-clearance " +
                            std::to_string(flat) + " of a zero");
  }
}

}  // namespace

BranchedIntegral integrate_sqrt(const PolyQD& qd, const PathPolyline& path,
                                const IntegrateOptions& opts) {
  if (path.pts.size() < 2) throw Error("path needs at least two points");
  std::vector<Zero> zs = zeros(qd);

  BranchedIntegral out;
  BranchTracker state;
  // Seed the branch.
  {
    cplx principal = std::sqrt(qd.eval(path.pts.front()));
    cplx w = principal;
    if (opts.branch_seed != cplx(0, 0)) {
      double dot = w.real() * opts.branch_seed.real() +
                   w.imag() * opts.branch_seed.imag();
      if (dot < 0) w = -w;
    }
    state.w = w;
    state.sign = (w == principal) ? 1 : -1;
    out.sqrt_begin = w;
  }

  // Rough total flat scale for tolerance distribution.
  double scale = 0;
  for (std::size_t i = 0; i + 1 < path.pts.size(); ++i) {
    cplx mid = 0.5 * (path.pts[i] + path.pts[i + 1]);
    scale += std::sqrt(std::abs(qd.eval(mid))) *
             std::abs(path.pts[i + 1] - path.pts[i]);
  }
  scale = std::max(scale, 1e-12);

  int budget = opts.max_intervals;
  for (std::size_t seg = 0; seg + 1 < path.pts.size(); ++seg) {
    cplx z0 = path.pts[seg], z1 = path.pts[seg + 1];
    if (z0 == z1) continue;
    check_clearance(qd, zs, z0, z1, opts.zero_clearance);
    cplx dz = z1 - z0;

    // Explicit stack of parameter intervals, processed left to right.
    std::vector<std::pair<double, double>> stack;
    stack.emplace_back(0.0, 1.0);
    while (!stack.empty()) {
      if (--budget < 0)
        throw NonConvergent("integrate_sqrt interval budget exhausted");
      auto [a, b] = stack.back();
      stack.pop_back();

      IntervalEval whole = gl7_eval(qd, z0, dz, a, b, state);
      double m = 0.5 * (a + b);
      IntervalEval left = gl7_eval(qd, z0, dz, a, m, state);
      IntervalEval right = gl7_eval(qd, z0, dz, m, b, left.exit_state);

      cplx two = left.integral + right.integral;
      double err = std::abs(whole.integral - two);
      double merr =
          std::abs(std::abs(whole.integral.real()) -
                   (std::abs(left.integral.real()) + std::abs(right.integral.real()))) +
          std::abs(std::abs(whole.integral.imag()) -
                   (std::abs(left.integral.imag()) + std::abs(right.integral.imag())));
      bool ok = whole.branch_ok && left.branch_ok && right.branch_ok;
      double tol_here = opts.tol * std::max(b - a, 1e-3);
      if (ok && err + merr <= tol_here) {
        out.delta_zeta += two;
        out.xi_measure += std::abs(left.integral.real()) +
                          std::abs(right.integral.real());
        out.eta_measure += std::abs(left.integral.imag()) +
                           std::abs(right.integral.imag());
        state = right.exit_state;
      } else if (b - a < 1e-9) {
        // Interval collapsed without stabilising: the branch guard cannot
        // hold; treat as a near-singular path.
        throw NonConvergent("integrate_sqrt failed to stabilise a substep");
      } else {
        stack.emplace_back(m, b);
        stack.emplace_back(a, m);
      }
    }
  }
  out.sign_flips = state.flips;
  out.sqrt_end = state.w;
  return out;
}

// ---------------------------------------------------------------------------
// Flat length

namespace {

struct GkResult {
  double value = 0;
  double error = 0;
};

GkResult gk15(const PolyQD& qd, cplx z0, cplx dz, double a, double b) {
  double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double speed = std::abs(dz);
  double fk = 0, fg = 0;
  for (int i = 0; i < 8; ++i) {
    double x = kXgk[i];
    double f1 = std::sqrt(std::abs(qd.eval(z0 + (mid + half * x) * dz)));
    double f2 = std::sqrt(std::abs(qd.eval(z0 + (mid - half * x) * dz)));
    double fsum = (i == 7) ? f1 : f1 + f2;
    fk += kWgk[i] * fsum;
    if (i % 2 == 1) fg += kWg[i / 2] * fsum;  // odd Kronrod indices = GL7 nodes
  }
  GkResult r;
  r.value = fk * half * speed;
  r.error = std::abs((fk - fg) * half * speed);
  return r;
}

}  // namespace

double flat_length(const PolyQD& qd, const PathPolyline& path, double rel_tol) {
  if (path.pts.size() < 2) throw Error("path needs at least two points");
  // First pass: non-adaptive estimate for tolerance distribution.
  double rough = 0;
  for (std::size_t seg = 0; seg + 1 < path.pts.size(); ++seg) {
    if (path.pts[seg] == path.pts[seg + 1]) continue;
    rough += gk15(qd, path.pts[seg], path.pts[seg + 1] - path.pts[seg], 0, 1).value;
  }
  double tol_abs = std::max(rel_tol * rough, 1e-300);

  double total = 0;
  int budget = 400000;
  for (std::size_t seg = 0; seg + 1 < path.pts.size(); ++seg) {
    cplx z0 = path.pts[seg], z1 = path.pts[seg + 1];
    if (z0 == z1) continue;
    cplx dz = z1 - z0;
    std::vector<std::pair<double, double>> stack{{0.0, 1.0}};
    while (!stack.empty()) {
      if (--budget < 0) throw NonConvergent("flat_length budget exhausted");
      auto [a, b] = stack.back();
      stack.pop_back();
      GkResult r = gk15(qd, z0, dz, a, b);
      if (r.error <= tol_abs * (b - a) || b - a < 1e-12) {
        total += r.value;
      } else {
        double m = 0.5 * (a + b);
        stack.emplace_back(m, b);
        stack.emplace_back(a, m);
      }
    }
  }
  return total;
}

double flat_chord(const PolyQD& qd, cplx a, cplx b, double rel_tol) {
  PathPolyline p;
  p.pts = {a, b};
  return flat_length(qd, p, rel_tol);
}

double flat_zero_clearance(const PolyQD& qd, const std::vector<Zero>& zs,
                           cplx z) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& zr : zs) {
    double r = std::abs(z - zr.position);
    double aloc = std::abs(qd.eval_deriv_scaled(zr.position, zr.multiplicity));
    double p = 0.5 * zr.multiplicity + 1.0;
    best = std::min(best, std::sqrt(aloc) * std::pow(r, p) / p);
  }
  return best;
}

}  // namespace qdlab
