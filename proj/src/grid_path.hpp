#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "qdlab/qd_core.hpp"

// Shared 16-neighbour grid shortest-path machinery with pluggable hop
// costs, plus local polyline straightening.  Used by the transverse-measure
// oracles, the g_t distance search and the flat-geodesic staircase step.

namespace qdlab::detail {

// Hop offsets: axis, diagonal and knight moves.  The knight moves keep the
// directional resolution fine enough that straightening converges from a
// good start.
inline constexpr int kHopDx[16] = {1, -1, 0, 0,  1,  1, -1, -1,
                                   2, 2,  -2, -2, 1,  1, -1, -1};
inline constexpr int kHopDy[16] = {0, 0,  1, -1, 1,  -1, 1,  -1,
                                   1, -1, 1,  -1, 2,  -2, 2,  -2};

struct PathGrid {
  double R = 1;   // half-side of the square
  double h = 1;   // spacing (adjusted so the grid spans exactly [-R, R])
  int n = 2;      // nodes per side

  PathGrid(double R_, double h_request) : R(R_) {
    n = std::max(2, static_cast<int>(std::lround(2 * R_ / h_request)) + 1);
    h = 2 * R_ / (n - 1);
  }

  int size() const { return n * n; }
  int idx(int i, int j) const { return j * n + i; }
  cplx node(int i, int j) const { return cplx(-R + i * h, -R + j * h); }
  bool holds(cplx z) const {
    return std::abs(z.real()) <= R && std::abs(z.imag()) <= R;
  }
  int snap(cplx z) const {
    int i = std::clamp(static_cast<int>(std::lround((z.real() + R) / h)), 0,
                       n - 1);
    int j = std::clamp(static_cast<int>(std::lround((z.imag() + R) / h)), 0,
                       n - 1);
    return idx(i, j);
  }
};

// Dijkstra from src; stops early once dst is settled (dst < 0 sweeps all).
// Returns the distance array; prev (when non-null) receives the tree.
template <class Cost>
std::vector<double> grid_dijkstra(const PathGrid& g, const Cost& cost, int src,
                                  int dst, std::vector<int>* prev) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.size(), inf);
  if (prev) prev->assign(g.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  dist[src] = 0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[v]) continue;
    if (v == dst) break;
    int i = v % g.n, j = v / g.n;
    cplx zv = g.node(i, j);
    for (int k = 0; k < 16; ++k) {
      int ii = i + kHopDx[k], jj = j + kHopDy[k];
      if (ii < 0 || jj < 0 || ii >= g.n || jj >= g.n) continue;
      int w = g.idx(ii, jj);
      double nd = d + cost(zv, g.node(ii, jj));
      if (nd < dist[w]) {
        dist[w] = nd;
        if (prev) (*prev)[w] = v;
        pq.push({nd, w});
      }
    }
  }
  return dist;
}

template <class Cost>
double polyline_cost(const Cost& cost, const std::vector<cplx>& pts) {
  double acc = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) acc += cost(pts[i], pts[i + 1]);
  return acc;
}

// Rebuilds the polyline with vertices roughly `spacing` apart (endpoints
// kept).  Uniform spacing gives the straightening sweeps enough bending
// resolution to follow curved cheap-direction channels.
inline void resample_polyline(std::vector<cplx>& pts, double spacing) {
  if (pts.size() < 2 || !(spacing > 0)) return;
  double total = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    total += std::abs(pts[i + 1] - pts[i]);
  if (total == 0) {
    pts = {pts.front(), pts.back()};
    return;
  }
  int m = std::clamp(static_cast<int>(std::lround(total / spacing)), 1,
                     200000);
  std::vector<cplx> out;
  out.reserve(m + 1);
  out.push_back(pts.front());
  double target = total / m, walked = 0;
  std::size_t seg = 0;
  double seg_len = std::abs(pts[1] - pts[0]), seg_done = 0;
  for (int k = 1; k < m; ++k) {
    double want = k * target;
    while (walked + (seg_len - seg_done) < want && seg + 2 < pts.size()) {
      walked += seg_len - seg_done;
      ++seg;
      seg_done = 0;
      seg_len = std::abs(pts[seg + 1] - pts[seg]);
    }
    double along = seg_done + (want - walked);
    out.push_back(seg_len == 0
                      ? pts[seg]
                      : pts[seg] + (along / seg_len) * (pts[seg + 1] - pts[seg]));
    walked = want;
    seg_done = along;
  }
  out.push_back(pts.back());
  pts = std::move(out);
}

// One relaxation stage: each interior vertex tries the chord midpoint, then
// a golden-section search along the chord normal.  Continuous normal moves
// are what let the path settle into curved channels whose cheap direction
// falls between the 16 hop directions.
template <class Cost>
void relax_polyline(const Cost& cost, std::vector<cplx>& pts, double step0,
                    int sweeps) {
  if (pts.size() < 3) return;
  constexpr double kGolden = 0.6180339887498949;
  double step = 1.5 * step0;
  for (int s = 0; s < sweeps; ++s) {
    bool moved = false;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
      const cplx l = pts[i - 1], r = pts[i + 1];
      double base = cost(l, pts[i]) + cost(pts[i], r);
      cplx best = pts[i];
      // chord midpoint pulls out grid zig-zag fast
      cplx mid = 0.5 * (l + r);
      double v = cost(l, mid) + cost(mid, r);
      if (v < base) {
        base = v;
        best = mid;
      }
      cplx chord = r - l;
      double clen = std::abs(chord);
      if (clen > 0) {
        cplx nrm = cplx(-chord.imag(), chord.real()) / clen;
        auto at = [&](double t) {
          cplx p = best + t * nrm;
          return cost(l, p) + cost(p, r);
        };
        double a = -step, b = step;
        double c = b - kGolden * (b - a), d = a + kGolden * (b - a);
        double fc = at(c), fd = at(d);
        for (int it = 0; it < 22; ++it) {
          if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kGolden * (b - a);
            fc = at(c);
          } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kGolden * (b - a);
            fd = at(d);
          }
        }
        double t = 0.5 * (a + b);
        v = at(t);
        if (v < base) {
          base = v;
          best += t * nrm;
        }
      }
      if (best != pts[i]) {
        pts[i] = best;
        moved = true;
      }
    }
    if (s % 2 == 1) step = std::max(0.5 * step, 1e-3 * step0);
    if (!moved) break;
  }
}

// Drops interior vertices whose removal does not lengthen the path, then
// relaxes coarse-to-fine: early levels have few vertices and large steps so
// the whole path can migrate sideways into a distant cheap channel, late
// levels remove the residual hop quantization at scale `step0`.  Never
// returns a costlier polyline than it was given.  The cost functor must
// accept arbitrary (off-grid) endpoints.
template <class Cost>
void straighten_polyline(const Cost& cost, std::vector<cplx>& pts, double step0,
                         int sweeps) {
  if (pts.size() < 3 || !(step0 > 0)) return;
  const std::vector<cplx> orig = pts;
  const double before = polyline_cost(cost, pts);
  // decimation: greedy shortcutting
  {
    std::vector<cplx> out;
    out.push_back(pts.front());
    std::size_t i = 0;
    while (i + 1 < pts.size()) {
      std::size_t j = std::min(pts.size() - 1, i + 2);
      double through = cost(pts[i], pts[i + 1]) +
                       (j > i + 1 ? cost(pts[i + 1], pts[j]) : 0.0);
      if (j > i + 1 && cost(pts[i], pts[j]) <= through * (1 + 1e-12)) {
        out.push_back(pts[j]);
        i = j;
      } else {
        out.push_back(pts[i + 1]);
        i = i + 1;
      }
    }
    pts = std::move(out);
  }
  double total = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    total += std::abs(pts[i + 1] - pts[i]);
  double spacing = std::max(step0, total / 8.0);
  for (;;) {
    resample_polyline(pts, spacing);
    relax_polyline(cost, pts, spacing, sweeps);
    if (spacing <= step0) break;
    spacing = std::max(step0, 0.5 * spacing);
  }
  if (polyline_cost(cost, pts) > before) pts = orig;
}

// Node-to-node shortest path expanded to a polyline with exact endpoints.
template <class Cost>
std::pair<double, std::vector<cplx>> grid_shortest_polyline(
    const PathGrid& g, const Cost& cost, cplx x1, cplx x2) {
  int src = g.snap(x1), dst = g.snap(x2);
  std::vector<int> prev;
  auto dist = grid_dijkstra(g, cost, src, dst, &prev);
  if (!std::isfinite(dist[dst])) throw NoPath("no grid route between endpoints");
  std::vector<cplx> pts;
  for (int v = dst; v >= 0; v = prev[v] == v ? -1 : prev[v]) {
    pts.push_back(g.node(v % g.n, v / g.n));
    if (v == src) break;
  }
  std::reverse(pts.begin(), pts.end());
  double graph = dist[dst];
  if (std::abs(x1 - pts.front()) > 1e-15) {
    graph += cost(x1, pts.front());
    pts.insert(pts.begin(), x1);
  }
  if (std::abs(x2 - pts.back()) > 1e-15) {
    graph += cost(pts.back(), x2);
    pts.push_back(x2);
  }
  return {graph, std::move(pts)};
}

}  // namespace qdlab::detail
