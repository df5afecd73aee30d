#pragma once

// Brute-force reference computations used by the unit and acceptance suites.
// Nothing here calls into the geodesic or solver code paths it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <utility>
#include <vector>

#include "bnpc/spaces.hpp"

namespace oracle {

struct WeightedGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;

  explicit WeightedGraph(int vertices) : n(vertices), adj(vertices) {}
  int add_vertex() {
    adj.emplace_back();
    return n++;
  }
  void add_edge(int a, int b, double w) {
    adj[a].push_back({b, w});
    adj[b].push_back({a, w});
  }
  void remove_edge(int a, int b) {
    auto drop = [](auto& list, int x) {
      list.erase(std::remove_if(list.begin(), list.end(), [&](auto& p) { return p.first == x; }), list.end());
    };
    drop(adj[a], b);
    drop(adj[b], a);
  }
};

inline std::vector<double> dijkstra(const WeightedGraph& g, int src) {
  std::vector<double> dist(g.n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[v]) continue;
    for (auto [w, len] : g.adj[v]) {
      if (d + len < dist[w]) {
        dist[w] = d + len;
        pq.push({dist[w], w});
      }
    }
  }
  return dist;
}

/// Shortest-path distance between two tree points by subdividing their host
/// edges into explicit graph vertices and running Dijkstra.
inline double tree_path_distance(const bnpc::TreeTopology& t, const bnpc::TreeLocation& a,
                                 const bnpc::TreeLocation& b) {
  WeightedGraph g(t.num_vertices());
  for (const auto& e : t.edges()) g.add_edge(e.u, e.v, e.length);
  // Insert points; several on the same edge are handled by sorting offsets.
  std::vector<std::pair<bnpc::TreeLocation, int>> inserted;
  auto vertex_of = [&](const bnpc::TreeLocation& loc) {
    if (loc.vertex >= 0) return loc.vertex;
    return -1;
  };
  int ia = vertex_of(a);
  int ib = vertex_of(b);
  std::vector<std::pair<double, int*>> on_edge_a, on_edge_b;
  if (ia < 0 || ib < 0) {
    // Group by edge.
    std::vector<int> edges_touched;
    if (ia < 0) edges_touched.push_back(a.edge);
    if (ib < 0 && (ia >= 0 || b.edge != a.edge)) edges_touched.push_back(b.edge);
    for (int eid : edges_touched) {
      const auto& e = t.edges()[eid];
      std::vector<std::pair<double, int*>> pts;
      if (ia < 0 && a.edge == eid) pts.push_back({a.offset, &ia});
      if (ib < 0 && b.edge == eid) pts.push_back({b.offset, &ib});
      std::sort(pts.begin(), pts.end(), [](auto& x, auto& y) { return x.first < y.first; });
      g.remove_edge(e.u, e.v);
      int prev = e.u;
      double prev_off = 0.0;
      for (auto& [off, slot] : pts) {
        int v = g.add_vertex();
        g.add_edge(prev, v, off - prev_off);
        *slot = v;
        prev = v;
        prev_off = off;
      }
      g.add_edge(prev, e.v, e.length - prev_off);
    }
  }
  return dijkstra(g, ia)[ib];
}

/// Smallest enclosing ball of planar points by exhaustive search over all
/// circles through 2 or 3 of the points (plus the 1-point case).
struct Ball2 {
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;
};

inline Ball2 exhaustive_enclosing_ball(const std::vector<std::pair<double, double>>& pts) {
  const double eps = 1e-10;
  auto covers = [&](double cx, double cy, double r) {
    for (auto [x, y] : pts) {
      if (std::hypot(x - cx, y - cy) > r * (1 + eps) + eps) return false;
    }
    return true;
  };
  Ball2 best{0, 0, std::numeric_limits<double>::infinity()};
  auto consider = [&](double cx, double cy, double r) {
    if (r < best.r && covers(cx, cy, r)) best = {cx, cy, r};
  };
  const std::size_t n = pts.size();
  if (n == 1) return {pts[0].first, pts[0].second, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double cx = 0.5 * (pts[i].first + pts[j].first);
      double cy = 0.5 * (pts[i].second + pts[j].second);
      consider(cx, cy, std::hypot(pts[i].first - cx, pts[i].second - cy));
      for (std::size_t k = j + 1; k < n; ++k) {
        double ax = pts[i].first, ay = pts[i].second;
        double bx = pts[j].first, by = pts[j].second;
        double qx = pts[k].first, qy = pts[k].second;
        double d = 2 * (ax * (by - qy) + bx * (qy - ay) + qx * (ay - by));
        if (std::abs(d) < 1e-14) continue;
        double ux = ((ax * ax + ay * ay) * (by - qy) + (bx * bx + by * by) * (qy - ay) +
                     (qx * qx + qy * qy) * (ay - by)) / d;
        double uy = ((ax * ax + ay * ay) * (qx - bx) + (bx * bx + by * by) * (ax - qx) +
                     (qx * qx + qy * qy) * (bx - ax)) / d;
        consider(ux, uy, std::hypot(ax - ux, ay - uy));
      }
    }
  }
  return best;
}

/// Minimizes a function of the tree position by a dense scan of every edge.
/// Returns (value, edge, offset); vertices are covered as edge endpoints.
struct TreeScanResult {
  double value = std::numeric_limits<double>::infinity();
  int edge = -1;
  double offset = 0.0;
};

inline TreeScanResult scan_tree(const bnpc::Space& tree, const std::function<double(const bnpc::Point&)>& f,
                                int samples_per_edge) {
  TreeScanResult best;
  const auto& edges = tree.topology().edges();
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    for (int k = 0; k <= samples_per_edge; ++k) {
      double off = edges[e].length * k / samples_per_edge;
      double v = f(tree.tree_point(e, off));
      if (v < best.value) best = {v, e, off};
    }
  }
  if (edges.empty()) best = {f(bnpc::Point::tree_vertex(0)), -1, 0.0};
  return best;
}

/// Exact grid minimum of a function of n real variables on a box.
inline std::pair<double, std::vector<double>> grid_minimum(
    const std::function<double(const std::vector<double>&)>& f, int n, double lo, double hi, int steps) {
  std::vector<int> idx(n, 0);
  std::vector<double> x(n), best_x(n);
  double best = std::numeric_limits<double>::infinity();
  const double h = (hi - lo) / steps;
  while (true) {
    for (int i = 0; i < n; ++i) x[i] = lo + h * idx[i];
    double v = f(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
    int i = 0;
    while (i < n && ++idx[i] > steps) idx[i++] = 0;
    if (i == n) break;
  }
  return {best, best_x};
}

/// Grid search on a box, repeated on boxes shrinking around the incumbent. For
/// convex f each round keeps the minimizer inside the box. Returns the final
/// spacing through `spacing`.
inline std::pair<double, std::vector<double>> zoom_grid_minimum(
    const std::function<double(const std::vector<double>&)>& f, int n, double lo, double hi, int steps, int rounds,
    double* spacing = nullptr) {
  std::vector<double> centre(n, 0.5 * (lo + hi));
  double half = 0.5 * (hi - lo);
  std::pair<double, std::vector<double>> best{std::numeric_limits<double>::infinity(), centre};
  for (int r = 0; r < rounds; ++r) {
    auto shifted = [&](const std::vector<double>& u) {
      std::vector<double> x(n);
      for (int i = 0; i < n; ++i) x[i] = centre[i] + u[i];
      return f(x);
    };
    auto [v, u] = grid_minimum(shifted, n, -half, half, steps);
    if (v <= best.first) {
      for (int i = 0; i < n; ++i) centre[i] += u[i];
      best = {v, centre};
    }
    if (spacing) *spacing = 2.0 * half / steps;
    half *= 4.0 / steps;
  }
  return best;
}

/// Closed-form modulus of convexity of a Hilbert space.
inline double hilbert_modulus(double eps) { return 1.0 - std::sqrt(1.0 - eps * eps / 4.0); }

/// Modulus of convexity of L_p by Hanner's equalities.
/// p >= 2: 1 - (1 - (eps/2)^p)^(1/p).
/// 1 < p < 2: delta solves (1 - delta + eps/2)^p + |1 - delta - eps/2|^p = 2.
inline double hanner_modulus(double p, double eps) {
  if (p >= 2.0) return 1.0 - std::pow(1.0 - std::pow(eps / 2.0, p), 1.0 / p);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double v = std::pow(1.0 - mid + eps / 2.0, p) + std::pow(std::abs(1.0 - mid - eps / 2.0), p);
    // v decreases in delta on the relevant branch.
    if (v > 2.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Unit-edge star with `leaves` leaves; vertex 0 is the centre.
inline bnpc::Space star(int leaves, double length = 1.0) {
  std::vector<bnpc::TreeEdge> edges;
  for (int i = 1; i <= leaves; ++i) edges.push_back({0, i, length});
  return bnpc::Space::tree(leaves + 1, edges);
}

/// Random tree on n vertices with edge lengths in [0.2, 2].
inline bnpc::Space random_tree(int n, std::mt19937_64& rng) {
  std::vector<bnpc::TreeEdge> edges;
  std::uniform_real_distribution<double> len(0.2, 2.0);
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> parent(0, v - 1);
    edges.push_back({parent(rng), v, len(rng)});
  }
  return bnpc::Space::tree(n, edges);
}

}  // namespace oracle
