#include "bnpc/convexity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <unordered_set>

#include "linalg.hpp"

namespace bnpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGolden = 0.6180339887498949;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
  return r;
}

std::vector<double> to_vec(const Point& x) { return {x.coords().begin(), x.coords().end()}; }

/// Orthonormalizes `dirs` (modified Gram-Schmidt), dropping vectors that become shorter than tol.
std::vector<std::vector<double>> orthonormalize(const std::vector<std::vector<double>>& dirs, double tol) {
  std::vector<std::vector<double>> basis;
  for (auto v : dirs) {
    const double scale = std::sqrt(dot(v, v));
    for (const auto& u : basis) {
      const double c = dot(v, u);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * u[i];
    }
    const double n = std::sqrt(dot(v, v));
    if (n <= tol * std::max(1.0, scale)) continue;
    for (double& c : v) c /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

/// Minimizes a convex function of one variable on [a, b] by golden-section search.
double golden_section(const std::function<double(double)>& g, double a, double b, double tol, double& best) {
  double x1 = b - kGolden * (b - a);
  double x2 = a + kGolden * (b - a);
  double f1 = g(x1), f2 = g(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = g(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = g(x2);
    }
  }
  double t = f1 <= f2 ? x1 : x2;
  best = std::min(f1, f2);
  for (double end : {a, b}) {
    const double v = g(end);
    if (v < best) {
      best = v;
      t = end;
    }
  }
  return t;
}

/// Exact line minimization of a convex g along t, starting from g(0) = g0 with trial step h.
/// Returns the step taken (0 when no decrease was found).
double line_minimize(const std::function<double(double)>& g, double g0, double h, double max_step, double& value) {
  value = g0;
  double fp = g(h), fm = g(-h);
  double sign = 1.0;
  if (fp >= g0 && fm >= g0) {
    double best = g0;
    const double t = golden_section(g, -h, h, h * 1e-10, best);
    if (best < g0) {
      value = best;
      return t;
    }
    return 0.0;
  }
  if (fm < fp) {
    sign = -1.0;
    fp = fm;
  }
  // Expand until the function increases.
  double prev = 0.0, cur = h, fcur = fp;
  while (std::abs(cur) < max_step) {
    const double next = cur * 2.0;
    const double fnext = g(sign * next);
    if (fnext >= fcur) {
      double best = fcur;
      const double t = golden_section([&](double u) { return g(sign * u); }, prev, next, std::max(next, 1.0) * 1e-12, best);
      value = best;
      return sign * t;
    }
    prev = cur;
    cur = next;
    fcur = fnext;
  }
  value = fcur;
  return sign * cur;
}

// Solves the small dense system a x = b in place (partial pivoting); false if singular.
// Minimum-norm element of the convex hull of `g` (Wolfe's active-set algorithm).
std::vector<double> min_norm_hull(const std::vector<std::vector<double>>& g) {
  const std::size_t dim = g[0].size();
  double scale = 0.0;
  std::size_t first = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    scale = std::max(scale, dot(g[i], g[i]));
    if (dot(g[i], g[i]) < dot(g[first], g[first])) first = i;
  }
  std::vector<std::size_t> active{first};
  std::vector<double> lam{1.0};
  auto combine = [&] {
    std::vector<double> v(dim, 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t k = 0; k < dim; ++k) v[k] += lam[a] * g[active[a]][k];
    }
    return v;
  };
  for (int major = 0; major < 100; ++major) {
    const std::vector<double> v = combine();
    std::size_t j = 0;
    for (std::size_t i = 1; i < g.size(); ++i) {
      if (dot(v, g[i]) < dot(v, g[j])) j = i;
    }
    if (dot(v, g[j]) >= dot(v, v) - 1e-14 * scale) return v;
    if (std::find(active.begin(), active.end(), j) != active.end()) return v;
    active.push_back(j);
    lam.push_back(0.0);
    for (int minor = 0; minor < 100; ++minor) {
      // Affine minimizer over the active set: [G 1; 1^T 0] [alpha; mu] = [0; 1].
      const std::size_t m = active.size();
      std::vector<std::vector<double>> a(m + 1, std::vector<double>(m + 1, 0.0));
      std::vector<double> rhs(m + 1, 0.0);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) a[r][c] = dot(g[active[r]], g[active[c]]) + (r == c ? 1e-15 * scale : 0.0);
        a[r][m] = a[m][r] = 1.0;
      }
      rhs[m] = 1.0;
      if (!linalg::solve_dense(a, rhs)) return combine();
      bool interior = true;
      for (std::size_t r = 0; r < m; ++r) interior = interior && rhs[r] > 1e-15;
      if (interior) {
        lam.assign(rhs.begin(), rhs.begin() + static_cast<long>(m));
        break;
      }
      double theta = 1.0;
      for (std::size_t r = 0; r < m; ++r) {
        if (rhs[r] <= 1e-15) theta = std::min(theta, lam[r] / (lam[r] - rhs[r]));
      }
      for (std::size_t r = 0; r < m; ++r) lam[r] += theta * (rhs[r] - lam[r]);
      std::vector<std::size_t> keep_idx;
      std::vector<double> keep_lam;
      for (std::size_t r = 0; r < m; ++r) {
        if (lam[r] > 1e-15) {
          keep_idx.push_back(active[r]);
          keep_lam.push_back(lam[r]);
        }
      }
      if (keep_idx.empty()) {
        keep_idx.push_back(j);
        keep_lam.push_back(1.0);
      }
      active = std::move(keep_idx);
      lam = std::move(keep_lam);
      const double total = std::accumulate(lam.begin(), lam.end(), 0.0);
      for (double& l : lam) l /= total;
    }
  }
  return combine();
}

// Gradient sampling: descend along the min-norm element of finite-difference gradients
// taken around x, shrinking the sampling radius when no descent is found. Handles the
// ridges of non-smooth convex functions where coordinate line searches stall.
void refine_nonsmooth(const ConvexFunction& f, std::vector<double>& x, double& fx, double h, double tol, Rng& rng) {
  const std::size_t n = x.size();
  std::normal_distribution<double> normal;
  auto value = [&](const std::vector<double>& z) { return f(Point::vector(z)); };
  auto gradient = [&](std::vector<double> z, double step) {
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double keep = z[k];
      z[k] = keep + step;
      const double fp = value(z);
      z[k] = keep - step;
      const double fm = value(z);
      z[k] = keep;
      g[k] = (fp - fm) / (2.0 * step);
    }
    return g;
  };
  for (int iter = 0; iter < 4000 && h > 0.1 * tol; ++iter) {
    std::vector<std::vector<double>> grads{gradient(x, 1e-3 * h)};
    for (std::size_t j = 0; j < 2 * n + 2; ++j) {
      std::vector<double> z = x, u(n);
      for (double& c : u) c = normal(rng);
      const double un = std::sqrt(dot(u, u));
      for (std::size_t k = 0; k < n; ++k) z[k] += h * u[k] / un;
      grads.push_back(gradient(z, 1e-3 * h));
    }
    std::vector<double> g = min_norm_hull(grads);
    const double gn = std::sqrt(dot(g, g));
    if (gn <= h) {
      // Zero is (nearly) in the sampled subdifferential: stationary at this radius.
      h *= 0.1;
      continue;
    }
    std::vector<double> dir(n);
    for (std::size_t k = 0; k < n; ++k) dir[k] = -g[k] / gn;
    auto along = [&](double t) {
      std::vector<double> z(n);
      for (std::size_t k = 0; k < n; ++k) z[k] = x[k] + t * dir[k];
      return value(z);
    };
    double fnew = fx;
    const double t = line_minimize(along, fx, h, 1e6 * std::max(1.0, h), fnew);
    if (fnew < fx) {
      for (std::size_t k = 0; k < n; ++k) x[k] += t * dir[k];
      fx = fnew;
    } else {
      h *= 0.1;
    }
  }
}

Point minimize_vector(const Space& s, const ConvexFunction& f, const Point& x_init, double tol,
                      const SearchOptions& opts) {
  const int n = s.dim();
  Rng rng(opts.seed);
  std::normal_distribution<double> normal;
  std::vector<double> x = to_vec(x_init);
  const std::vector<double> x0 = x;
  double fx = f(Point::vector(x));
  std::vector<std::vector<double>> dirs;
  for (int i = 0; i < n; ++i) {
    std::vector<double> e(n, 0.0);
    e[i] = 1.0;
    dirs.push_back(std::move(e));
  }
  double h = 1.0;
  auto along = [&](const std::vector<double>& u) {
    return [&, u](double t) {
      std::vector<double> z(n);
      for (int i = 0; i < n; ++i) z[i] = x[i] + t * u[i];
      return f(Point::vector(std::move(z)));
    };
  };
  auto step = [&](const std::vector<double>& u) {
    double value = fx;
    const double t = line_minimize(along(u), fx, h, opts.divergence_radius, value);
    if (value < fx) {
      for (int i = 0; i < n; ++i) x[i] += t * u[i];
      fx = value;
    }
    return std::abs(t);
  };
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const std::vector<double> start = x;
    const double f_start = fx;
    double biggest = 0.0;
    std::size_t biggest_idx = 0;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      const double before = fx;
      step(dirs[k]);
      if (before - fx > biggest) {
        biggest = before - fx;
        biggest_idx = k;
      }
    }
    for (int r = 0; r < 2; ++r) {
      std::vector<double> u(n);
      for (double& c : u) c = normal(rng);
      const double un = std::sqrt(dot(u, u));
      for (double& c : u) c /= un;
      step(u);
    }
    std::vector<double> net(n);
    for (int i = 0; i < n; ++i) net[i] = x[i] - start[i];
    const double moved = std::sqrt(dot(net, net));
    if (moved > 0.0) {
      for (double& c : net) c /= moved;
      step(net);
      if (n > 1) dirs[biggest_idx] = net;
    }
    double escape = 0.0;
    for (int i = 0; i < n; ++i) escape = std::max(escape, std::abs(x[i] - x0[i]));
    if (escape > opts.divergence_radius || !std::isfinite(fx)) {
      throw ConvergenceError("minimize_convex: iterates diverge; the function does not look coercive",
                             std::make_shared<const Point>(Point::vector(x)));
    }
    h = std::clamp(moved, 1e-8, 1.0);
    if (moved < tol && f_start - fx <= tol * (1.0 + std::abs(fx))) break;
  }
  refine_nonsmooth(f, x, fx, std::max(1e-3, 100.0 * tol), tol, rng);
  return Point::vector(std::move(x));
}

Point minimize_tree(const Space& s, const ConvexFunction& f, double tol) {
  const auto& edges = s.topology().edges();
  Point best = Point::tree_vertex(0);
  double fbest = f(best);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    double value = kInf;
    const double t = golden_section([&](double u) { return f(s.tree_point(e, u)); }, 0.0, edges[e].length,
                                    std::max(tol * 1e-2, 1e-13 * edges[e].length), value);
    if (value < fbest) {
      fbest = value;
      best = s.tree_point(e, t);
    }
  }
  return best;
}

Point minimize_product(const Space& s, const ConvexFunction& f, const Point& x_init, double tol,
                       const SearchOptions& opts) {
  std::vector<Point> parts = x_init.factors();
  double fx = f(x_init);
  const std::size_t m = parts.size();
  for (int cycle = 0; cycle < std::min(opts.max_iterations, 500); ++cycle) {
    double moved = 0.0;
    const double f_start = fx;
    for (std::size_t i = 0; i < m; ++i) {
      ConvexFunction g{[&, i](const Point& z) {
                         std::vector<Point> q = parts;
                         q[i] = z;
                         return f(Point::product(std::move(q)));
                       },
                       f.mode};
      SearchOptions sub = opts;
      sub.seed = opts.seed + 7919 * (cycle + 1) + i;
      Point zi = minimize_convex(s.factors()[i], g, parts[i], tol, sub);
      const double gz = g(zi);
      if (gz < fx) {
        moved = std::max(moved, s.factors()[i].distance(parts[i], zi));
        parts[i] = zi;
        fx = gz;
      }
    }
    if (s.distance(x_init, Point::product(parts)) > opts.divergence_radius) {
      throw ConvergenceError("minimize_convex: iterates diverge; the function does not look coercive",
                             std::make_shared<const Point>(Point::product(parts)));
    }
    if (moved < tol && f_start - fx <= tol * (1.0 + std::abs(fx))) break;
  }
  return Point::product(std::move(parts));
}

// Key for approximate deduplication of points.
void append_key(const Point& x, std::vector<std::int64_t>& key) {
  constexpr double kQuantum = 1099511627776.0;  // 2^40
  switch (x.kind()) {
    case PointKind::Vector:
      for (double c : x.coords()) key.push_back(std::llround(c * kQuantum));
      break;
    case PointKind::Tree:
      key.push_back(x.tree().vertex);
      key.push_back(x.tree().edge);
      key.push_back(std::llround(x.tree().offset * kQuantum));
      break;
    case PointKind::Product:
      for (const Point& p : x.factors()) append_key(p, key);
      break;
  }
}

struct KeyHash {
  std::size_t operator()(const std::vector<std::int64_t>& k) const {
    std::size_t h = 1469598103934665603ULL;
    for (auto v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ULL;
    return h;
  }
};

std::vector<Point> dedupe(const std::vector<Point>& pts) {
  std::unordered_set<std::vector<std::int64_t>, KeyHash> seen;
  std::vector<Point> out;
  for (const Point& p : pts) {
    std::vector<std::int64_t> key;
    append_key(p, key);
    if (seen.insert(std::move(key)).second) out.push_back(p);
  }
  return out;
}

double max_distance(const Space& s, const Point& c, const std::vector<Point>& pts) {
  double r = 0.0;
  for (const Point& p : pts) r = std::max(r, s.distance(c, p));
  return r;
}

// Smallest enclosing ball in Euclidean space (Welzl).
struct EBall {
  std::vector<double> c;
  double r2 = -1.0;
};

EBall ball_through(const std::vector<const std::vector<double>*>& support, std::size_t dim) {
  if (support.empty()) return {std::vector<double>(dim, 0.0), -1.0};
  const auto& p0 = *support[0];
  const std::size_t m = support.size() - 1;
  if (m == 0) return {p0, 0.0};
  // c = p0 + sum_j lam_j (p_j - p0) with 2 <p_i - p0, c - p0> = |p_i - p0|^2.
  std::vector<std::vector<double>> a(m, std::vector<double>(dim));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < dim; ++k) a[i][k] = (*support[i + 1])[k] - p0[k];
  }
  std::vector<std::vector<double>> g(m, std::vector<double>(m + 1));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) g[i][j] = 2.0 * dot(a[i], a[j]);
    g[i][m] = dot(a[i], a[i]);
  }
  std::vector<bool> active(m, true);
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::abs(g[r][col]) > std::abs(g[piv][col])) piv = r;
    }
    std::swap(g[col], g[piv]);
    if (std::abs(g[col][col]) < 1e-14 * (1.0 + std::abs(g[col][m]))) {
      active[col] = false;
      continue;
    }
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      const double factor = g[r][col] / g[col][col];
      for (std::size_t k = col; k <= m; ++k) g[r][k] -= factor * g[col][k];
    }
  }
  std::vector<double> c = p0;
  for (std::size_t j = 0; j < m; ++j) {
    if (!active[j]) continue;
    const double lam = g[j][m] / g[j][j];
    for (std::size_t k = 0; k < dim; ++k) c[k] += lam * a[j][k];
  }
  double r2 = 0.0;
  for (const auto* p : support) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < dim; ++k) d2 += ((*p)[k] - c[k]) * ((*p)[k] - c[k]);
    r2 = std::max(r2, d2);
  }
  return {std::move(c), r2};
}

bool inside(const EBall& b, const std::vector<double>& p) {
  if (b.r2 < 0.0) return false;
  double d2 = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) d2 += (p[k] - b.c[k]) * (p[k] - b.c[k]);
  return d2 <= b.r2 * (1.0 + 1e-12) + 1e-24;
}

EBall welzl(const std::vector<std::vector<double>>& pts, std::size_t n, std::vector<const std::vector<double>*>& support,
            std::size_t dim) {
  EBall b = ball_through(support, dim);
  if (support.size() == dim + 1) return b;
  for (std::size_t i = 0; i < n; ++i) {
    if (inside(b, pts[i])) continue;
    support.push_back(&pts[i]);
    b = welzl(pts, i, support, dim);
    support.pop_back();
  }
  return b;
}

Circumcenter euclidean_circumcenter(const Space& s, const std::vector<Point>& pts) {
  std::vector<std::vector<double>> v;
  for (const Point& p : pts) v.push_back(to_vec(p));
  // A fixed shuffle keeps the expected linear running time and the output deterministic.
  Rng rng(0x5eed);
  std::shuffle(v.begin(), v.end(), rng);
  std::vector<const std::vector<double>*> support;
  EBall b = welzl(v, v.size(), support, static_cast<std::size_t>(s.dim()));
  Point c = Point::vector(std::move(b.c));
  return {c, max_distance(s, c, pts), 0.0};
}

Circumcenter tree_circumcenter(const Space& s, const std::vector<Point>& pts) {
  // In a tree the minimax center is the midpoint of a diametral pair.
  std::size_t a = 0, b = 0;
  double diam = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = s.distance(pts[i], pts[j]);
      if (d > diam) {
        diam = d;
        a = i;
        b = j;
      }
    }
  }
  Point c = s.midpoint(pts[a], pts[b]);
  const double r = max_distance(s, c, pts);
  return {c, r, r - 0.5 * diam};
}

double half_diameter(const Space& s, const std::vector<Point>& pts) {
  double d = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, s.distance(pts[i], pts[j]));
  }
  return 0.5 * d;
}

Circumcenter generic_circumcenter(const Space& s, const std::vector<Point>& pts, double tol) {
  // Minimax descent: step 1/(k+1) along the geodesic towards the current farthest point.
  Point c = pts[0];
  Point best = c;
  double rbest = max_distance(s, c, pts);
  for (int k = 1; k <= 4000; ++k) {
    std::size_t far = 0;
    double r = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = s.distance(c, pts[i]);
      if (d > r) {
        r = d;
        far = i;
      }
    }
    if (r < rbest) {
      rbest = r;
      best = c;
    }
    c = s.geodesic_point(c, pts[far], 1.0 / (k + 1.0));
  }
  ConvexFunction radius{[&](const Point& z) { return max_distance(s, z, pts); }, ConvexFunction::Certificate::Exact};
  Point polished = minimize_convex(s, radius, best, tol);
  if (radius(polished) < rbest) {
    best = polished;
    rbest = radius(polished);
  }
  return {best, rbest, rbest - half_diameter(s, pts)};
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvexSet

ConvexSet ConvexSet::ball(Point center, double radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw DomainError("ball radius must be finite and non-negative");
  ConvexSet c;
  c.kind_ = Kind::Ball;
  c.center_ = std::move(center);
  c.radius_ = radius;
  return c;
}

ConvexSet ConvexSet::midpoint_hull(std::vector<Point> generators, int depth) {
  if (generators.empty()) throw DomainError("midpoint hull needs at least one generator");
  if (depth < 0) throw DomainError("midpoint hull depth must be non-negative");
  ConvexSet c;
  c.kind_ = Kind::MidpointHull;
  c.generators_ = std::move(generators);
  c.depth_ = depth;
  return c;
}

ConvexSet ConvexSet::affine_subspace(Point base, std::vector<std::vector<double>> directions) {
  if (base.kind() != PointKind::Vector) throw DomainError("affine subspace needs a vector base point");
  for (const auto& d : directions) {
    if (d.size() != base.dim()) throw DomainError("affine subspace direction has the wrong dimension");
  }
  ConvexSet c;
  c.kind_ = Kind::AffineSubspace;
  c.center_ = std::move(base);
  c.directions_ = orthonormalize(directions, 1e-12);
  return c;
}

ConvexSet ConvexSet::subtree(const Space& tree, std::vector<int> vertices) {
  const TreeTopology& tp = tree.topology();
  if (vertices.empty()) throw DomainError("subtree needs at least one vertex");
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
  std::vector<char> in(tp.num_vertices(), 0);
  for (int v : vertices) {
    if (v < 0 || v >= tp.num_vertices()) throw DomainError("subtree vertex out of range");
    in[v] = 1;
  }
  // Connectivity of the induced subgraph.
  std::vector<char> seen(tp.num_vertices(), 0);
  std::queue<int> queue;
  queue.push(vertices[0]);
  seen[vertices[0]] = 1;
  std::size_t reached = 0;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop();
    ++reached;
    for (int w : tp.neighbours(v)) {
      if (in[w] && !seen[w]) {
        seen[w] = 1;
        queue.push(w);
      }
    }
  }
  if (reached != vertices.size()) throw DomainError("subtree vertices are not path-connected");
  ConvexSet c;
  c.kind_ = Kind::Subtree;
  c.vertices_ = std::move(vertices);
  return c;
}

ConvexSet ConvexSet::sublevel_set(ConvexFunction f, double level) {
  if (!f.eval) throw DomainError("sublevel set needs a function");
  ConvexSet c;
  c.kind_ = Kind::SublevelSet;
  c.f_ = std::move(f);
  c.level_ = level;
  return c;
}

const std::vector<Point>& ConvexSet::hull_cloud(const Space& s) const {
  if (kind_ != Kind::MidpointHull) throw DomainError("hull cloud is only defined for midpoint hulls");
  if (!cloud_) cloud_ = std::make_shared<const std::vector<Point>>(hull_iterate(s, generators_, depth_));
  return *cloud_;
}

bool ConvexSet::in_subtree(const Space& s, const Point& x) const {
  const TreeLocation& loc = x.tree();
  auto member = [&](int v) { return std::binary_search(vertices_.begin(), vertices_.end(), v); };
  if (loc.vertex >= 0) return member(loc.vertex);
  const TreeEdge& e = s.topology().edges()[loc.edge];
  return member(e.u) && member(e.v);
}

bool ConvexSet::contains(const Space& s, const Point& x, double tol) const {
  s.validate(x);
  switch (kind_) {
    case Kind::Ball:
      return s.distance(center_, x) <= radius_ + tol;
    case Kind::MidpointHull: {
      const auto& cloud = hull_cloud(s);
      double best = kInf;
      for (const Point& p : cloud) best = std::min(best, s.distance(p, x));
      return best <= tol;
    }
    case Kind::AffineSubspace:
    case Kind::Subtree:
      return s.distance(project(s, x, *this, tol), x) <= tol;
    case Kind::SublevelSet:
      return f_(x) <= level_ + tol;
  }
  return false;
}

FiniteGroupAction::FiniteGroupAction(Space space, std::vector<Isometry> generators)
    : space_(std::move(space)), generators_(std::move(generators)) {
  if (generators_.empty()) throw DomainError("group action needs at least one generator");
  for (const Isometry& g : generators_) {
    g.check_for(space_);
    has_identity_ = has_identity_ || g.is_identity();
  }
}

// ---------------------------------------------------------------------------
// Operations

Point minimize_convex(const Space& s, const ConvexFunction& f, const Point& x_init, double tol,
                      const SearchOptions& opts) {
  s.validate(x_init);
  if (!f.eval) throw DomainError("minimize_convex: empty function");
  switch (s.kind()) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector:
      return minimize_vector(s, f, x_init, tol, opts);
    case SpaceKind::MetricTree: {
      Point best = minimize_tree(s, f, tol);
      return f(x_init) < f(best) ? x_init : best;
    }
    case SpaceKind::Product:
      return minimize_product(s, f, x_init, tol, opts);
  }
  return x_init;
}

ModulusEstimate modulus_estimate(const Space& s, const Point& x, double eps, double r, int budget,
                                 std::uint64_t seed) {
  s.validate(x);
  if (!(eps > 0.0) || !(r > 0.0)) throw DomainError("modulus_estimate needs eps > 0 and r > 0");
  if (budget < 1) throw DomainError("modulus_estimate needs a positive budget");
  ModulusEstimate out;
  if (eps > 2.0) return out;
  const double sep = eps * r;
  out.delta = kInf;
  Rng rng(seed);

  auto consider = [&](const Point& y1, const Point& y2) {
    if (s.distance(x, y1) > r * (1.0 + 1e-12) || s.distance(x, y2) > r * (1.0 + 1e-12)) return;
    if (s.distance(y1, y2) < sep * (1.0 - 1e-12)) return;
    const double v = r - s.distance(x, s.midpoint(y1, y2));
    if (v < out.delta) {
      out.feasible = true;
      out.delta = v;
      out.y1 = y1;
      out.y2 = y2;
    }
  };
  // Radial push to the sphere of radius r (trees may stop short at a leaf).
  auto to_sphere = [&](const Point& z) {
    const double d = s.distance(x, z);
    if (d == 0.0) return z;
    return d > r ? s.geodesic_point(x, z, r / d) : s.extend(x, z, r);
  };
  auto clamp = [&](const Point& z) {
    const double d = s.distance(x, z);
    return d > r ? s.geodesic_point(x, z, r / d) : z;
  };

  double step = 0.25 * r;
  for (int k = 0; k < budget; ++k) {
    const int kind = out.feasible ? k % 3 : k % 2;
    if (kind == 0) {
      // Both points on the sphere at separation exactly eps r.
      Point y1 = to_sphere(s.sample(x, r, rng));
      Point z = to_sphere(s.sample(x, r, rng));
      if (s.distance(y1, z) < sep) z = to_sphere(s.extend(y1, x, 2.0 * r));
      if (s.distance(y1, z) < sep) continue;
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (s.distance(y1, to_sphere(s.geodesic_point(y1, z, mid))) >= sep) hi = mid;
        else lo = mid;
      }
      consider(y1, to_sphere(s.geodesic_point(y1, z, hi)));
    } else if (kind == 1) {
      // One point on the sphere, the other eps r back along the ray through x.
      Point y1 = to_sphere(s.sample(x, r, rng));
      const double d1 = s.distance(y1, x);
      if (d1 == 0.0) continue;
      Point y2 = sep <= d1 ? s.geodesic_point(y1, x, sep / d1) : clamp(s.extend(y1, x, sep));
      consider(y1, y2);
    } else {
      // Local perturbation of the incumbent pair.
      Point y1 = clamp(s.sample(out.y1, step, rng));
      Point y2 = clamp(s.sample(out.y2, step, rng));
      const double before = out.delta;
      consider(y1, y2);
      step = out.delta < before ? std::min(step * 1.5, r) : std::max(step * 0.9, 1e-9 * r);
    }
  }
  if (!out.feasible) out.delta = 0.0;
  return out;
}

Point project(const Space& s, const Point& x, const ConvexSet& C, double tol) {
  s.validate(x);
  switch (C.kind()) {
    case ConvexSet::Kind::Ball: {
      s.validate(C.center());
      const double d = s.distance(C.center(), x);
      if (d <= C.radius()) return x;
      return s.geodesic_point(C.center(), x, C.radius() / d);
    }
    case ConvexSet::Kind::AffineSubspace: {
      if (s.kind() != SpaceKind::Euclidean) throw DomainError("affine subspaces live in Euclidean spaces");
      s.validate(C.center());
      std::vector<double> base = to_vec(C.center());
      std::vector<double> diff = to_vec(x);
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= base[i];
      for (const auto& u : C.directions()) {
        const double c = dot(diff, u);
        for (std::size_t i = 0; i < base.size(); ++i) base[i] += c * u[i];
      }
      return Point::vector(std::move(base));
    }
    case ConvexSet::Kind::Subtree: {
      if (s.kind() != SpaceKind::MetricTree) throw DomainError("subtrees live in metric trees");
      for (int v : C.vertices()) {
        if (v >= s.topology().num_vertices()) throw DomainError("subtree does not belong to this tree");
      }
      const TreeLocation& loc = x.tree();
      auto member = [&](int v) { return std::binary_search(C.vertices().begin(), C.vertices().end(), v); };
      if (loc.vertex >= 0 ? member(loc.vertex)
                          : member(s.topology().edges()[loc.edge].u) && member(s.topology().edges()[loc.edge].v)) {
        return x;
      }
      // From outside, the nearest point of a subtree is one of its vertices.
      int best = C.vertices()[0];
      double dbest = kInf;
      for (int v : C.vertices()) {
        const double d = s.distance(x, Point::tree_vertex(v));
        if (d < dbest) {
          dbest = d;
          best = v;
        }
      }
      return Point::tree_vertex(best);
    }
    case ConvexSet::Kind::MidpointHull: {
      const auto& cloud = C.hull_cloud(s);
      std::size_t best = 0;
      double dbest = kInf;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double d = s.distance(x, cloud[i]);
        if (d < dbest) {
          dbest = d;
          best = i;
        }
      }
      return cloud[best];
    }
    case ConvexSet::Kind::SublevelSet: {
      const ConvexFunction& f = C.function();
      const double level = C.level();
      if (f(x) <= level) return x;
      const double inner = std::max(tol, 1e-10);
      Point member = minimize_convex(s, f, x, inner);
      if (f(member) > level + tol) throw DomainError("sublevel set is empty");
      auto solve = [&](const Point& start) {
        // Exact penalty d(x, .) + lam (f - level)_+ with growing lam, then a geodesic snap into the set.
        Point y = start;
        double lam = 1.0;
        for (int stage = 0; stage < 40; ++stage) {
          ConvexFunction g{[&](const Point& z) { return s.distance(x, z) + lam * std::max(0.0, f(z) - level); },
                           ConvexFunction::Certificate::Exact};
          y = minimize_convex(s, g, y, inner * 1e-2);
          if (f(y) <= level + tol) break;
          lam *= 4.0;
        }
        if (f(y) > level) {
          double lo = 0.0, hi = 1.0;
          for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (f(s.geodesic_point(y, member, mid)) <= level) hi = mid;
            else lo = mid;
          }
          y = s.geodesic_point(y, member, hi);
        }
        return y;
      };
      Point p1 = solve(x);
      Point p2 = solve(member);
      // The distance to the set is known to ~1e-12 relative, which fixes the foot point
      // only to about the square root of that.
      const double agree = std::max(10.0 * tol, 1e-5 * std::max(1.0, s.distance(x, p1)));
      if (s.distance(p1, p2) > agree) {
        throw ConvergenceError("project: restarts disagree", std::make_shared<const Point>(p1));
      }
      return s.distance(x, p1) <= s.distance(x, p2) ? p1 : p2;
    }
  }
  return x;
}

Circumcenter circumcenter(const Space& s, const std::vector<Point>& pts, bool relative, double tol, int hull_depth) {
  if (pts.empty()) throw DomainError("circumcenter of an empty set");
  for (const Point& p : pts) s.validate(p);
  if (pts.size() == 1) return {pts[0], 0.0, 0.0};
  switch (s.kind()) {
    case SpaceKind::Euclidean:
      // The Euclidean circumcenter lies in the convex hull, so both variants agree.
      return euclidean_circumcenter(s, pts);
    case SpaceKind::MetricTree:
      // So does the tree center, which sits on a geodesic between two of the points.
      return tree_circumcenter(s, pts);
    default:
      break;
  }
  Circumcenter abs = generic_circumcenter(s, pts, tol);
  if (!relative) return abs;
  const double lower = std::max(half_diameter(s, pts), abs.radius - abs.gap);
  const auto cloud = hull_iterate(s, pts, hull_depth);
  Circumcenter best{cloud[0], kInf, 0.0};
  for (const Point& c : cloud) {
    const double r = max_distance(s, c, pts);
    if (r < best.radius) {
      best.center = c;
      best.radius = r;
    }
  }
  best.gap = best.radius - lower;
  return best;
}

std::vector<Point> farthest_point_thin(const Space& s, const std::vector<Point>& pts, std::size_t cap) {
  if (pts.size() <= cap) return pts;
  if (cap == 0) return {};
  std::vector<Point> out{pts[0]};
  std::vector<double> gap(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) gap[i] = s.distance(pts[0], pts[i]);
  while (out.size() < cap) {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (gap[i] > gap[pick]) pick = i;
    }
    out.push_back(pts[pick]);
    for (std::size_t i = 0; i < pts.size(); ++i) gap[i] = std::min(gap[i], s.distance(pts[pick], pts[i]));
  }
  return out;
}

std::vector<Point> hull_iterate(const Space& s, const std::vector<Point>& Y0, int n, std::size_t cap) {
  if (n < 0) throw DomainError("hull_iterate needs n >= 0");
  for (const Point& p : Y0) s.validate(p);
  if (n == 0) return Y0;
  std::vector<Point> cur = dedupe(Y0);
  for (int k = 1; k <= n; ++k) {
    std::vector<Point> next = cur;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      for (std::size_t j = i + 1; j < cur.size(); ++j) next.push_back(s.midpoint(cur[i], cur[j]));
    }
    next = dedupe(next);
    if (next.size() > cap) next = farthest_point_thin(s, next, cap);
    cur = std::move(next);
  }
  return cur;
}

GrowthBound linear_growth_bound(const Space& s, const ConvexFunction& f, const Point& x0, double sample_radius,
                                int budget, std::uint64_t seed) {
  s.validate(x0);
  if (!(sample_radius > 0.0) || budget < 1) throw DomainError("linear_growth_bound needs a positive radius and budget");
  Rng rng(seed);
  std::vector<Point> pts{x0};
  for (int i = 0; i < budget; ++i) pts.push_back(s.sample(x0, sample_radius, rng));
  std::vector<double> d(pts.size()), v(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d[i] = s.distance(x0, pts[i]);
    v[i] = f(pts[i]);
  }
  auto worst = [&](double b) {
    std::size_t arg = 0;
    double slack = kInf;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double sl = v[i] - (b * d[i] - 1.0 / b);
      if (sl < slack) {
        slack = sl;
        arg = i;
      }
    }
    return std::pair{slack, arg};
  };
  constexpr double kLo = 1e-6, kHi = 1e3;
  if (worst(kLo).first < 0.0) throw DomainError("linear_growth_bound: no positive b passes");
  if (worst(kHi).first >= 0.0) return {kHi, pts[worst(kHi).second]};
  double lo = std::log(kLo), hi = std::log(kHi);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (worst(std::exp(mid)).first >= 0.0) lo = mid;
    else hi = mid;
  }
  const double b = std::exp(lo);
  return {b, pts[worst(b).second]};
}

double displacement(const FiniteGroupAction& action, const Point& x) {
  action.space().validate(x);
  double d = 0.0;
  for (const Isometry& g : action.generators()) d = std::max(d, action.space().distance(g.apply(x), x));
  return d;
}

bool parallel_check(const Space& s, const Point& a, const Point& b, const Point& x, const Point& y, double tol) {
  const double d1 = s.distance(a, x);
  const double d2 = s.distance(b, y);
  const double d3 = s.distance(s.midpoint(a, b), s.midpoint(x, y));
  const double scale = std::max({1.0, d1, d2, d3});
  return std::abs(d1 - d2) <= tol * scale && std::abs(d1 - d3) <= tol * scale;
}

CliffordReport clifford_check(const Space& s, const Isometry& T, int samples, double tol, std::uint64_t seed,
                              double radius) {
  T.check_for(s);
  if (samples < 2) throw DomainError("clifford_check needs at least two samples");
  Rng rng(seed);
  const Point o = s.origin();
  std::vector<Point> pts;
  for (int i = 0; i < samples; ++i) pts.push_back(s.sample(o, radius, rng));
  double lo = kInf, hi = 0.0;
  for (const Point& p : pts) {
    const double d = s.distance(p, T.apply(p));
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  CliffordReport rep;
  rep.displacement = hi;
  rep.spread = hi - lo;
  const double scale = std::max(1.0, hi);
  rep.is_clifford = rep.spread <= tol * scale;
  if (!rep.is_clifford) return rep;
  // Halfway map H(x) = m(x, Tx): constant displacement c/2, isometric, and H(H(x)) = T(x).
  auto half = [&](const Point& p) { return s.midpoint(p, T.apply(p)); };
  bool ok = true;
  double hd = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point h = half(pts[i]);
    const double di = s.distance(pts[i], h);
    hd = std::max(hd, di);
    ok = ok && std::abs(di - 0.5 * hi) <= tol * scale;
    ok = ok && s.distance(half(h), T.apply(pts[i])) <= tol * scale;
    const Point& q = pts[(i + 1) % pts.size()];
    ok = ok && std::abs(s.distance(h, half(q)) - s.distance(pts[i], q)) <= tol * std::max(1.0, s.distance(pts[i], q));
  }
  rep.halfway_ok = ok;
  rep.halfway_displacement = hd;
  return rep;
}

AffineSpan affine_span(const Space& s, const std::vector<Point>& pts, double tol) {
  if (s.kind() != SpaceKind::Euclidean) throw DomainError("affine_span is only available in Euclidean spaces");
  if (pts.empty()) throw DomainError("affine_span of an empty set");
  for (const Point& p : pts) s.validate(p);
  AffineSpan out;
  out.base = to_vec(pts[0]);
  std::vector<std::vector<double>> dirs;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    std::vector<double> v = to_vec(pts[i]);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= out.base[k];
    dirs.push_back(std::move(v));
  }
  out.basis = orthonormalize(dirs, tol);
  return out;
}

}  // namespace bnpc
