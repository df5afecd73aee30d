#include "bnpc/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

namespace bnpc {

namespace {

constexpr int kMaxTreeVertices = 4096;

struct Anchor {
  int vertex;
  double dist;
};

std::vector<Anchor> anchors(const TreeTopology& t, const TreeLocation& loc) {
  if (loc.vertex >= 0) return {{loc.vertex, 0.0}};
  const TreeEdge& e = t.edges()[loc.edge];
  return {{e.u, loc.offset}, {e.v, e.length - loc.offset}};
}

double lp_norm(std::span<const double> v, double p) {
  if (p == 2.0) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  if (m == 0.0) return 0.0;
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x) / m, p);
  return m * std::pow(s, 1.0 / p);
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite coordinate");
  }
}

}  // namespace

std::string to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::Euclidean: return "euclidean";
    case SpaceKind::LpVector: return "lp";
    case SpaceKind::MetricTree: return "tree";
    case SpaceKind::Product: return "product";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// TreeTopology

TreeTopology::TreeTopology(int num_vertices, std::vector<TreeEdge> edges)
    : n_(num_vertices), edges_(std::move(edges)) {
  if (n_ < 1) throw DomainError("tree needs at least one vertex");
  if (n_ > kMaxTreeVertices) throw DomainError("tree too large for dense routing tables");
  if (static_cast<int>(edges_.size()) != n_ - 1) {
    throw DomainError("tree with " + std::to_string(n_) + " vertices needs " + std::to_string(n_ - 1) +
                      " edges, got " + std::to_string(edges_.size()));
  }
  adjacency_.assign(n_, {});
  for (const TreeEdge& e : edges_) {
    if (e.u < 0 || e.u >= n_ || e.v < 0 || e.v >= n_ || e.u == e.v) {
      throw DomainError("tree edge has invalid endpoints");
    }
    if (!(e.length > 0.0) || !std::isfinite(e.length)) {
      throw DomainError("tree edge lengths must be strictly positive and finite");
    }
    adjacency_[e.u].push_back(e.v);
    adjacency_[e.v].push_back(e.u);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
  incident_.assign(n_, {});
  for (int v = 0; v < n_; ++v) incident_[v].assign(adjacency_[v].size(), -1);
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const TreeEdge& e = edges_[i];
    for (auto [a, b] : {std::pair{e.u, e.v}, std::pair{e.v, e.u}}) {
      auto it = std::lower_bound(adjacency_[a].begin(), adjacency_[a].end(), b);
      auto& slot = incident_[a][static_cast<std::size_t>(it - adjacency_[a].begin())];
      if (slot != -1) throw DomainError("tree has parallel edges");
      slot = static_cast<int>(i);
    }
  }

  const auto n = static_cast<std::size_t>(n_);
  dist_.assign(n * n, std::numeric_limits<double>::infinity());
  next_.assign(n * n, -1);
  // BFS from every root; the parent of v in the tree rooted at r is the next hop from v to r.
  for (int root = 0; root < n_; ++root) {
    dist_[index(root, root)] = 0.0;
    next_[index(root, root)] = root;
    std::deque<int> queue{root};
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      for (int w : adjacency_[v]) {
        if (next_[index(w, root)] != -1) continue;
        next_[index(w, root)] = v;
        dist_[index(w, root)] = dist_[index(v, root)] + edges_[edge_between(v, w)].length;
        queue.push_back(w);
      }
    }
  }
  for (int a = 0; a < n_; ++a) {
    for (int b = 0; b < n_; ++b) {
      if (next_[index(a, b)] == -1) throw DomainError("tree is not connected");
    }
  }
}

int TreeTopology::edge_between(int a, int b) const {
  if (a < 0 || a >= n_) return -1;
  const auto& adj = adjacency_[a];
  auto it = std::lower_bound(adj.begin(), adj.end(), b);
  if (it == adj.end() || *it != b) return -1;
  return incident_[a][static_cast<std::size_t>(it - adj.begin())];
}

bool TreeTopology::operator==(const TreeTopology& other) const {
  if (n_ != other.n_ || edges_.size() != other.edges_.size()) return false;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const TreeEdge& a = edges_[i];
    const TreeEdge& b = other.edges_[i];
    if (a.u != b.u || a.v != b.v || a.length != b.length) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Point

Point Point::vector(std::vector<double> coords) {
  Point x;
  x.kind_ = PointKind::Vector;
  x.coords_ = std::move(coords);
  return x;
}

Point Point::tree_vertex(int v) {
  Point x;
  x.kind_ = PointKind::Tree;
  x.tree_ = {v, -1, 0.0};
  return x;
}

Point Point::product(std::vector<Point> factors) {
  Point x;
  x.kind_ = PointKind::Product;
  x.factors_ = std::move(factors);
  return x;
}

std::string Point::to_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case PointKind::Vector:
      os << "(";
      for (std::size_t i = 0; i < coords_.size(); ++i) os << (i ? ", " : "") << coords_[i];
      os << ")";
      break;
    case PointKind::Tree:
      if (tree_.vertex >= 0) {
        os << "v" << tree_.vertex;
      } else {
        os << "e" << tree_.edge << "@" << tree_.offset;
      }
      break;
    case PointKind::Product:
      os << "[";
      for (std::size_t i = 0; i < factors_.size(); ++i) os << (i ? ", " : "") << factors_[i].to_string();
      os << "]";
      break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Space

Space Space::euclidean(int dim) {
  if (dim < 1) throw DomainError("euclidean dimension must be >= 1");
  Space s;
  s.kind_ = SpaceKind::Euclidean;
  s.dim_ = dim;
  return s;
}

Space Space::lp(int dim, double p) {
  if (dim < 1) throw DomainError("lp dimension must be >= 1");
  if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("lp exponent must lie in (1, inf)");
  Space s;
  s.kind_ = SpaceKind::LpVector;
  s.dim_ = dim;
  s.p_ = p;
  return s;
}

Space Space::tree(int num_vertices, std::vector<TreeEdge> edges) {
  Space s;
  s.kind_ = SpaceKind::MetricTree;
  s.tree_ = std::make_shared<const TreeTopology>(num_vertices, std::move(edges));
  return s;
}

Space Space::product(std::vector<Space> factors, double q) {
  if (factors.size() < 2) throw DomainError("product space needs at least two factors");
  if (!(q > 1.0) || !std::isfinite(q)) throw DomainError("product mixing exponent must lie in (1, inf)");
  Space s;
  s.kind_ = SpaceKind::Product;
  s.q_ = q;
  s.factors_ = std::move(factors);
  return s;
}

const TreeTopology& Space::topology() const {
  if (!tree_) throw DomainError("space is not a metric tree");
  return *tree_;
}

bool Space::operator==(const Space& other) const {
  if (kind_ != other.kind_) return false;
  switch (kind_) {
    case SpaceKind::Euclidean: return dim_ == other.dim_;
    case SpaceKind::LpVector: return dim_ == other.dim_ && p_ == other.p_;
    case SpaceKind::MetricTree: return tree_ == other.tree_ || *tree_ == *other.tree_;
    case SpaceKind::Product: return q_ == other.q_ && factors_ == other.factors_;
  }
  return false;
}

std::string Space::to_string() const {
  std::ostringstream os;
  switch (kind_) {
    case SpaceKind::Euclidean: os << "Euclidean(" << dim_ << ")"; break;
    case SpaceKind::LpVector: os << "Lp(" << dim_ << ", p=" << p_ << ")"; break;
    case SpaceKind::MetricTree:
      os << "Tree(" << tree_->num_vertices() << " vertices)";
      break;
    case SpaceKind::Product:
      os << "Product(q=" << q_;
      for (const Space& f : factors_) os << ", " << f.to_string();
      os << ")";
      break;
  }
  return os.str();
}

void Space::validate(const Point& x) const {
  switch (kind_) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector:
      if (x.kind() != PointKind::Vector) throw DomainError("expected a vector point for " + to_string());
      if (static_cast<int>(x.dim()) != dim_) {
        throw DomainError("point has dimension " + std::to_string(x.dim()) + ", space " + to_string());
      }
      require_finite(x.coords(), "point");
      return;
    case SpaceKind::MetricTree: {
      if (x.kind() != PointKind::Tree) throw DomainError("expected a tree point");
      const TreeLocation& loc = x.tree();
      if (loc.vertex >= 0) {
        if (loc.vertex >= tree_->num_vertices() || loc.edge != -1) throw DomainError("tree vertex out of range");
        return;
      }
      if (loc.edge < 0 || loc.edge >= static_cast<int>(tree_->edges().size())) {
        throw DomainError("tree edge out of range");
      }
      const double len = tree_->edges()[loc.edge].length;
      if (!(loc.offset > 0.0 && loc.offset < len)) {
        throw DomainError("tree offset must lie strictly inside its edge (vertices are canonical)");
      }
      return;
    }
    case SpaceKind::Product:
      if (x.kind() != PointKind::Product || x.factors().size() != factors_.size()) {
        throw DomainError("product point arity does not match " + to_string());
      }
      for (std::size_t i = 0; i < factors_.size(); ++i) factors_[i].validate(x.factors()[i]);
      return;
  }
}

bool Space::contains(const Point& x) const {
  try {
    validate(x);
    return true;
  } catch (const DomainError&) {
    return false;
  }
}

double Space::vector_norm(std::span<const double> a, std::span<const double> b) const {
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  return lp_norm(diff, p_);
}

Point Space::tree_point(int edge, double offset) const {
  const TreeTopology& t = topology();
  if (edge < 0 || edge >= static_cast<int>(t.edges().size())) throw DomainError("tree edge out of range");
  const TreeEdge& e = t.edges()[edge];
  if (offset <= 0.0) return Point::tree_vertex(e.u);
  if (offset >= e.length) return Point::tree_vertex(e.v);
  Point x;
  x.kind_ = PointKind::Tree;
  x.tree_ = {-1, edge, offset};
  return x;
}

double Space::tree_distance(const TreeLocation& a, const TreeLocation& b) const {
  if (a.vertex < 0 && b.vertex < 0 && a.edge == b.edge) return std::abs(a.offset - b.offset);
  double best = std::numeric_limits<double>::infinity();
  for (const Anchor& x : anchors(*tree_, a)) {
    for (const Anchor& y : anchors(*tree_, b)) {
      best = std::min(best, x.dist + tree_->vertex_distance(x.vertex, y.vertex) + y.dist);
    }
  }
  return best;
}

double Space::distance(const Point& x, const Point& y) const {
  validate(x);
  validate(y);
  switch (kind_) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector:
      return vector_norm(x.coords(), y.coords());
    case SpaceKind::MetricTree:
      return tree_distance(x.tree(), y.tree());
    case SpaceKind::Product: {
      std::vector<double> parts(factors_.size());
      for (std::size_t i = 0; i < factors_.size(); ++i) {
        parts[i] = factors_[i].distance(x.factors()[i], y.factors()[i]);
      }
      return lp_norm(parts, q_);
    }
  }
  return 0.0;
}

Point Space::tree_geodesic(const TreeLocation& a, const TreeLocation& b, double t) const {
  const TreeTopology& tp = *tree_;
  if (a.vertex < 0 && b.vertex < 0 && a.edge == b.edge) {
    return tree_point(a.edge, a.offset + t * (b.offset - a.offset));
  }
  // Pick the anchor pair realising the distance, then walk the legs.
  Anchor best_a{}, best_b{};
  double total = std::numeric_limits<double>::infinity();
  for (const Anchor& x : anchors(tp, a)) {
    for (const Anchor& y : anchors(tp, b)) {
      double d = x.dist + tp.vertex_distance(x.vertex, y.vertex) + y.dist;
      if (d < total) {
        total = d;
        best_a = x;
        best_b = y;
      }
    }
  }
  double s = t * total;
  if (a.vertex < 0) {
    if (s <= best_a.dist) {
      const TreeEdge& e = tp.edges()[a.edge];
      return tree_point(a.edge, best_a.vertex == e.u ? a.offset - s : a.offset + s);
    }
    s -= best_a.dist;
  }
  int cur = best_a.vertex;
  while (cur != best_b.vertex) {
    int nxt = tp.next_hop(cur, best_b.vertex);
    int eid = tp.edge_between(cur, nxt);
    const TreeEdge& e = tp.edges()[eid];
    if (s <= e.length) return tree_point(eid, e.u == cur ? s : e.length - s);
    s -= e.length;
    cur = nxt;
  }
  if (b.vertex >= 0) return Point::tree_vertex(b.vertex);
  const TreeEdge& e = tp.edges()[b.edge];
  s = std::min(s, best_b.dist);
  return tree_point(b.edge, best_b.vertex == e.u ? s : e.length - s);
}

Point Space::geodesic_point(const Point& x, const Point& y, double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("geodesic parameter must lie in [0, 1]");
  validate(x);
  validate(y);
  if (t == 0.0) return x;
  if (t == 1.0) return y;
  switch (kind_) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector: {
      std::vector<double> z(x.dim());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x.coords()[i] + t * (y.coords()[i] - x.coords()[i]);
      return Point::vector(std::move(z));
    }
    case SpaceKind::MetricTree:
      return tree_geodesic(x.tree(), y.tree(), t);
    case SpaceKind::Product: {
      std::vector<Point> parts;
      parts.reserve(factors_.size());
      for (std::size_t i = 0; i < factors_.size(); ++i) {
        parts.push_back(factors_[i].geodesic_point(x.factors()[i], y.factors()[i], t));
      }
      return Point::product(std::move(parts));
    }
  }
  return x;
}

Point Space::tree_extend(const Point& x, const Point& y, double length) const {
  const TreeTopology& tp = *tree_;
  double remaining = length - tree_distance(x.tree(), y.tree());
  if (remaining <= 0.0) return y;
  // Direction leaving y away from x: the vertex we head towards and the previous vertex.
  int target = -1;
  int prev = -1;
  const TreeLocation& ly = y.tree();
  if (ly.vertex < 0) {
    const TreeEdge& e = tp.edges()[ly.edge];
    // Continue towards the endpoint w with y on [x, w], i.e. maximal d(x, w) - d(y, w).
    double du = tree_distance(x.tree(), TreeLocation{e.u, -1, 0.0}) - ly.offset;
    double dv = tree_distance(x.tree(), TreeLocation{e.v, -1, 0.0}) - (e.length - ly.offset);
    target = du > dv ? e.u : e.v;
    double to_target = target == e.u ? ly.offset : e.length - ly.offset;
    if (remaining < to_target) {
      return tree_point(ly.edge, target == e.u ? ly.offset - remaining : ly.offset + remaining);
    }
    remaining -= to_target;
    prev = target == e.u ? e.v : e.u;
  } else {
    target = ly.vertex;
    // Previous vertex: the neighbour of y on the path back to x.
    const TreeLocation& lx = x.tree();
    if (lx.vertex >= 0) {
      prev = tp.next_hop(target, lx.vertex);
    } else {
      const TreeEdge& ex = tp.edges()[lx.edge];
      if (ex.u == target) prev = ex.v;
      else if (ex.v == target) prev = ex.u;
      else prev = tp.next_hop(target, ex.u);
    }
  }
  int cur = target;
  while (remaining > 0.0) {
    int nxt = -1;
    for (int w : tp.neighbours(cur)) {
      if (w != prev) {
        nxt = w;
        break;
      }
    }
    if (nxt < 0) return Point::tree_vertex(cur);
    int eid = tp.edge_between(cur, nxt);
    const TreeEdge& e = tp.edges()[eid];
    if (remaining < e.length) return tree_point(eid, e.u == cur ? remaining : e.length - remaining);
    remaining -= e.length;
    prev = cur;
    cur = nxt;
  }
  return Point::tree_vertex(cur);
}

Point Space::extend(const Point& x, const Point& y, double length) const {
  validate(x);
  validate(y);
  const double d = distance(x, y);
  if (d == 0.0) return y;
  switch (kind_) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector: {
      const double ratio = length / d;
      std::vector<double> z(x.dim());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x.coords()[i] + ratio * (y.coords()[i] - x.coords()[i]);
      return Point::vector(std::move(z));
    }
    case SpaceKind::MetricTree:
      return tree_extend(x, y, length);
    case SpaceKind::Product: {
      // Every factor must be stretched by the same ratio; trees may cap it at a leaf.
      double ratio = length / d;
      std::vector<double> di(factors_.size());
      for (std::size_t i = 0; i < factors_.size(); ++i) {
        di[i] = factors_[i].distance(x.factors()[i], y.factors()[i]);
        if (di[i] == 0.0) continue;
        Point zi = factors_[i].extend(x.factors()[i], y.factors()[i], di[i] * ratio);
        ratio = std::min(ratio, factors_[i].distance(x.factors()[i], zi) / di[i]);
      }
      std::vector<Point> parts;
      for (std::size_t i = 0; i < factors_.size(); ++i) {
        parts.push_back(di[i] == 0.0 ? y.factors()[i]
                                     : factors_[i].extend(x.factors()[i], y.factors()[i], di[i] * ratio));
      }
      return Point::product(std::move(parts));
    }
  }
  return y;
}

Point Space::origin() const {
  switch (kind_) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector:
      return Point::vector(std::vector<double>(dim_, 0.0));
    case SpaceKind::MetricTree:
      return Point::tree_vertex(0);
    case SpaceKind::Product: {
      std::vector<Point> parts;
      for (const Space& f : factors_) parts.push_back(f.origin());
      return Point::product(std::move(parts));
    }
  }
  return {};
}

Point Space::raw_sample(const Point& center, double radius, Rng& rng) const {
  switch (kind_) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector: {
      std::normal_distribution<double> normal;
      std::vector<double> dir(dim_);
      for (double& v : dir) v = normal(rng);
      double n = lp_norm(dir, p_);
      if (n == 0.0) {
        dir[0] = 1.0;
        n = 1.0;
      }
      std::vector<double> z(dim_);
      for (int i = 0; i < dim_; ++i) z[i] = center.coords()[i] + radius * dir[i] / n;
      return Point::vector(std::move(z));
    }
    case SpaceKind::MetricTree: {
      // Random vertex or edge point, then walked out to `radius` along the geodesic when short.
      std::uniform_int_distribution<int> pick_edge(0, static_cast<int>(tree_->edges().size()) - 1);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      if (tree_->edges().empty()) return Point::tree_vertex(0);
      int e = pick_edge(rng);
      Point z = tree_point(e, unit(rng) * tree_->edges()[e].length);
      double d = tree_distance(center.tree(), z.tree());
      if (d > 0.0 && d < radius) z = tree_extend(center, z, radius);
      return z;
    }
    case SpaceKind::Product: {
      std::vector<Point> parts;
      for (std::size_t i = 0; i < factors_.size(); ++i) {
        parts.push_back(factors_[i].raw_sample(center.factors()[i], radius, rng));
      }
      return Point::product(std::move(parts));
    }
  }
  return center;
}

Point Space::sample(const Point& center, double radius, Rng& rng) const {
  validate(center);
  if (radius <= 0.0) return center;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool on_sphere = unit(rng) < 0.5;
  const double exponent = kind_ == SpaceKind::MetricTree ? 1.0 : 1.0 / std::max(1, dim_);
  const double rho = on_sphere ? radius : radius * std::pow(unit(rng), exponent);
  Point z = raw_sample(center, radius, rng);
  const double d = distance(center, z);
  if (d == 0.0) return center;
  if (d > rho) return geodesic_point(center, z, rho / d);
  return z;
}

// ---------------------------------------------------------------------------
// Isometry

namespace {

void check_orthogonal(int dim, const std::vector<double>& q) {
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      double dot = 0.0;
      for (int k = 0; k < dim; ++k) dot += q[k * dim + i] * q[k * dim + j];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-9) throw DomainError("matrix is not orthogonal");
    }
  }
}

}  // namespace

Isometry Isometry::identity(const Space& space) {
  switch (space.kind()) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector:
      return translation(std::vector<double>(space.dim(), 0.0));
    case SpaceKind::MetricTree: {
      std::vector<int> perm(space.topology().num_vertices());
      std::iota(perm.begin(), perm.end(), 0);
      return tree_automorphism(space, std::move(perm));
    }
    case SpaceKind::Product: {
      std::vector<Isometry> parts;
      for (const Space& f : space.factors()) parts.push_back(identity(f));
      return product(std::move(parts));
    }
  }
  return {};
}

bool Isometry::is_identity() const {
  switch (kind_) {
    case Kind::Affine:
      for (int i = 0; i < dim_; ++i) {
        for (int j = 0; j < dim_; ++j) {
          if (matrix_[i * dim_ + j] != (i == j ? 1.0 : 0.0)) return false;
        }
      }
      return std::all_of(translation_.begin(), translation_.end(), [](double v) { return v == 0.0; });
    case Kind::SignedPermutation:
      for (int i = 0; i < dim_; ++i) {
        if (perm_[i] != i || signs_[i] != 1 || translation_[i] != 0.0) return false;
      }
      return true;
    case Kind::TreeAutomorphism:
      for (int i = 0; i < dim_; ++i) {
        if (perm_[i] != i) return false;
      }
      return true;
    case Kind::Product:
      return std::all_of(factors_.begin(), factors_.end(), [](const Isometry& f) { return f.is_identity(); });
  }
  return false;
}

Isometry Isometry::translation(std::vector<double> by) {
  const int n = static_cast<int>(by.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  return signed_permutation(std::move(perm), std::vector<int>(n, 1), std::move(by));
}

Isometry Isometry::point_reflection(int dim) {
  std::vector<int> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  return signed_permutation(std::move(perm), std::vector<int>(dim, -1), std::vector<double>(dim, 0.0));
}

Isometry Isometry::orthogonal(int dim, std::vector<double> matrix, std::vector<double> translation) {
  if (dim < 1 || matrix.size() != static_cast<std::size_t>(dim * dim) ||
      translation.size() != static_cast<std::size_t>(dim)) {
    throw DomainError("orthogonal isometry: inconsistent sizes");
  }
  require_finite(matrix, "orthogonal matrix");
  require_finite(translation, "translation");
  check_orthogonal(dim, matrix);
  Isometry t;
  t.kind_ = Kind::Affine;
  t.dim_ = dim;
  t.matrix_ = std::move(matrix);
  t.translation_ = std::move(translation);
  return t;
}

Isometry Isometry::rotation2d(double angle, std::vector<double> translation) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return orthogonal(2, {c, -s, s, c}, std::move(translation));
}

Isometry Isometry::hyperplane_reflection(std::vector<double> normal, double offset) {
  const int n = static_cast<int>(normal.size());
  double len = lp_norm(normal, 2.0);
  if (n < 1 || len == 0.0) throw DomainError("reflection normal must be nonzero");
  for (double& v : normal) v /= len;
  offset /= len;
  std::vector<double> q(n * n);
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) q[i * n + j] = (i == j ? 1.0 : 0.0) - 2.0 * normal[i] * normal[j];
    t[i] = 2.0 * offset * normal[i];
  }
  return orthogonal(n, std::move(q), std::move(t));
}

Isometry Isometry::signed_permutation(std::vector<int> perm, std::vector<int> signs,
                                      std::vector<double> translation) {
  const std::size_t n = perm.size();
  if (n == 0 || signs.size() != n || translation.size() != n) {
    throw DomainError("signed permutation: inconsistent sizes");
  }
  std::vector<int> seen(n, 0);
  for (int v : perm) {
    if (v < 0 || static_cast<std::size_t>(v) >= n || seen[v]++) throw DomainError("not a permutation");
  }
  for (int s : signs) {
    if (s != 1 && s != -1) throw DomainError("signs must be +1 or -1");
  }
  require_finite(translation, "translation");
  Isometry t;
  t.kind_ = Kind::SignedPermutation;
  t.dim_ = static_cast<int>(n);
  t.perm_ = std::move(perm);
  t.signs_ = std::move(signs);
  t.translation_ = std::move(translation);
  return t;
}

Isometry Isometry::tree_automorphism(const Space& tree, std::vector<int> vertex_perm) {
  const TreeTopology& tp = tree.topology();
  const int n = tp.num_vertices();
  if (static_cast<int>(vertex_perm.size()) != n) throw DomainError("tree automorphism: wrong vertex count");
  std::vector<int> seen(n, 0);
  for (int v : vertex_perm) {
    if (v < 0 || v >= n || seen[v]++) throw DomainError("tree automorphism is not a vertex bijection");
  }
  for (const TreeEdge& e : tp.edges()) {
    int image = tp.edge_between(vertex_perm[e.u], vertex_perm[e.v]);
    if (image < 0) throw DomainError("tree automorphism does not map edges to edges");
    if (std::abs(tp.edges()[image].length - e.length) > 1e-12 * std::max(1.0, e.length)) {
      throw DomainError("tree automorphism does not preserve edge lengths");
    }
  }
  Isometry t;
  t.kind_ = Kind::TreeAutomorphism;
  t.dim_ = n;
  t.perm_ = std::move(vertex_perm);
  t.tree_ = tree.topology_ptr();
  return t;
}

Isometry Isometry::product(std::vector<Isometry> factors) {
  if (factors.size() < 2) throw DomainError("product isometry needs at least two factors");
  Isometry t;
  t.kind_ = Kind::Product;
  t.dim_ = static_cast<int>(factors.size());
  t.factors_ = std::move(factors);
  return t;
}

Isometry Isometry::as_affine() const {
  if (kind_ == Kind::Affine) return *this;
  if (kind_ != Kind::SignedPermutation) throw DomainError("isometry kinds cannot be composed");
  Isometry t;
  t.kind_ = Kind::Affine;
  t.dim_ = dim_;
  t.matrix_.assign(dim_ * dim_, 0.0);
  for (int i = 0; i < dim_; ++i) t.matrix_[i * dim_ + perm_[i]] = signs_[i];
  t.translation_ = translation_;
  return t;
}

Point Isometry::apply(const Point& x) const {
  switch (kind_) {
    case Kind::Affine: {
      if (x.kind() != PointKind::Vector || static_cast<int>(x.dim()) != dim_) {
        throw DomainError("isometry and point live in different spaces");
      }
      std::vector<double> y(dim_);
      for (int i = 0; i < dim_; ++i) {
        double acc = translation_[i];
        for (int j = 0; j < dim_; ++j) acc += matrix_[i * dim_ + j] * x.coords()[j];
        y[i] = acc;
      }
      return Point::vector(std::move(y));
    }
    case Kind::SignedPermutation: {
      if (x.kind() != PointKind::Vector || static_cast<int>(x.dim()) != dim_) {
        throw DomainError("isometry and point live in different spaces");
      }
      std::vector<double> y(dim_);
      for (int i = 0; i < dim_; ++i) y[i] = signs_[i] * x.coords()[perm_[i]] + translation_[i];
      return Point::vector(std::move(y));
    }
    case Kind::TreeAutomorphism: {
      if (x.kind() != PointKind::Tree) throw DomainError("tree automorphism applied to a non-tree point");
      const TreeLocation& loc = x.tree();
      if (loc.vertex >= 0) {
        if (loc.vertex >= dim_) throw DomainError("tree vertex out of range");
        return Point::tree_vertex(perm_[loc.vertex]);
      }
      if (loc.edge < 0 || loc.edge >= static_cast<int>(tree_->edges().size())) {
        throw DomainError("tree edge out of range");
      }
      const TreeEdge& e = tree_->edges()[loc.edge];
      const int image = tree_->edge_between(perm_[e.u], perm_[e.v]);
      const TreeEdge& f = tree_->edges()[image];
      Point y;
      y.kind_ = PointKind::Tree;
      y.tree_ = {-1, image, f.u == perm_[e.u] ? loc.offset : f.length - loc.offset};
      return y;
    }
    case Kind::Product: {
      if (x.kind() != PointKind::Product || x.factors().size() != factors_.size()) {
        throw DomainError("product isometry arity does not match the point");
      }
      std::vector<Point> parts;
      for (std::size_t i = 0; i < factors_.size(); ++i) parts.push_back(factors_[i].apply(x.factors()[i]));
      return Point::product(std::move(parts));
    }
  }
  return x;
}

Isometry Isometry::inverse() const {
  switch (kind_) {
    case Kind::Affine: {
      Isometry t = *this;
      for (int i = 0; i < dim_; ++i) {
        for (int j = 0; j < dim_; ++j) t.matrix_[i * dim_ + j] = matrix_[j * dim_ + i];
      }
      for (int i = 0; i < dim_; ++i) {
        double acc = 0.0;
        for (int j = 0; j < dim_; ++j) acc += t.matrix_[i * dim_ + j] * translation_[j];
        t.translation_[i] = -acc;
      }
      return t;
    }
    case Kind::SignedPermutation: {
      Isometry t = *this;
      for (int i = 0; i < dim_; ++i) {
        t.perm_[perm_[i]] = i;
        t.signs_[perm_[i]] = signs_[i];
        t.translation_[perm_[i]] = -signs_[i] * translation_[i];
      }
      return t;
    }
    case Kind::TreeAutomorphism: {
      Isometry t = *this;
      for (int i = 0; i < dim_; ++i) t.perm_[perm_[i]] = i;
      return t;
    }
    case Kind::Product: {
      Isometry t = *this;
      for (auto& f : t.factors_) f = f.inverse();
      return t;
    }
  }
  return *this;
}

Isometry compose(const Isometry& outer, const Isometry& inner) {
  using Kind = Isometry::Kind;
  const bool outer_vec = outer.kind_ == Kind::Affine || outer.kind_ == Kind::SignedPermutation;
  const bool inner_vec = inner.kind_ == Kind::Affine || inner.kind_ == Kind::SignedPermutation;
  if (outer_vec && inner_vec) {
    if (outer.dim_ != inner.dim_) throw DomainError("cannot compose isometries of different dimensions");
    const int n = outer.dim_;
    if (outer.kind_ == Kind::SignedPermutation && inner.kind_ == Kind::SignedPermutation) {
      std::vector<int> perm(n), signs(n);
      std::vector<double> t(n);
      for (int i = 0; i < n; ++i) {
        const int j = outer.perm_[i];
        perm[i] = inner.perm_[j];
        signs[i] = outer.signs_[i] * inner.signs_[j];
        t[i] = outer.signs_[i] * inner.translation_[j] + outer.translation_[i];
      }
      return Isometry::signed_permutation(std::move(perm), std::move(signs), std::move(t));
    }
    const Isometry a = outer.as_affine();
    const Isometry b = inner.as_affine();
    Isometry r;
    r.kind_ = Kind::Affine;
    r.dim_ = n;
    r.matrix_.assign(n * n, 0.0);
    r.translation_ = a.translation_;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        const double aik = a.matrix_[i * n + k];
        for (int j = 0; j < n; ++j) r.matrix_[i * n + j] += aik * b.matrix_[k * n + j];
        r.translation_[i] += aik * b.translation_[k];
      }
    }
    return r;
  }
  if (outer.kind_ == Kind::TreeAutomorphism && inner.kind_ == Kind::TreeAutomorphism) {
    if (!(outer.tree_ == inner.tree_ || *outer.tree_ == *inner.tree_)) {
      throw DomainError("cannot compose automorphisms of different trees");
    }
    Isometry r = outer;
    for (int v = 0; v < outer.dim_; ++v) r.perm_[v] = outer.perm_[inner.perm_[v]];
    return r;
  }
  if (outer.kind_ == Kind::Product && inner.kind_ == Kind::Product) {
    if (outer.factors_.size() != inner.factors_.size()) throw DomainError("product isometry arity mismatch");
    std::vector<Isometry> parts;
    for (std::size_t i = 0; i < outer.factors_.size(); ++i) {
      parts.push_back(compose(outer.factors_[i], inner.factors_[i]));
    }
    return Isometry::product(std::move(parts));
  }
  throw DomainError("cannot compose isometries of different space kinds");
}

void Isometry::check_for(const Space& space) const {
  switch (space.kind()) {
    case SpaceKind::Euclidean:
      if ((kind_ == Kind::Affine || kind_ == Kind::SignedPermutation) && dim_ == space.dim()) return;
      break;
    case SpaceKind::LpVector:
      // General orthogonal maps do not preserve lp distances for p != 2.
      if (kind_ == Kind::SignedPermutation && dim_ == space.dim()) return;
      break;
    case SpaceKind::MetricTree:
      if (kind_ == Kind::TreeAutomorphism && (tree_ == space.topology_ptr() || *tree_ == space.topology())) return;
      break;
    case SpaceKind::Product:
      if (kind_ == Kind::Product && factors_.size() == space.factors().size()) {
        for (std::size_t i = 0; i < factors_.size(); ++i) factors_[i].check_for(space.factors()[i]);
        return;
      }
      break;
  }
  throw DomainError("isometry " + to_string() + " does not act on " + space.to_string());
}

std::string Isometry::to_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case Kind::Affine: os << "affine(dim=" << dim_ << ")"; break;
    case Kind::SignedPermutation:
      os << "signed-perm(";
      for (int i = 0; i < dim_; ++i) {
        os << (i ? ", " : "") << (signs_[i] < 0 ? "-" : "+") << "x" << perm_[i] << "+" << translation_[i];
      }
      os << ")";
      break;
    case Kind::TreeAutomorphism: os << "tree-automorphism(" << dim_ << ")"; break;
    case Kind::Product:
      os << "product(";
      for (std::size_t i = 0; i < factors_.size(); ++i) os << (i ? ", " : "") << factors_[i].to_string();
      os << ")";
      break;
  }
  return os.str();
}

}  // namespace bnpc
