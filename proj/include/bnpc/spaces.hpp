#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bnpc/errors.hpp"

namespace bnpc {

using Rng = std::mt19937_64;

/// Default relative tolerance for isometry and geodesic checks.
inline constexpr double kDefaultTolerance = 1e-9;

enum class SpaceKind { Euclidean, LpVector, MetricTree, Product };
enum class PointKind { Vector, Tree, Product };

std::string to_string(SpaceKind kind);

struct TreeEdge {
  int u = 0;
  int v = 0;
  double length = 1.0;
};

/// Connected acyclic graph with positive edge lengths. Stores all-pairs vertex
/// distances and next-hop routing, so geodesics cost O(path length).
class TreeTopology {
 public:
  TreeTopology(int num_vertices, std::vector<TreeEdge> edges);

  [[nodiscard]] int num_vertices() const { return n_; }
  [[nodiscard]] const std::vector<TreeEdge>& edges() const { return edges_; }
  [[nodiscard]] double vertex_distance(int a, int b) const { return dist_[index(a, b)]; }
  /// Neighbour of `from` on the path towards `to`.
  [[nodiscard]] int next_hop(int from, int to) const { return next_[index(from, to)]; }
  /// Edge id joining adjacent vertices a and b, or -1.
  [[nodiscard]] int edge_between(int a, int b) const;
  [[nodiscard]] const std::vector<int>& neighbours(int v) const { return adjacency_[v]; }
  [[nodiscard]] int degree(int v) const { return static_cast<int>(adjacency_[v].size()); }

  bool operator==(const TreeTopology& other) const;

 private:
  [[nodiscard]] std::size_t index(int a, int b) const {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(b);
  }

  int n_;
  std::vector<TreeEdge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<std::vector<int>> incident_;
  std::vector<double> dist_;
  std::vector<int> next_;
};

/// Position in a metric tree. Vertex points have `vertex >= 0` and `edge == -1`;
/// interior points store the edge and the offset from the edge's `u` endpoint.
struct TreeLocation {
  int vertex = -1;
  int edge = -1;
  double offset = 0.0;

  bool operator==(const TreeLocation&) const = default;
};

/// A position in one of the supported spaces. Immutable value type.
class Point {
 public:
  Point() = default;

  static Point vector(std::vector<double> coords);
  static Point scalar(double x) { return vector({x}); }
  static Point tree_vertex(int v);
  static Point product(std::vector<Point> factors);

  [[nodiscard]] PointKind kind() const { return kind_; }
  [[nodiscard]] std::span<const double> coords() const { return coords_; }
  [[nodiscard]] double coord(std::size_t i) const { return coords_.at(i); }
  [[nodiscard]] std::size_t dim() const { return coords_.size(); }
  [[nodiscard]] const TreeLocation& tree() const { return tree_; }
  [[nodiscard]] const std::vector<Point>& factors() const { return factors_; }

  bool operator==(const Point&) const = default;

  [[nodiscard]] std::string to_string() const;

 private:
  friend class Space;
  friend class Isometry;

  PointKind kind_ = PointKind::Vector;
  std::vector<double> coords_;
  TreeLocation tree_;
  std::vector<Point> factors_;
};

/// A complete, uniquely geodesic, Busemann-convex metric space.
class Space {
 public:
  static Space euclidean(int dim);
  static Space lp(int dim, double p);
  static Space tree(int num_vertices, std::vector<TreeEdge> edges);
  static Space product(std::vector<Space> factors, double q = 2.0);

  [[nodiscard]] SpaceKind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return dim_; }
  /// Norm exponent for LpVector spaces, 2 for Euclidean.
  [[nodiscard]] double p() const { return p_; }
  [[nodiscard]] double q() const { return q_; }
  [[nodiscard]] const TreeTopology& topology() const;
  [[nodiscard]] const std::shared_ptr<const TreeTopology>& topology_ptr() const { return tree_; }
  [[nodiscard]] const std::vector<Space>& factors() const { return factors_; }

  /// Throws DomainError if x is not a point of this space.
  void validate(const Point& x) const;
  [[nodiscard]] bool contains(const Point& x) const;

  [[nodiscard]] double distance(const Point& x, const Point& y) const;
  /// Point at parameter t of the geodesic from x to y.
  [[nodiscard]] Point geodesic_point(const Point& x, const Point& y, double t) const;
  [[nodiscard]] Point midpoint(const Point& x, const Point& y) const { return geodesic_point(x, y, 0.5); }

  /// Point z with y on [x, z] and d(x, z) = length, as far as the space allows
  /// (trees stop at leaves; branch choice is the lowest-index vertex).
  [[nodiscard]] Point extend(const Point& x, const Point& y, double length) const;

  [[nodiscard]] Point origin() const;
  /// Random point within `radius` of `center`; about half the draws lie on the sphere.
  [[nodiscard]] Point sample(const Point& center, double radius, Rng& rng) const;

  /// Tree point on `edge` at `offset` from its u endpoint, canonicalized to a vertex at the ends.
  [[nodiscard]] Point tree_point(int edge, double offset) const;

  bool operator==(const Space& other) const;

  [[nodiscard]] std::string to_string() const;

 private:
  Space() = default;

  [[nodiscard]] double vector_norm(std::span<const double> a, std::span<const double> b) const;
  [[nodiscard]] double tree_distance(const TreeLocation& a, const TreeLocation& b) const;
  [[nodiscard]] Point tree_geodesic(const TreeLocation& a, const TreeLocation& b, double t) const;
  [[nodiscard]] Point tree_extend(const Point& x, const Point& y, double length) const;
  [[nodiscard]] Point raw_sample(const Point& center, double radius, Rng& rng) const;

  SpaceKind kind_ = SpaceKind::Euclidean;
  int dim_ = 1;
  double p_ = 2.0;
  double q_ = 2.0;
  std::shared_ptr<const TreeTopology> tree_;
  std::vector<Space> factors_;
};

/// Isometry of one of the supported spaces: affine orthogonal maps (Euclidean),
/// signed coordinate permutations plus translation (any vector space), tree
/// automorphisms, or products of factor isometries.
class Isometry {
 public:
  enum class Kind { Affine, SignedPermutation, TreeAutomorphism, Product };

  static Isometry identity(const Space& space);
  static Isometry translation(std::vector<double> by);
  /// Point reflection x -> -x through the origin.
  static Isometry point_reflection(int dim);
  /// x -> Q x + t, with Q given row-major; Q must be orthogonal.
  static Isometry orthogonal(int dim, std::vector<double> matrix, std::vector<double> translation);
  static Isometry rotation2d(double angle, std::vector<double> translation = {0.0, 0.0});
  /// Reflection across the hyperplane {x : <n, x> = offset}.
  static Isometry hyperplane_reflection(std::vector<double> normal, double offset = 0.0);
  /// y[i] = sign[i] * x[perm[i]] + translation[i].
  static Isometry signed_permutation(std::vector<int> perm, std::vector<int> signs,
                                     std::vector<double> translation);
  /// Vertex bijection of a tree; validated against edge lengths.
  static Isometry tree_automorphism(const Space& tree, std::vector<int> vertex_perm);
  static Isometry product(std::vector<Isometry> factors);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] const std::vector<double>& matrix() const { return matrix_; }
  [[nodiscard]] const std::vector<double>& translation_part() const { return translation_; }
  [[nodiscard]] const std::vector<int>& permutation() const { return perm_; }
  [[nodiscard]] const std::vector<int>& signs() const { return signs_; }
  [[nodiscard]] const std::vector<Isometry>& factors() const { return factors_; }

  [[nodiscard]] Point apply(const Point& x) const;
  [[nodiscard]] Isometry inverse() const;
  [[nodiscard]] bool is_identity() const;

  /// Throws DomainError unless this isometry acts on `space`.
  void check_for(const Space& space) const;

  [[nodiscard]] std::string to_string() const;

  /// outer ∘ inner
  friend Isometry compose(const Isometry& outer, const Isometry& inner);

 private:
  Isometry() = default;
  [[nodiscard]] Isometry as_affine() const;

  Kind kind_ = Kind::Affine;
  int dim_ = 0;
  std::vector<double> matrix_;
  std::vector<double> translation_;
  std::vector<int> perm_;
  std::vector<int> signs_;
  std::shared_ptr<const TreeTopology> tree_;
  std::vector<Isometry> factors_;
};

Isometry compose(const Isometry& outer, const Isometry& inner);

/// Free-function spellings of the space operations.
inline double distance(const Space& s, const Point& x, const Point& y) { return s.distance(x, y); }
inline Point geodesic_point(const Space& s, const Point& x, const Point& y, double t) {
  return s.geodesic_point(x, y, t);
}
inline Point apply_isometry(const Isometry& t, const Point& x) { return t.apply(x); }
inline Isometry compose_isometry(const Isometry& t, const Isometry& s) { return compose(t, s); }
inline Isometry invert_isometry(const Isometry& t) { return t.inverse(); }

}  // namespace bnpc
