#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "bnpc/spaces.hpp"

namespace bnpc {

/// Real-valued function on a space, convex along geodesics.
struct ConvexFunction {
  enum class Certificate { Exact, Sampled };

  std::function<double(const Point&)> eval;
  Certificate mode = Certificate::Exact;

  double operator()(const Point& x) const { return eval(x); }
};

/// Closed convex subset of a space.
class ConvexSet {
 public:
  enum class Kind { Ball, MidpointHull, AffineSubspace, Subtree, SublevelSet };

  static ConvexSet ball(Point center, double radius);
  static ConvexSet midpoint_hull(std::vector<Point> generators, int depth);
  /// Euclidean only. Directions are orthonormalized; dependent ones are dropped.
  static ConvexSet affine_subspace(Point base, std::vector<std::vector<double>> directions);
  /// Tree only. The vertex set must induce a connected subgraph.
  static ConvexSet subtree(const Space& tree, std::vector<int> vertices);
  static ConvexSet sublevel_set(ConvexFunction f, double level);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] const Point& center() const { return center_; }
  [[nodiscard]] double radius() const { return radius_; }
  [[nodiscard]] const std::vector<Point>& generators() const { return generators_; }
  [[nodiscard]] int depth() const { return depth_; }
  [[nodiscard]] const std::vector<std::vector<double>>& directions() const { return directions_; }
  [[nodiscard]] const std::vector<int>& vertices() const { return vertices_; }
  [[nodiscard]] const ConvexFunction& function() const { return f_; }
  [[nodiscard]] double level() const { return level_; }

  /// Membership within `tol`. Midpoint hulls are tested against their depth-limited cloud.
  [[nodiscard]] bool contains(const Space& s, const Point& x, double tol = 1e-9) const;
  /// Point cloud of a midpoint hull at its depth, computed once.
  [[nodiscard]] const std::vector<Point>& hull_cloud(const Space& s) const;

 private:
  ConvexSet() = default;
  [[nodiscard]] bool in_subtree(const Space& s, const Point& x) const;

  Kind kind_ = Kind::Ball;
  Point center_;
  double radius_ = 0.0;
  std::vector<Point> generators_;
  int depth_ = 0;
  std::vector<std::vector<double>> directions_;
  std::vector<int> vertices_;
  ConvexFunction f_;
  double level_ = 0.0;
  mutable std::shared_ptr<const std::vector<Point>> cloud_;
};

/// Finite generating set acting by isometries. By convention it contains the identity.
class FiniteGroupAction {
 public:
  FiniteGroupAction(Space space, std::vector<Isometry> generators);

  [[nodiscard]] const Space& space() const { return space_; }
  [[nodiscard]] const std::vector<Isometry>& generators() const { return generators_; }
  [[nodiscard]] bool includes_identity() const { return has_identity_; }

 private:
  Space space_;
  std::vector<Isometry> generators_;
  bool has_identity_ = false;
};

struct SearchOptions {
  std::uint64_t seed = 1;
  int max_iterations = 2000;
  /// Iterates farther than this from the start signal a non-coercive function.
  double divergence_radius = 1e6;
};

struct ModulusEstimate {
  bool feasible = false;
  double delta = 0.0;
  Point y1;
  Point y2;
};

struct Circumcenter {
  Point center;
  double radius = 0.0;
  /// Upper bound on radius minus the optimal radius.
  double gap = 0.0;
};

struct GrowthBound {
  double b = 0.0;
  Point witness;
};

struct CliffordReport {
  bool is_clifford = false;
  double displacement = 0.0;
  double spread = 0.0;
  bool halfway_ok = false;
  double halfway_displacement = 0.0;
};

/// Upper estimate of the modulus of convexity at x: the smallest r - d(x, m(y1, y2))
/// found over `budget` candidate pairs with d(x, yi) <= r and d(y1, y2) >= eps r.
ModulusEstimate modulus_estimate(const Space& s, const Point& x, double eps, double r, int budget,
                                 std::uint64_t seed = 1);

/// Nearest point of C to x. Throws DomainError for empty sets and ConvergenceError
/// when independent restarts disagree.
Point project(const Space& s, const Point& x, const ConvexSet& C, double tol = 1e-9);

/// Minimax center of a finite set; `relative` restricts the center to the closed convex hull.
Circumcenter circumcenter(const Space& s, const std::vector<Point>& pts, bool relative = false,
                          double tol = 1e-9, int hull_depth = 4);

/// Y_n of the midpoint recursion, deduplicated and thinned to at most `cap` points.
std::vector<Point> hull_iterate(const Space& s, const std::vector<Point>& Y0, int n, std::size_t cap = 4096);

/// Farthest-point subsample of `pts` with lowest-index tie-breaking, starting at index 0.
std::vector<Point> farthest_point_thin(const Space& s, const std::vector<Point>& pts, std::size_t cap);

Point minimize_convex(const Space& s, const ConvexFunction& f, const Point& x_init, double tol = 1e-9,
                      const SearchOptions& opts = {});

/// Largest b on a bisection grid in [1e-6, 1e3] with f(x) >= b d(x, x0) - 1/b on all samples.
GrowthBound linear_growth_bound(const Space& s, const ConvexFunction& f, const Point& x0, double sample_radius,
                                int budget, std::uint64_t seed = 1);

double displacement(const FiniteGroupAction& action, const Point& x);

/// [a, b] and [x, y] are parallel when d(a, x) = d(b, y) = d(m(a, b), m(x, y)).
bool parallel_check(const Space& s, const Point& a, const Point& b, const Point& x, const Point& y,
                    double tol = 1e-9);

/// Samples the displacement of T; if constant, also checks that x -> m(x, Tx) is an
/// isometry with half the displacement.
CliffordReport clifford_check(const Space& s, const Isometry& T, int samples, double tol = 1e-9,
                              std::uint64_t seed = 1, double radius = 10.0);

struct AffineSpan {
  std::vector<double> base;
  std::vector<std::vector<double>> basis;
};

/// Affine hull of Euclidean points: base point and an orthonormal basis.
AffineSpan affine_span(const Space& s, const std::vector<Point>& pts, double tol = 1e-10);

}  // namespace bnpc
