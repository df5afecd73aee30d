#include <cmath>
#include <numbers>
#include <random>

#include "bnpc/spaces.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bnpc;

namespace {

std::vector<Space> all_spaces() {
  return {
      Space::euclidean(1),
      Space::euclidean(3),
      Space::lp(3, 3.0),
      Space::lp(2, 1.5),
      oracle::star(3),
      Space::tree(6, {{0, 1, 1.0}, {1, 2, 0.5}, {1, 3, 2.0}, {3, 4, 1.0}, {3, 5, 0.25}}),
      Space::product({Space::euclidean(1), oracle::star(3)}, 2.0),
      Space::product({Space::euclidean(2), Space::lp(2, 3.0)}, 3.0),
  };
}

}  // namespace

TEST_CASE("distance examples") {
  CHECK(Space::euclidean(2).distance(Point::vector({0, 0}), Point::vector({3, 4})) == doctest::Approx(5.0));
  CHECK(Space::lp(2, 3.0).distance(Point::vector({0, 0}), Point::vector({1, 1})) ==
        doctest::Approx(std::cbrt(2.0)));
  Space s = oracle::star(3);
  CHECK(s.distance(Point::tree_vertex(1), Point::tree_vertex(2)) == doctest::Approx(2.0));
  CHECK(oracle::tree_path_distance(s.topology(), {1, -1, 0}, {2, -1, 0}) == doctest::Approx(2.0));
}

TEST_CASE("mismatched points are domain errors") {
  Space e2 = Space::euclidean(2);
  CHECK_THROWS_AS((void)e2.distance(Point::vector({0}), Point::vector({0, 0})), DomainError);
  CHECK_THROWS_AS((void)e2.distance(Point::tree_vertex(0), Point::vector({0, 0})), DomainError);
  Space prod = Space::product({Space::euclidean(1), Space::euclidean(1)});
  CHECK_THROWS_AS((void)prod.distance(Point::product({Point::scalar(0)}), prod.origin()), DomainError);
}

TEST_CASE("space validation") {
  CHECK_THROWS_AS(Space::euclidean(0), DomainError);
  CHECK_THROWS_AS(Space::lp(2, 1.0), DomainError);
  CHECK_THROWS_AS(Space::tree(3, {{0, 1, 1.0}, {1, 2, -1.0}}), DomainError);
  CHECK_THROWS_AS(Space::tree(3, {{0, 1, 1.0}}), DomainError);
  CHECK_THROWS_AS(Space::tree(4, {{0, 1, 1.0}, {1, 0, 1.0}, {2, 3, 1.0}}), DomainError);
  CHECK_THROWS_AS(Space::product({Space::euclidean(1)}), DomainError);
}

TEST_CASE("geodesic_point examples") {
  Space r = Space::euclidean(1);
  CHECK(r.geodesic_point(Point::scalar(0), Point::scalar(4), 0.5).coord(0) == doctest::Approx(2.0));
  Space s = oracle::star(3);
  CHECK(s.midpoint(Point::tree_vertex(1), Point::tree_vertex(2)) == Point::tree_vertex(0));
  Space prod = Space::product({Space::euclidean(1), Space::euclidean(1)});
  Point z = prod.geodesic_point(Point::product({Point::scalar(0), Point::scalar(0)}),
                                Point::product({Point::scalar(2), Point::scalar(4)}), 0.25);
  CHECK(z.factors()[0].coord(0) == doctest::Approx(0.5));
  CHECK(z.factors()[1].coord(0) == doctest::Approx(1.0));
  CHECK_THROWS_AS((void)r.geodesic_point(Point::scalar(0), Point::scalar(1), 1.5), DomainError);
}

TEST_CASE("tree points are canonical at edge ends") {
  Space s = oracle::star(3);
  CHECK(s.tree_point(0, 0.0) == Point::tree_vertex(0));
  CHECK(s.tree_point(0, 1.0) == Point::tree_vertex(1));
  CHECK(s.tree_point(0, 0.5).tree().edge == 0);
  CHECK(s.geodesic_point(Point::tree_vertex(1), Point::tree_vertex(2), 1.0) == Point::tree_vertex(2));
}

TEST_CASE("tree distance matches the shortest-path oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Space t = oracle::random_tree(3 + trial % 8, rng);
    for (int k = 0; k < 50; ++k) {
      Point a = t.sample(t.origin(), 5.0, rng);
      Point b = t.sample(t.origin(), 5.0, rng);
      CHECK(t.distance(a, b) == doctest::Approx(oracle::tree_path_distance(t.topology(), a.tree(), b.tree())));
    }
  }
}

TEST_CASE("geodesic consistency, busemann convexity, strict convexity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const Space& s : all_spaces()) {
    CAPTURE(s.to_string());
    for (int k = 0; k < 200; ++k) {
      Point x = s.sample(s.origin(), 3.0, rng);
      Point y = s.sample(s.origin(), 3.0, rng);
      double t1 = unit(rng), t2 = unit(rng);
      if (t1 > t2) std::swap(t1, t2);
      const double d = s.distance(x, y);
      const double scale = 1e-9 * std::max(1.0, d);
      CHECK(std::abs(s.distance(s.geodesic_point(x, y, t1), s.geodesic_point(x, y, t2)) - (t2 - t1) * d) <=
            scale);

      Point u = s.sample(s.origin(), 3.0, rng);
      Point v = s.sample(s.origin(), 3.0, rng);
      std::vector<double> g;
      for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        g.push_back(s.distance(s.geodesic_point(x, y, t), s.geodesic_point(u, v, t)));
      }
      for (int i = 1; i + 1 < 5; ++i) CHECK(g[i] <= 0.5 * (g[i - 1] + g[i + 1]) + 1e-9 * (1 + g[i]));

      Point w = s.sample(s.origin(), 3.0, rng);
      if (!(x == y)) {
        CHECK(s.distance(w, s.midpoint(x, y)) < std::max(s.distance(w, x), s.distance(w, y)) + 1e-15);
      }
    }
  }
}

TEST_CASE("strict convexity is strict away from ties") {
  // Euclidean: midpoint strictly closer for y1 != y2 at equal distance.
  Space e = Space::euclidean(2);
  Point x = Point::vector({0, 0});
  CHECK(e.distance(x, e.midpoint(Point::vector({1, 0}), Point::vector({0, 1}))) < 1.0);
}

TEST_CASE("product metric combines factor distances with exponent q") {
  Space prod = Space::product({Space::euclidean(1), Space::euclidean(1)}, 3.0);
  Point a = Point::product({Point::scalar(0), Point::scalar(0)});
  Point b = Point::product({Point::scalar(1), Point::scalar(2)});
  CHECK(std::pow(prod.distance(a, b), 3.0) == doctest::Approx(1.0 + 8.0));
  Space prod2 = Space::product({Space::euclidean(1), Space::euclidean(1)});
  CHECK(prod2.distance(Point::product({Point::scalar(0), Point::scalar(0)}),
                       Point::product({Point::scalar(3), Point::scalar(4)})) == 5.0);
}

TEST_CASE("isometry examples") {
  auto tr = [](double by) { return Isometry::translation({by}); };
  CHECK(tr(1).apply(Point::scalar(0)).coord(0) == 1.0);
  Isometry reflect = Isometry::point_reflection(1);
  CHECK(reflect.apply(Point::scalar(3)).coord(0) == -3.0);
  CHECK(compose(tr(1), tr(2)).apply(Point::scalar(0)).coord(0) == 3.0);
  Isometry rr = compose(reflect, reflect);
  CHECK(rr.apply(Point::scalar(5.5)).coord(0) == 5.5);
  CHECK(compose(reflect, tr(1)).apply(Point::scalar(0)).coord(0) == -1.0);

  Space s = oracle::star(3);
  Isometry swap = Isometry::tree_automorphism(s, {0, 2, 1, 3});
  Point m1 = s.midpoint(Point::tree_vertex(0), Point::tree_vertex(1));
  Point m2 = s.midpoint(Point::tree_vertex(0), Point::tree_vertex(2));
  CHECK(swap.apply(m1) == m2);
  for (int v = 0; v < 4; ++v) {
    CHECK(s.distance(swap.apply(m1), swap.apply(Point::tree_vertex(v))) ==
          doctest::Approx(oracle::tree_path_distance(s.topology(), m1.tree(), {v, -1, 0})));
  }
  CHECK_THROWS_AS(Isometry::tree_automorphism(s, {1, 0, 2, 3}), DomainError);
  Space uneven = Space::tree(3, {{0, 1, 1.0}, {0, 2, 2.0}});
  CHECK_THROWS_AS(Isometry::tree_automorphism(uneven, {0, 2, 1}), DomainError);
  CHECK_THROWS_AS((void)reflect.apply(Point::tree_vertex(0)), DomainError);
  CHECK_THROWS_AS(Isometry::orthogonal(2, {1, 1, 0, 1}, {0, 0}), DomainError);
  CHECK_THROWS_AS(compose(reflect, swap), DomainError);
}

TEST_CASE("isometries preserve distance and invert") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(0.0, 2 * std::numbers::pi);
  Space e2 = Space::euclidean(2);
  Space l3 = Space::lp(3, 3.0);
  Space star = oracle::star(4);
  Space prod = Space::product({e2, star});
  std::vector<std::pair<Space, Isometry>> cases = {
      {e2, Isometry::rotation2d(ang(rng), {1.0, -2.0})},
      {e2, Isometry::hyperplane_reflection({1.0, 2.0}, 0.5)},
      {e2, compose(Isometry::rotation2d(0.3), Isometry::signed_permutation({1, 0}, {-1, 1}, {0.5, 0.0}))},
      {l3, Isometry::signed_permutation({2, 0, 1}, {1, -1, -1}, {0.1, 0.2, 0.3})},
      {star, Isometry::tree_automorphism(star, {0, 2, 3, 4, 1})},
      {prod, Isometry::product({Isometry::rotation2d(1.0), Isometry::tree_automorphism(star, {0, 4, 3, 2, 1})})},
  };
  for (auto& [s, t] : cases) {
    CAPTURE(s.to_string());
    t.check_for(s);
    Isometry inv = t.inverse();
    Isometry id = compose(t, inv);
    for (int k = 0; k < 200; ++k) {
      Point x = s.sample(s.origin(), 4.0, rng);
      Point y = s.sample(s.origin(), 4.0, rng);
      const double d = s.distance(x, y);
      CHECK(std::abs(s.distance(t.apply(x), t.apply(y)) - d) <= 1e-9 * std::max(1.0, d));
      CHECK(s.distance(id.apply(x), x) <= 1e-9);
      CHECK(s.distance(inv.apply(t.apply(x)), x) <= 1e-9);
    }
  }
  // General rotations are not lp isometries.
  CHECK_THROWS_AS(Isometry::rotation2d(0.3).check_for(Space::lp(2, 3.0)), DomainError);
}

TEST_CASE("extend continues the geodesic") {
  std::mt19937_64 rng(9);
  for (const Space& s : all_spaces()) {
    CAPTURE(s.to_string());
    for (int k = 0; k < 50; ++k) {
      Point x = s.sample(s.origin(), 2.0, rng);
      Point y = s.sample(x, 1.0, rng);
      const double d = s.distance(x, y);
      if (d < 1e-6) continue;
      Point z = s.extend(x, y, 2.0 * d);
      const double dz = s.distance(x, z);
      CHECK(dz <= 2.0 * d + 1e-9);
      CHECK(s.distance(x, y) + s.distance(y, z) == doctest::Approx(dz).epsilon(1e-9));
      if (s.kind() != SpaceKind::MetricTree && s.kind() != SpaceKind::Product) CHECK(dz == doctest::Approx(2 * d));
    }
  }
}

TEST_CASE("sampling respects the radius") {
  std::mt19937_64 rng(1);
  for (const Space& s : all_spaces()) {
    Point c = s.origin();
    for (int k = 0; k < 100; ++k) CHECK(s.distance(c, s.sample(c, 1.5, rng)) <= 1.5 + 1e-12);
  }
}
