#include <cmath>
#include <random>

#include "bnpc/mapspace.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bnpc;
using doctest::Approx;

namespace {

EquivariantMap reals(const MeasureModel& m, std::vector<double> v) {
  std::vector<Point> pts;
  for (double x : v) pts.push_back(Point::scalar(x));
  return {m, Space::euclidean(1), pts};
}

EquivariantMap random_map(const MeasureModel& m, const Space& s, double radius, std::mt19937_64& rng) {
  std::vector<Point> pts;
  for (int i = 0; i < m.size(); ++i) pts.push_back(s.sample(s.origin(), radius, rng));
  return {m, s, pts};
}

}  // namespace

TEST_CASE("measure model validation") {
  CHECK_NOTHROW(MeasureModel({0.25, 0.75}));
  CHECK_THROWS_AS(MeasureModel({0.5, 0.6}), DomainError);
  CHECK_THROWS_AS(MeasureModel({1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(MeasureModel(std::vector<double>{}), DomainError);
  CHECK(MeasureModel::uniform(4).weight(2) == 0.25);
}

TEST_CASE("rho examples") {
  MeasureModel half = MeasureModel::uniform(2);
  CHECK(rho(2, reals(half, {0, 0}), reals(half, {2, 2})) == Approx(2.0));
  CHECK(rho(2, reals(half, {1, -3}), reals(half, {1, -3})) == 0.0);
  MeasureModel skew({0.25, 0.75});
  CHECK(rho(2, reals(skew, {4, 7}), reals(skew, {0, 7})) == Approx(2.0));
  CHECK(map_norm(2, reals(half, {3, 4}), Point::scalar(0)) == Approx(std::sqrt(12.5)));
  CHECK_THROWS_AS((void)rho(2, reals(half, {0, 0}), reals(skew, {0, 0})), DomainError);
  CHECK_THROWS_AS((void)rho(0.5, reals(half, {0, 0}), reals(half, {0, 0})), DomainError);
}

TEST_CASE("rho is a metric") {
  std::mt19937_64 rng(3);
  MeasureModel m({0.1, 0.2, 0.3, 0.4});
  for (const Space& s : {Space::euclidean(2), Space::lp(3, 3.0), oracle::star(3)}) {
    for (double p : {1.5, 2.0, 3.0}) {
      for (int k = 0; k < 1000; ++k) {
        auto a = random_map(m, s, 2.0, rng), b = random_map(m, s, 2.0, rng), c = random_map(m, s, 2.0, rng);
        CHECK(rho(p, a, b) == Approx(rho(p, b, a)));
        CHECK(rho(p, a, a) == 0.0);
        CHECK(rho(p, a, c) <= rho(p, a, b) + rho(p, b, c) + 1e-12);
      }
    }
  }
}

TEST_CASE("map midpoints") {
  MeasureModel half = MeasureModel::uniform(2);
  auto mid = map_midpoint(reals(half, {0, 0}), reals(half, {2, 4}));
  CHECK(mid.value(0).coord(0) == Approx(1.0));
  CHECK(mid.value(1).coord(0) == Approx(2.0));
  auto same = reals(half, {5, -1});
  CHECK(map_midpoint(same, same).values() == same.values());

  Space star = oracle::star(3);
  EquivariantMap leaves(half, star, {Point::tree_vertex(1), Point::tree_vertex(2)});
  auto centre = EquivariantMap::constant(half, star, Point::tree_vertex(0));
  auto tm = map_midpoint(leaves, centre);
  CHECK(tm.value(0) == star.tree_point(0, 0.5));
  CHECK(tm.value(1) == star.tree_point(1, 0.5));
}

TEST_CASE("midpoint distances in the map space") {
  std::mt19937_64 rng(4);
  MeasureModel m({0.5, 0.3, 0.2});
  Space e2 = Space::euclidean(2);
  for (int k = 0; k < 500; ++k) {
    auto a = random_map(m, e2, 3.0, rng), b = random_map(m, e2, 3.0, rng);
    auto mid = map_midpoint(a, b);
    CHECK(rho(2, mid, a) == Approx(0.5 * rho(2, a, b)));
    CHECK(rho(2, mid, b) == Approx(0.5 * rho(2, a, b)));
  }
  Space tree = oracle::star(4);
  for (int k = 0; k < 500; ++k) {
    auto a = random_map(m, tree, 1.0, rng), b = random_map(m, tree, 1.0, rng);
    CHECK(rho(1.5, map_midpoint(a, b), a) <= 0.5 * rho(1.5, a, b) + 1e-12);
  }
}

TEST_CASE("map space is Busemann convex on sampled grids") {
  std::mt19937_64 rng(5);
  MeasureModel m({0.25, 0.25, 0.5});
  for (const Space& s : {Space::lp(2, 3.0), oracle::star(3), Space::product({Space::euclidean(1), oracle::star(3)})}) {
    for (double p : {1.5, 2.0, 3.0}) {
      for (int k = 0; k < 200; ++k) {
        auto x = random_map(m, s, 1.0, rng), y = random_map(m, s, 1.0, rng);
        auto u = random_map(m, s, 1.0, rng), v = random_map(m, s, 1.0, rng);
        double d[5];
        for (int i = 0; i < 5; ++i) d[i] = rho(p, map_geodesic(x, y, i / 4.0), map_geodesic(u, v, i / 4.0));
        for (int i = 1; i < 4; ++i) CHECK(d[i] <= 0.5 * (d[i - 1] + d[i + 1]) + 1e-9);
      }
    }
  }
}

TEST_CASE("banach modulus agrees with Hanner's formulas") {
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    for (double eps : {0.01, 0.1, 0.5, 1.0, 1.5, 1.9}) {
      CAPTURE(p);
      CAPTURE(eps);
      const double exact = oracle::hanner_modulus(p, eps);
      const double b = banach_modulus(p, eps);
      CHECK(b <= exact * (1.0 + 1e-9) + 1e-15);
      CHECK(b >= exact * 0.95);
    }
  }
  CHECK(banach_modulus(2.0, 1.0) == Approx(oracle::hilbert_modulus(1.0)).epsilon(0.03));
  CHECK(banach_modulus(3.0, 0.0) == 0.0);
  CHECK(banach_modulus(3.0, 2.0) == 1.0);
  CHECK(banach_modulus(3.0, 1e-6) == 0.0);
  CHECK_THROWS_AS((void)banach_modulus(1.0, 0.5), DomainError);
}

TEST_CASE("banach modulus is nondecreasing") {
  for (double p : {1.5, 3.0}) {
    double prev = 0.0;
    for (int k = 0; k <= 200; ++k) {
      const double v = banach_modulus(p, 2.0 * k / 200.0);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("closed form moduli are lower bounds") {
  for (const Space& s : {Space::euclidean(2), Space::lp(2, 3.0), oracle::star(3)}) {
    for (double eps : {0.25, 0.5, 1.0, 1.5}) {
      CAPTURE(s.to_string());
      CAPTURE(eps);
      // Brute force over sampled pairs on the unit sphere.
      std::mt19937_64 rng(9);
      double best = 1e300;
      const Point x = s.origin();
      for (int k = 0; k < 20000; ++k) {
        Point a = s.sample(x, 1.0, rng), b = s.sample(x, 1.0, rng);
        if (s.distance(a, b) < eps) continue;
        best = std::min(best, 1.0 - s.distance(x, s.midpoint(a, b)));
      }
      CHECK(closed_form_modulus(s, eps) <= best + 1e-12);
    }
  }
  CHECK(closed_form_modulus(Space::euclidean(3), 1.0) == Approx(oracle::hilbert_modulus(1.0)));
  CHECK(closed_form_modulus(Space::euclidean(1), 1.0) == Approx(0.5));
  CHECK_THROWS_AS((void)closed_form_modulus(Space::product({Space::euclidean(1), Space::euclidean(1)}), 1.0),
                  DomainError);
}

TEST_CASE("uniform convexity witness examples") {
  MeasureModel one = MeasureModel::uniform(1);
  Space r = Space::euclidean(1);
  auto delta = [&](double e) { return closed_form_modulus(r, e); };
  auto psi = reals(one, {0.0});
  UcReport rep = uc_witness_check(2.0, delta, psi, reals(one, {3.0}), reals(one, {-3.0}), 3.0);
  CHECK(rep.eps == Approx(2.0));
  CHECK(rep.midpoint_distance == Approx(0.0));
  CHECK(rep.slack > 0.0);
  CHECK_FALSE(rep.violated);

  UcReport same = uc_witness_check(2.0, delta, psi, reals(one, {1.0}), reals(one, {1.0}), 1.0);
  CHECK(same.eps == 0.0);
  CHECK(same.tau == 0.0);
  CHECK(same.bound == Approx(1.0));
  CHECK_FALSE(same.violated);
  CHECK_THROWS_AS((void)uc_witness_check(2.0, delta, psi, reals(one, {2.0}), reals(one, {0.0}), 1.0), DomainError);
}

TEST_CASE("uniform convexity witness finds no violations") {
  std::mt19937_64 rng(17);
  MeasureModel m({0.2, 0.3, 0.5});
  for (const Space& s : {Space::euclidean(1), Space::lp(3, 3.0), oracle::star(3)}) {
    auto delta = [&](double e) { return closed_form_modulus(s, e); };
    for (double p : {1.5, 2.0, 3.0}) {
      int violations = 0;
      for (int k = 0; k < 2000; ++k) {
        auto psi = random_map(m, s, 1.0, rng);
        auto a = random_map(m, s, 1.0, rng), b = random_map(m, s, 1.0, rng);
        const double r = std::max(rho(p, a, psi), rho(p, b, psi));
        if (r == 0.0) continue;
        violations += uc_witness_check(p, delta, psi, a, b, r).violated;
      }
      CHECK(violations == 0);
    }
  }
}

TEST_CASE("mazur map examples") {
  MeasureModel one = MeasureModel::uniform(1);
  MeasureModel three({0.2, 0.3, 0.5});
  ScalarField ones(three, {1, 1, 1}, 2.0);
  ScalarField m = mazur_map(ones, 2.0, 4.0);
  for (double v : m.values()) CHECK(v == 1.0);
  CHECK(m.exponent() == 4.0);
  CHECK(mazur_map(ScalarField(one, {-4.0}, 2.0), 2.0, 1.5).values()[0] == Approx(-std::pow(4.0, 4.0 / 3.0)));
  CHECK_THROWS_AS((void)mazur_map(ScalarField(one, {-4.0}, 2.0), 2.0, 1.0), DomainError);
  CHECK_THROWS_AS((void)mazur_map(ScalarField(one, {-4.0}, 2.0), 3.0, 2.0), DomainError);
}

TEST_CASE("mazur map properties") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  MeasureModel m({0.125, 0.125, 0.25, 0.25, 0.25});
  for (auto [p, q] : {std::pair{2.0, 4.0}, std::pair{3.0, 1.5}}) {
    for (int k = 0; k < 300; ++k) {
      std::vector<double> v(5);
      for (double& x : v) x = n(rng);
      ScalarField f(m, v, p);
      ScalarField g = mazur_map(f, p, q);
      ScalarField back = mazur_map(g, q, p);
      for (int i = 0; i < 5; ++i) CHECK(back.values()[i] == Approx(f.values()[i]).epsilon(1e-12));
      CHECK(g.norm() == Approx(std::pow(f.norm(), p / q)));
      const std::vector<int> perm{1, 0, 4, 2, 3};
      CHECK(mazur_map(f.permuted(perm), p, q).values() == g.permuted(perm).values());
    }
  }
  ScalarField f(m, {1, 2, 3, 4, 5}, 2.0);
  CHECK_THROWS_AS((void)f.permuted({2, 1, 0, 3, 4}), DomainError);
}
