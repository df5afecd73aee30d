#include <cmath>
#include <random>
#include <sstream>

#include "bnpc/generators.hpp"
#include "bnpc/harmonic.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bnpc;
using doctest::Approx;

namespace {

Isometry shift(double t) { return Isometry::translation({t}); }
Isometry flip(double c) { return Isometry::signed_permutation({0}, {-1}, {c}); }

EquivariantMap reals(const MeasureModel& m, const std::vector<double>& v) {
  std::vector<Point> pts;
  for (double x : v) pts.push_back(Point::scalar(x));
  return {m, Space::euclidean(1), pts};
}

std::vector<double> values(const EquivariantMap& phi) {
  std::vector<double> out;
  for (const Point& x : phi.values()) out.push_back(x.coord(0));
  return out;
}

// Energy of a map into R written out term by term.
double line_energy(const EquivariantProblem& prob, const std::vector<double>& x) {
  double total = 0.0;
  for (const Edge& e : prob.edges()) {
    const double moved = e.twist.apply(Point::scalar(x[e.src])).coord(0);
    total += prob.model().weight(e.src) * e.weight * std::pow(std::abs(moved - x[e.dst]), prob.p());
  }
  return total;
}

EquivariantMap random_map(const EquivariantProblem& prob, double radius, std::mt19937_64& rng) {
  std::vector<Point> pts;
  for (int i = 0; i < prob.num_cells(); ++i) pts.push_back(prob.target().sample(prob.target().origin(), radius, rng));
  return {prob.model(), prob.target(), pts};
}

bool monotone(const SolveReport& r) {
  for (std::size_t k = 1; k < r.trace.size(); ++k) {
    if (r.trace[k].energy > r.trace[k - 1].energy) return false;
  }
  return true;
}

// Two cells on a star; twists are leaf permutations.
EquivariantProblem star_problem(std::mt19937_64& rng) {
  Space s = oracle::star(3);
  std::vector<int> perm{0, 1, 2, 3};
  std::shuffle(perm.begin() + 1, perm.end(), rng);
  std::vector<int> swap{0, 2, 1, 3};
  std::vector<Edge> edges{
      {0, 1, 1.0, Isometry::tree_automorphism(s, perm), 1},
      {1, 0, 0.5, Isometry::identity(s), 1},
      {0, 0, 0.7, Isometry::tree_automorphism(s, swap), 1},
  };
  return {MeasureModel({0.4, 0.6}), s, Point::tree_vertex(1), edges};
}

}  // namespace

TEST_CASE("problem validation") {
  Space r = Space::euclidean(1);
  MeasureModel one = MeasureModel::uniform(1);
  CHECK_THROWS_AS(EquivariantProblem(one, r, Point::scalar(0), {{0, 0, -1.0, shift(1), 1}}), DomainError);
  CHECK_THROWS_AS(EquivariantProblem(one, r, Point::scalar(0), {{0, 1, 1.0, shift(1), 1}}), DomainError);
  CHECK_THROWS_AS(EquivariantProblem(one, r, Point::scalar(0), {{0, 0, 1.0, shift(1), 2}}), DomainError);
  CHECK_THROWS_AS(EquivariantProblem(one, r, Point::scalar(0), {{0, 0, 1.0, Isometry::translation({1, 2}), 1}}),
                  DomainError);
  CHECK_THROWS_AS(EquivariantProblem(one, r, Point::scalar(0), {}, 0.5), DomainError);

  EquivariantProblem no_identity(one, r, Point::scalar(0), {{0, 0, 1.0, shift(1), 1}});
  CHECK(no_identity.warnings().size() == 1);
  EquivariantProblem with_identity(one, r, Point::scalar(0), {{0, 0, 1.0, shift(1), 1}, {0, 0, 1.0, shift(0), 1}});
  CHECK(with_identity.warnings().empty());
  CHECK_THROWS_AS((void)with_identity.with_edge_orbits({{0, 5}}), DomainError);
}

TEST_CASE("energy examples") {
  Space r = Space::euclidean(1);
  MeasureModel one = MeasureModel::uniform(1);
  EquivariantProblem loop(one, r, Point::scalar(0), {{0, 0, 1.0, shift(1), 1}});
  for (double x : {-3.0, 0.0, 2.5}) CHECK(energy(loop, reals(one, {x})) == Approx(1.0));

  MeasureModel two = MeasureModel::uniform(2);
  EquivariantProblem pair(two, r, Point::scalar(0), {{0, 1, 1.0, Isometry::identity(r), 1}});
  CHECK(energy(pair, reals(two, {0, 3})) == Approx(9.0 * 0.5));

  EquivariantProblem mirror(one, r, Point::scalar(0), {{0, 0, 1.0, flip(0), 1}});
  CHECK(energy(mirror, reals(one, {1.5})) == Approx(9.0));
  CHECK(energy(mirror, reals(one, {0.0})) == 0.0);

  EquivariantProblem prod = generators::product_two_class();
  const Space& s = prod.target();
  EquivariantMap phi(prod.model(), s, {Point::product({Point::scalar(0), Point::scalar(0)})});
  CHECK(energy(prod, phi, std::set<int>{2}) == Approx(16.0));
  CHECK(energy(prod, phi, std::set<int>{1}) == Approx(4.0 + 2.0));
  CHECK(energy(prod, phi) == Approx(22.0));
  CHECK_THROWS_AS((void)energy(pair, reals(one, {0})), DomainError);
}

TEST_CASE("energy is convex along map geodesics") {
  std::mt19937_64 rng(21);
  std::vector<EquivariantProblem> problems{generators::dihedral_line(4), generators::translation_loop(3),
                                           star_problem(rng)};
  Space l3 = Space::lp(2, 3.0);
  problems.emplace_back(MeasureModel({0.3, 0.7}), l3, l3.origin(),
                        std::vector<Edge>{{0, 1, 1.0, Isometry::signed_permutation({1, 0}, {1, -1}, {0.5, 0}), 1},
                                          {1, 1, 2.0, Isometry::point_reflection(2), 1}},
                        1.5);
  for (const auto& prob : problems) {
    for (int k = 0; k < 1000; ++k) {
      auto a = random_map(prob, 3.0, rng), b = random_map(prob, 3.0, rng);
      const double mid = energy(prob, map_midpoint(a, b));
      CHECK(mid <= 0.5 * (energy(prob, a) + energy(prob, b)) + 1e-12);
    }
  }
}

TEST_CASE("frechet mean examples") {
  Space r = Space::euclidean(1);
  CHECK(frechet_mean(r, {Point::scalar(0), Point::scalar(4)}, {1, 1}).coord(0) == 2.0);
  CHECK(frechet_mean(r, {Point::scalar(0), Point::scalar(0), Point::scalar(3)}, {1, 1, 1}).coord(0) == 1.0);

  Space star = oracle::star(3);
  std::vector<Point> leaves{Point::tree_vertex(1), Point::tree_vertex(2), Point::tree_vertex(3)};
  Point c = frechet_mean(star, leaves, {1, 1, 1});
  CHECK(star.distance(c, Point::tree_vertex(0)) < 1e-6);

  CHECK_THROWS_AS((void)frechet_mean(r, {Point::scalar(0)}, {-1}), DomainError);
  CHECK_THROWS_AS((void)frechet_mean(r, {Point::scalar(0)}, {0}), DomainError);
  CHECK_THROWS_AS((void)frechet_mean(r, {Point::scalar(0)}, {1, 2}), DomainError);
}

TEST_CASE("frechet means on random trees match an edge scan") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Space tree = oracle::random_tree(6, rng);
    std::vector<Point> pts;
    std::vector<double> w;
    std::uniform_real_distribution<double> weight(0.1, 2.0);
    for (int k = 0; k < 4; ++k) {
      pts.push_back(tree.sample(tree.origin(), 3.0, rng));
      w.push_back(weight(rng));
    }
    for (double p : {2.0, 1.5}) {
      auto f = [&](const Point& x) {
        double v = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          v += w[i] * std::pow(oracle::tree_path_distance(tree.topology(), x.tree(), pts[i].tree()), p);
        }
        return v;
      };
      const double best = oracle::scan_tree(tree, f, 2000).value;
      const double got = f(frechet_mean(tree, pts, w, p));
      CHECK(got <= best + 1e-7);
    }
  }
}

TEST_CASE("minimize_energy examples") {
  auto consensus = generators::consensus(2);
  // Simultaneous updates swap the two values, backtracking halves the step and both
  // land on 5. Sequential updates move cell 0 onto cell 1 instead.
  SolveReport r = minimize_energy(consensus, reals(consensus.model(), {0, 10}),
                                  {.mode = SweepMode::Jacobi, .exact_quadratic = false});
  CHECK(r.converged);
  CHECK(r.solution.value(0).coord(0) == Approx(5.0));
  CHECK(r.solution.value(1).coord(0) == Approx(5.0));
  CHECK(r.energy < 1e-12);
  SolveReport g = minimize_energy(consensus, reals(consensus.model(), {0, 10}), {.exact_quadratic = false});
  CHECK(g.converged);
  CHECK(g.solution.value(0).coord(0) == g.solution.value(1).coord(0));
  CHECK(g.energy < 1e-12);

  MeasureModel one = MeasureModel::uniform(1);
  EquivariantProblem mirror(one, Space::euclidean(1), Point::scalar(0), {{0, 0, 1.0, flip(0), 1}});
  SolveReport m = minimize_energy(mirror, reals(one, {7}));
  CHECK(std::abs(m.solution.value(0).coord(0)) < 1e-12);
  CHECK(m.energy < 1e-20);
}

TEST_CASE("dihedral line solution matches the grid oracle") {
  for (int cells : {2, 3}) {
    auto prob = generators::dihedral_line(cells);
    SolveReport r = minimize_energy(prob, reals(prob.model(), std::vector<double>(cells, 0.9)), {.tol = 1e-12});
    CHECK(r.converged);
    CHECK(monotone(r));
    double spacing = 0.0;
    auto [grid, arg] = oracle::zoom_grid_minimum([&](const std::vector<double>& x) { return line_energy(prob, x); },
                                                 cells, -2.0, 2.0, 20, 12, &spacing);
    CHECK(std::abs(r.energy - grid) < 1e-6);
    for (int i = 0; i < cells; ++i) {
      const double u = i / (2.0 * (cells - 1));
      CHECK(r.solution.value(i).coord(0) == Approx(u).epsilon(1e-6));
      CHECK(arg[i] == Approx(u).epsilon(1e-4));
    }
  }
}

TEST_CASE("solver matches exhaustive search on small problems") {
  std::mt19937_64 rng(33);
  std::vector<EquivariantProblem> line{generators::consensus(2), generators::consensus(3),
                                       generators::translation_loop(1), generators::translation_loop(2),
                                       generators::translation_loop(3), generators::dihedral_line(2),
                                       generators::dihedral_line(3)};
  MeasureModel three({0.2, 0.3, 0.5});
  Space r = Space::euclidean(1);
  line.emplace_back(three, r, Point::scalar(0),
                    std::vector<Edge>{{0, 1, 1.0, flip(1), 1}, {1, 2, 2.0, shift(0.5), 1}, {2, 0, 0.5, flip(-1), 1},
                                      {2, 2, 1.0, shift(0), 1}});
  for (const auto& prob : line) {
    for (int start = 0; start < 3; ++start) {
      SolveReport s = minimize_energy(prob, random_map(prob, 5.0, rng), {.tol = 1e-12});
      CHECK(monotone(s));
      double spacing = 0.0;
      auto [grid, arg] = oracle::zoom_grid_minimum([&](const std::vector<double>& x) { return line_energy(prob, x); },
                                                   prob.num_cells(), -6.0, 6.0, 24, 10, &spacing);
      CHECK(s.energy <= grid + 1e-5);
      CHECK(line_energy(prob, values(s.solution)) == Approx(s.energy).epsilon(1e-12));
    }
  }

  for (int trial = 0; trial < 5; ++trial) {
    auto prob = star_problem(rng);
    SolveReport s = minimize_energy(prob, random_map(prob, 1.0, rng), {.tol = 1e-10});
    CHECK(monotone(s));
    // The automorphisms fix the centre, so the grid optimum is 0 there.
    CHECK(s.energy <= 1e-5);
  }
  for (int trial = 0; trial < 5; ++trial) {
    Space tree = oracle::random_tree(5, rng);
    auto prob = generators::consensus(3, tree);
    SolveReport s = minimize_energy(prob, random_map(prob, 3.0, rng), {.tol = 1e-10});
    CHECK(monotone(s));
    CHECK(s.energy <= 1e-5);
  }
}

TEST_CASE("jacobi sweeps agree with gauss-seidel and ignore the thread count") {
  std::mt19937_64 rng(44);
  auto prob = generators::dihedral_line(6);
  auto init = random_map(prob, 2.0, rng);
  // Block updates only, so the sweeps themselves are compared.
  SolveReport gs = minimize_energy(prob, init, {.tol = 1e-11, .exact_quadratic = false});
  SolveReport j1 = minimize_energy(
      prob, init, {.tol = 1e-11, .mode = SweepMode::Jacobi, .threads = 1, .exact_quadratic = false});
  SolveReport j4 = minimize_energy(
      prob, init, {.tol = 1e-11, .mode = SweepMode::Jacobi, .threads = 4, .exact_quadratic = false});
  CHECK(j1.converged);
  CHECK(monotone(j1));
  CHECK(j1.energy == Approx(gs.energy).epsilon(1e-9));
  CHECK(j1.solution.values() == j4.solution.values());
  CHECK(j1.iterations == j4.iterations);
}

TEST_CASE("relabelling cells and conjugating twists preserves the optimum") {
  std::mt19937_64 rng(45);
  auto prob = generators::dihedral_line(4);
  const std::vector<int> perm{2, 0, 3, 1};  // old cell i becomes perm[i]
  const Isometry lam = shift(3.0);
  const Isometry lam_inv = lam.inverse();
  std::vector<double> w(4);
  for (int i = 0; i < 4; ++i) w[perm[i]] = prob.model().weight(i);
  std::vector<Edge> edges;
  for (const Edge& e : prob.edges()) {
    edges.push_back({perm[e.src], perm[e.dst], e.weight, compose(lam, compose(e.twist, lam_inv)), e.cls});
  }
  EquivariantProblem moved(MeasureModel(w), prob.target(), lam.apply(prob.base_point()), edges);

  auto phi = random_map(prob, 2.0, rng);
  std::vector<Point> pv(4);
  for (int i = 0; i < 4; ++i) pv[perm[i]] = lam.apply(phi.value(i));
  CHECK(energy(moved, EquivariantMap(moved.model(), moved.target(), pv)) == Approx(energy(prob, phi)).epsilon(1e-14));

  SolveReport a = minimize_energy(prob, phi, {.tol = 1e-12});
  SolveReport b = minimize_energy(moved, EquivariantMap(moved.model(), moved.target(), pv), {.tol = 1e-12});
  CHECK(a.energy == Approx(b.energy).epsilon(1e-10));
}

TEST_CASE("norm-minimal selection on flat energies") {
  for (double base : {0.0, 5.0}) {
    auto prob = generators::translation_loop(1, base);
    SolveReport r = norm_minimal_minimizer(prob);
    CHECK(r.cauchy_ok);
    CHECK(std::abs(r.solution.value(0).coord(0) - base) < 1e-6);
    CHECK(r.stage_gaps.size() == 19);
    for (std::size_t k = 1; k < r.stage_gaps.size(); ++k) CHECK(r.stage_gaps[k] <= r.stage_gaps[k - 1]);
    CHECK(r.stage_gaps.back() < 1e-6);
  }
  // Several cells: harmonic maps are u + c, and the anchor picks the c closest to the base point.
  auto prob = generators::translation_loop(4, 1.0);
  SolveReport r = norm_minimal_minimizer(prob);
  for (int i = 0; i < 4; ++i) CHECK(r.solution.value(i).coord(0) == Approx(1.0 + i / 4.0 - 0.375).epsilon(1e-6));
}

TEST_CASE("norm-minimal selection agrees with minimize_energy when the minimizer is unique") {
  auto prob = generators::dihedral_line(3);
  SolveReport direct = minimize_energy(prob, prob.constant_map(), {.tol = 1e-12});
  SolveReport nm = norm_minimal_minimizer(prob, {.tol = 1e-10});
  CHECK(nm.cauchy_ok);
  CHECK(rho(2, nm.solution, direct.solution) < 1e-6);

  SolveReport again = norm_minimal_minimizer(prob, {.tol = 1e-10}, default_schedule(), nm.solution);
  CHECK(rho(2, again.solution, nm.solution) < 1e-6);
}

TEST_CASE("norm-minimal output has minimal norm among sampled near-minimizers") {
  std::mt19937_64 rng(46);
  std::normal_distribution<double> n;
  auto prob = generators::translation_loop(3, 0.7);
  SolveReport r = norm_minimal_minimizer(prob, {.tol = 1e-10});
  const double tol = 1e-8;
  int tested = 0;
  for (int k = 0; k < 2000; ++k) {
    // Shifts keep the energy; small random moves may or may not.
    std::vector<double> v = values(r.solution);
    const double c = 0.5 * n(rng);
    for (double& x : v) x += c + (k % 2 ? 1e-5 * n(rng) : 0.0);
    auto phi = reals(prob.model(), v);
    if (energy(prob, phi) > r.energy + tol) continue;
    ++tested;
    // Exact shifts keep the energy; a slack of tol in energy allows moves of order sqrt(tol).
    const double slack = 10 * (k % 2 ? std::sqrt(tol) : tol);
    CHECK(map_norm(2, phi, prob.base_point()) >= r.norm - slack);
  }
  CHECK(tested >= 1000);
}

TEST_CASE("norm-minimal selection rejects nearly flat energies") {
  MeasureModel one = MeasureModel::uniform(1);
  EquivariantProblem shallow(one, Space::euclidean(1), Point::scalar(1.0),
                             {{0, 0, 2.5e-10, flip(0), 1}, {0, 0, 1.0, shift(0), 1}});
  CHECK_THROWS_AS((void)norm_minimal_minimizer(shallow), ConvergenceError);
  CHECK_THROWS_AS((void)norm_minimal_minimizer(shallow, {}, {0.5, 0.5}), DomainError);
}

TEST_CASE("lexicographic minimization") {
  auto consensus = generators::consensus(3);
  SolveReport a = lexicographic_minimize(consensus, {1});
  SolveReport b = minimize_energy(consensus, consensus.constant_map());
  CHECK(a.solution.values() == b.solution.values());

  // Independent cells: class 1 on cells 0, 1 and class 2 on cell 2.
  MeasureModel three = MeasureModel::uniform(3);
  Space r = Space::euclidean(1);
  EquivariantProblem split(three, r, Point::scalar(0),
                           {{0, 1, 1.0, shift(2), 1}, {1, 1, 1.0, flip(6), 1}, {2, 2, 1.0, flip(-1), 2}});
  SolveReport s = lexicographic_minimize(split, {1, 2});
  CHECK(s.solution.value(1).coord(0) == Approx(3.0));
  CHECK(s.solution.value(0).coord(0) == Approx(1.0));
  CHECK(s.solution.value(2).coord(0) == Approx(-0.5));
  CHECK(s.stage_minima.size() == 2);

  auto prod = generators::product_two_class();
  SolveReport lex = lexicographic_minimize(prod, {1, 2}, {.tol = 1e-10});
  CHECK(lex.stage_drift[0] <= 1e-10);
  // Factorwise problems solved on their own.
  MeasureModel one = MeasureModel::uniform(1);
  EquivariantProblem first(one, r, Point::scalar(0),
                           {{0, 0, std::exp(1.0), shift(0), 1}, {0, 0, 1.0, flip(2), 1}, {0, 0, 1.0, shift(1), 1},
                            {0, 0, 1.0, shift(-1), 1}});
  EquivariantProblem second(one, r, Point::scalar(0), {{0, 0, 1.0, flip(-4), 1}});
  const double x = minimize_energy(first, first.constant_map()).solution.value(0).coord(0);
  const double y = minimize_energy(second, second.constant_map()).solution.value(0).coord(0);
  CHECK(lex.solution.value(0).factors()[0].coord(0) == Approx(x));
  CHECK(lex.solution.value(0).factors()[1].coord(0) == Approx(y));
  CHECK(x == Approx(1.0));
  CHECK(y == Approx(-2.0));

  CHECK_THROWS_AS((void)lexicographic_minimize(prod, {3}), DomainError);
  CHECK_THROWS_AS((void)lexicographic_minimize(prod, {1, 1}), DomainError);
}

TEST_CASE("harmonic map properties") {
  auto consensus = generators::consensus(2);
  auto c1 = reals(consensus.model(), {2, 2});
  auto c2 = reals(consensus.model(), {-1, -1});
  CHECK(harmonic_properties_check(consensus, c1, c1).ok());
  CHECK(harmonic_properties_check(consensus, c1, c2).ok());

  auto flat = generators::translation_loop(1);
  auto zero = reals(flat.model(), {0});
  auto three = reals(flat.model(), {3});
  HarmonicReport rep = harmonic_properties_check(flat, zero, three);
  CHECK(rep.ok());
  CHECK(rep.midpoint_energy == Approx(energy(flat, zero)));
  CHECK(energy(flat, map_midpoint(zero, three)) == Approx(energy(flat, zero)));

  auto dihedral = generators::dihedral_line(4);
  SolveReport sol = minimize_energy(dihedral, dihedral.constant_map(), {.tol = 1e-12});
  HarmonicReport own = harmonic_properties_check(dihedral, sol.solution, sol.solution, 1e-6);
  CHECK(own.ok());
  CHECK(own.orbit_spread < 1e-6);
  // A non-harmonic map breaks the equal stretching of related edges.
  HarmonicReport bad = harmonic_properties_check(dihedral, reals(dihedral.model(), {0, 0.3, 0.31, 0.5}),
                                                 reals(dihedral.model(), {0, 0.3, 0.31, 0.5}));
  CHECK_FALSE(bad.orbit_constancy_ok);
  // Reflections reverse segments, so different maps are not parallel here.
  HarmonicReport skew = harmonic_properties_check(dihedral, sol.solution, reals(dihedral.model(), {0, 1, 2, 3}));
  CHECK_FALSE(skew.parallel_ok);
}

TEST_CASE("trace export") {
  auto prob = generators::product_two_class();
  SolveReport r = minimize_energy(prob, prob.constant_map());
  std::ostringstream out;
  write_trace_csv(out, r);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "sweep,energy_total,energy_class_1,energy_class_2,norm,max_move");
  std::getline(in, row);
  CHECK(row.rfind("0,", 0) == 0);
  int lines = 1;
  while (std::getline(in, row)) ++lines;
  CHECK(lines == static_cast<int>(r.trace.size()));
}
