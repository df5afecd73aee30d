#include "bnpc/generators.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>

namespace bnpc::generators {

namespace {

constexpr double kWeightCutoff = 1e-12;

Isometry shift(double t) { return Isometry::translation({t}); }
// x -> c - x
Isometry flip(double c) { return Isometry::signed_permutation({0}, {-1}, {c}); }

// Edges with the same step length are related by the action, so a harmonic map
// stretches them equally.
std::vector<std::vector<int>> orbits(const std::map<int, std::vector<int>>& by_step) {
  std::vector<std::vector<int>> out;
  for (const auto& [step, ids] : by_step) out.push_back(ids);
  return out;
}

// Element of the infinite dihedral group: x -> x + n, or x -> n - x when `reflect`.
struct Dihedral {
  bool reflect = false;
  long n = 0;
};

Dihedral classify(const Isometry& t) {
  const double at0 = t.apply(Point::scalar(0.0)).coord(0);
  const double slope = t.apply(Point::scalar(1.0)).coord(0) - at0;
  const long n = std::lround(at0);
  if (std::abs(at0 - n) > 1e-9 || std::abs(std::abs(slope) - 1.0) > 1e-9) {
    throw DomainError("twist " + t.to_string() + " is not an integral dihedral motion of R");
  }
  return {slope < 0.0, n};
}

// a o b
Dihedral operator*(Dihedral a, Dihedral b) {
  if (!a.reflect) return {b.reflect, a.n + b.n};
  return {!b.reflect, a.n - b.n};
}

Dihedral inverse(Dihedral a) { return a.reflect ? a : Dihedral{false, -a.n}; }

long mod(long a, long m) { return ((a % m) + m) % m; }

// pi_T(c) = coset of r_c T^-1, for every distinct twist of the base.
CoverSpec coset_cover(const EquivariantProblem& base, int k, const std::function<Dihedral(int)>& rep,
                      const std::function<int(Dihedral)>& coset) {
  std::vector<CosetAction> actions;
  std::set<std::pair<bool, long>> seen;
  for (const Edge& e : base.edges()) {
    const Dihedral t = classify(e.twist);
    if (!seen.insert({t.reflect, t.n}).second) continue;
    std::vector<int> perm(k);
    for (int c = 0; c < k; ++c) perm[c] = coset(rep(c) * inverse(t));
    actions.push_back({e.twist, std::move(perm)});
  }
  return {base, k, std::move(actions)};
}

}  // namespace

std::vector<std::pair<int, double>> word_weights() {
  std::vector<std::pair<int, double>> out;
  for (int k = 0;; ++k) {
    const double h = std::exp(-static_cast<double>(k) * k + 1.0);
    if (h < kWeightCutoff) break;
    out.push_back({k, h});
    if (k > 0) out.push_back({-k, h});
  }
  return out;
}

EquivariantProblem consensus(int cells, std::optional<Space> target) {
  if (cells < 2) throw DomainError("consensus needs at least two cells");
  Space s = target ? *target : Space::euclidean(1);
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < cells; ++i) {
    edges.push_back({i, i + 1, 1.0, Isometry::identity(s), 1});
    edges.push_back({i + 1, i, 1.0, Isometry::identity(s), 1});
  }
  Point base = s.origin();
  return {MeasureModel::uniform(cells), std::move(s), std::move(base), std::move(edges)};
}

EquivariantProblem translation_loop(int cells, double base) {
  if (cells < 1) throw DomainError("translation loop needs at least one cell");
  std::vector<Edge> edges;
  std::map<int, std::vector<int>> by_step;
  for (int i = 0; i < cells; ++i) {
    for (auto [k, h] : word_weights()) {
      by_step[std::abs(k)].push_back(static_cast<int>(edges.size()));
      // u_i + k/n = u_j + t with t an integer; the edge carries the inverse translate.
      const int n = i + k;
      const int j = ((n % cells) + cells) % cells;
      const int t = (n - j) / cells;
      edges.push_back({i, j, h, shift(-t), 1});
    }
  }
  EquivariantProblem prob(MeasureModel::uniform(cells), Space::euclidean(1), Point::scalar(base), std::move(edges));
  return prob.with_edge_orbits(orbits(by_step));
}

EquivariantProblem dihedral_line(int cells) {
  if (cells < 2) throw DomainError("dihedral line needs at least two cells");
  const int period = 2 * (cells - 1);  // grid steps per unit translation
  std::vector<double> w(cells, 1.0);
  w.front() = w.back() = 0.5;
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;

  std::vector<Edge> edges;
  std::map<int, std::vector<int>> by_step;
  for (int i = 0; i < cells; ++i) {
    for (auto [k, h] : word_weights()) {
      const std::size_t first = edges.size();
      const int n = i + k;
      const int r = ((n % period) + period) % period;
      const int t = (n - r) / period;
      if (r == 0 || r == cells - 1) {
        // Endpoints are fixed by a reflection, so the landing point has a translate
        // and a reflected representative; the weight is shared between them.
        edges.push_back({i, r, 0.5 * h, shift(-t), 1});
        edges.push_back({i, r, 0.5 * h, flip(r == 0 ? t : t + 1.0), 1});
      } else if (r < cells - 1) {
        // u_i + k s = t + u_r
        edges.push_back({i, r, h, shift(-t), 1});
      } else {
        // u_i + k s = (t + 1) - u_{period - r}; that map is its own inverse.
        edges.push_back({i, period - r, h, flip(t + 1.0), 1});
      }
      for (std::size_t e = first; e < edges.size(); ++e) by_step[std::abs(k)].push_back(static_cast<int>(e));
    }
  }
  EquivariantProblem prob(MeasureModel(std::move(w)), Space::euclidean(1), Point::scalar(0.0), std::move(edges));
  return prob.with_edge_orbits(orbits(by_step));
}

EquivariantProblem product_two_class() {
  const Space r = Space::euclidean(1);
  const Space s = Space::product({r, r});
  auto on_first = [&](Isometry t) { return Isometry::product({std::move(t), Isometry::identity(r)}); };
  auto on_second = [&](Isometry t) { return Isometry::product({Isometry::identity(r), std::move(t)}); };
  const double h1 = std::exp(0.0);
  std::vector<Edge> edges{
      {0, 0, std::exp(1.0), Isometry::identity(s), 1},
      {0, 0, 1.0, on_first(flip(2.0)), 1},
      {0, 0, h1, on_first(shift(1.0)), 1},
      {0, 0, h1, on_first(shift(-1.0)), 1},
      {0, 0, 1.0, on_second(flip(-4.0)), 2},
  };
  return {MeasureModel::uniform(1), s, s.origin(), std::move(edges)};
}

double word_weight_residual() {
  double kept = 0.0;
  for (auto [k, h] : word_weights()) kept += h;
  double tail = 0.0;
  for (int k = static_cast<int>(word_weights().size() / 2) + 1; k < 40; ++k) tail += 2.0 * std::exp(-double(k) * k + 1.0);
  return tail / kept;
}

CoverSpec dihedral_cover(int k, DihedralSubgroup subgroup, int cells) {
  if (k < 1) throw DomainError("cover index must be at least 1");
  const EquivariantProblem base = dihedral_line(cells);
  if (subgroup == DihedralSubgroup::Dihedral) {
    // Cosets of <t_k, r_0> are indexed by n mod k for t_n and by -c mod k for r_c.
    return coset_cover(
        base, k, [](int c) { return Dihedral{false, c}; },
        [k](Dihedral g) { return static_cast<int>(mod(g.reflect ? -g.n : g.n, k)); });
  }
  if (k % 2 != 0) throw DomainError("translation subgroups have even index");
  const int m = k / 2;
  return coset_cover(
      base, k, [m](int c) { return c < m ? Dihedral{false, c} : Dihedral{true, c - m}; },
      [m](Dihedral g) { return static_cast<int>((g.reflect ? m : 0) + mod(g.n, m)); });
}

CoverSpec cyclic_cover(const EquivariantProblem& base, int k) {
  if (k < 1) throw DomainError("cover index must be at least 1");
  if (!(base.target() == Space::euclidean(1))) throw DomainError("cyclic covers need a model on R");
  for (const Edge& e : base.edges()) {
    if (classify(e.twist).reflect) throw DomainError("cyclic covers need translation twists only");
  }
  return coset_cover(
      base, k, [](int c) { return Dihedral{false, c}; }, [k](Dihedral g) { return static_cast<int>(mod(g.n, k)); });
}

}  // namespace bnpc::generators
