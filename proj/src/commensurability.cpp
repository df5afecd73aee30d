#include "bnpc/commensurability.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <tuple>

#include "bnpc/convexity.hpp"

namespace bnpc {

namespace {

constexpr double kSignatureGrid = 1e-7;

// Points whose images pin down an isometry of s.
std::vector<Point> probes(const Space& s) {
  switch (s.kind()) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector: {
      std::vector<Point> out{s.origin()};
      for (int i = 0; i < s.dim(); ++i) {
        std::vector<double> e(s.dim(), 0.0);
        e[i] = 1.0;
        out.push_back(Point::vector(std::move(e)));
      }
      return out;
    }
    case SpaceKind::MetricTree: {
      std::vector<Point> out;
      for (int v = 0; v < s.topology().num_vertices(); ++v) out.push_back(Point::tree_vertex(v));
      return out;
    }
    case SpaceKind::Product: {
      std::vector<Point> base;
      for (const Space& f : s.factors()) base.push_back(f.origin());
      std::vector<Point> out{Point::product(base)};
      for (std::size_t k = 0; k < s.factors().size(); ++k) {
        for (const Point& p : probes(s.factors()[k])) {
          std::vector<Point> parts = base;
          parts[k] = p;
          out.push_back(Point::product(std::move(parts)));
        }
      }
      return out;
    }
  }
  return {};
}

// Distances from each probe image to every probe, on a fixed grid. Equal keys mean the
// isometries agree on the probes and hence everywhere.
using Signature = std::vector<long long>;

Signature signature(const Space& s, const std::vector<Point>& pr, const Isometry& t) {
  Signature key;
  key.reserve(pr.size() * pr.size());
  for (const Point& p : pr) {
    const Point img = t.apply(p);
    for (const Point& q : pr) key.push_back(std::llround(s.distance(img, q) / kSignatureGrid));
  }
  return key;
}

std::vector<int> compose_perm(const std::vector<int>& outer, const std::vector<int>& inner) {
  std::vector<int> out(inner.size());
  for (std::size_t c = 0; c < inner.size(); ++c) out[c] = outer[inner[c]];
  return out;
}

std::vector<int> invert_perm(const std::vector<int>& p) {
  std::vector<int> out(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) out[p[c]] = static_cast<int>(c);
  return out;
}

void check_bijection(const std::vector<int>& p, int n, const std::string& what) {
  if (static_cast<int>(p.size()) != n) throw DomainError(what + " must have " + std::to_string(n) + " entries");
  std::vector<bool> hit(n, false);
  for (int v : p) {
    if (v < 0 || v >= n || hit[v]) throw DomainError(what + " is not a bijection");
    hit[v] = true;
  }
}

struct Word {
  Isometry iso;
  std::vector<int> perm;
};

// Every element reached by words of length <= check_length, keyed by its signature.
// Two words with the same isometry but different coset permutations are rejected.
std::map<Signature, Word> enumerate_words(const CoverSpec& spec) {
  const Space& s = spec.base.target();
  const std::vector<Point> pr = probes(s);
  std::vector<Word> gens;
  for (const CosetAction& a : spec.actions) {
    gens.push_back({a.twist, a.perm});
    gens.push_back({a.twist.inverse(), invert_perm(a.perm)});
  }
  std::vector<int> id(spec.index);
  std::iota(id.begin(), id.end(), 0);
  std::map<Signature, Word> seen;
  seen.emplace(signature(s, pr, Isometry::identity(s)), Word{Isometry::identity(s), id});
  std::vector<Word> frontier{seen.begin()->second};
  for (int len = 1; len <= spec.check_length && !frontier.empty(); ++len) {
    std::vector<Word> next;
    for (const Word& w : frontier) {
      for (const Word& g : gens) {
        Word v{compose(g.iso, w.iso), compose_perm(g.perm, w.perm)};
        Signature key = signature(s, pr, v.iso);
        auto [it, fresh] = seen.emplace(std::move(key), v);
        if (fresh) {
          next.push_back(std::move(v));
        } else if (it->second.perm != v.perm) {
          throw DomainError("coset permutations are inconsistent: " + v.iso.to_string() +
                            " is reached with two different permutations");
        }
      }
    }
    frontier = std::move(next);
  }
  return seen;
}

const CosetAction* find_action(const CoverSpec& spec, const std::vector<Point>& pr, const Isometry& t) {
  const Signature key = signature(spec.base.target(), pr, t);
  for (const CosetAction& a : spec.actions) {
    if (signature(spec.base.target(), pr, a.twist) == key) return &a;
  }
  return nullptr;
}

EquivariantMap random_map(const EquivariantProblem& prob, double radius, Rng& rng) {
  std::vector<Point> v;
  for (int i = 0; i < prob.num_cells(); ++i) v.push_back(prob.target().sample(prob.base_point(), radius, rng));
  return {prob.model(), prob.target(), std::move(v)};
}

// The kernel is symmetric when every edge mass mu(a) w on (a, b, T) is matched by the
// same mass on (b, a, T^-1).
void check_symmetric(const EquivariantProblem& prob) {
  const Space& s = prob.target();
  const std::vector<Point> pr = probes(s);
  using Key = std::tuple<int, int, int, Signature>;
  std::map<Key, double> mass;
  for (const Edge& e : prob.edges()) {
    const double m = prob.model().weight(e.src) * e.weight;
    mass[{e.src, e.dst, e.cls, signature(s, pr, e.twist)}] += m;
  }
  for (const auto& [key, m] : mass) {
    const auto& [a, b, cls, sig] = key;
    // Recover an isometry with this signature from the edge list to invert it.
    for (const Edge& e : prob.edges()) {
      if (e.src != a || e.dst != b || e.cls != cls || signature(s, pr, e.twist) != sig) continue;
      const auto it = mass.find({b, a, cls, signature(s, pr, e.twist.inverse())});
      const double back = it == mass.end() ? 0.0 : it->second;
      if (std::abs(back - m) > 1e-9 * std::max(m, back)) {
        throw DomainError("kernel is not symmetric: cells " + std::to_string(a) + " -> " + std::to_string(b) +
                          " carry mass " + std::to_string(m) + " but the reverse carries " + std::to_string(back));
      }
      break;
    }
  }
}

}  // namespace

void validate_cover(const CoverSpec& spec) {
  if (spec.index < 1) throw DomainError("cover index must be at least 1");
  if (spec.check_length < 2) throw DomainError("check_length must be at least 2");
  const Space& s = spec.base.target();
  for (std::size_t a = 0; a < spec.actions.size(); ++a) {
    const CosetAction& act = spec.actions[a];
    act.twist.check_for(s);
    check_bijection(act.perm, spec.index, "coset permutation " + std::to_string(a));
  }
  const std::vector<Point> pr = probes(s);
  for (std::size_t k = 0; k < spec.base.edges().size(); ++k) {
    if (!find_action(spec, pr, spec.base.edges()[k].twist)) {
      throw DomainError("edge " + std::to_string(k) + ": no coset permutation for twist " +
                        spec.base.edges()[k].twist.to_string());
    }
  }
  (void)enumerate_words(spec);
}

EquivariantProblem build_cover(const CoverSpec& spec) {
  validate_cover(spec);
  const EquivariantProblem& base = spec.base;
  const int n = base.num_cells();
  const int k = spec.index;
  std::vector<double> w;
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < n; ++i) {
      w.push_back(base.model().weight(i) / k);
      total += w.back();
    }
  }
  if (k > 1) {
    for (double& v : w) v /= total;
  }
  const std::vector<Point> pr = probes(base.target());
  std::vector<const CosetAction*> acts;
  for (const Edge& e : base.edges()) acts.push_back(find_action(spec, pr, e.twist));
  std::vector<Edge> edges;
  for (int c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < base.edges().size(); ++j) {
      const Edge& e = base.edges()[j];
      edges.push_back({c * n + e.src, acts[j]->perm[c] * n + e.dst, e.weight, e.twist, e.cls});
    }
  }
  const int m = static_cast<int>(base.edges().size());
  std::vector<std::vector<int>> orbits;
  for (const auto& group : base.edge_orbits()) {
    std::vector<int> lifted;
    for (int c = 0; c < k; ++c) {
      for (int j : group) lifted.push_back(c * m + j);
    }
    orbits.push_back(std::move(lifted));
  }
  EquivariantProblem cover(MeasureModel(std::move(w)), base.target(), base.base_point(), std::move(edges), base.p());
  return cover.with_edge_orbits(std::move(orbits));
}

EquivariantMap lift_to_cover(const CoverSpec& spec, const EquivariantMap& base_phi) {
  if (!(base_phi.model() == spec.base.model()) || !(base_phi.target() == spec.base.target())) {
    throw DomainError("map does not live on the base model of the cover");
  }
  std::vector<Point> v;
  for (int c = 0; c < spec.index; ++c) v.insert(v.end(), base_phi.values().begin(), base_phi.values().end());
  const EquivariantProblem cover = build_cover(spec);
  return {cover.model(), cover.target(), std::move(v)};
}

EquivariantMap pull_back(const CoverSpec& coarse, const CoverSpec& fine, const std::vector<int>& projection,
                         const EquivariantMap& phi) {
  const int n = coarse.base.num_cells();
  if (fine.base.num_cells() != n || !(fine.base.target() == coarse.base.target())) {
    throw DomainError("covers are built over different base models");
  }
  if (static_cast<int>(projection.size()) != fine.index) throw DomainError("projection needs one entry per fine coset");
  for (int c : projection) {
    if (c < 0 || c >= coarse.index) throw DomainError("projection points outside the coarse cosets");
  }
  if (projection[0] != 0) throw DomainError("projection must send the subgroup coset to the subgroup coset");
  const std::vector<Point> pr = probes(fine.base.target());
  for (const CosetAction& a : fine.actions) {
    const CosetAction* b = find_action(coarse, pr, a.twist);
    if (!b) continue;
    for (int c = 0; c < fine.index; ++c) {
      if (projection[a.perm[c]] != b->perm[projection[c]]) {
        throw DomainError("projection does not intertwine the coset actions of " + a.twist.to_string());
      }
    }
  }
  const EquivariantProblem coarse_cover = build_cover(coarse);
  if (!(phi.model() == coarse_cover.model())) throw DomainError("map does not live on the coarse cover");
  std::vector<Point> v;
  for (int c = 0; c < fine.index; ++c) {
    for (int i = 0; i < n; ++i) v.push_back(phi.value(projection[c] * n + i));
  }
  const EquivariantProblem fine_cover = build_cover(fine);
  return {fine_cover.model(), fine_cover.target(), std::move(v)};
}

std::vector<Isometry> subgroup_elements(const CoverSpec& spec) {
  std::vector<Isometry> out;
  for (const auto& [key, w] : enumerate_words(spec)) {
    if (w.perm[0] == 0 && !w.iso.is_identity()) out.push_back(w.iso);
  }
  return out;
}

CommEnergyModel::CommEnergyModel(const CoverSpec& spec, double kernel_scale, double truncation_residual)
    : cover_(build_cover(spec)), subgroup_(subgroup_elements(spec)), scale_(kernel_scale),
      residual_(truncation_residual) {
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) throw DomainError("kernel scale must be positive and finite");
  if (!(residual_ >= 0.0) || !(residual_ < 1e-9)) {
    throw DomainError("kernel truncation residual must be below 1e-9 of the total mass");
  }
  check_symmetric(cover_);
}

double i_energy(const CommEnergyModel& m, const EquivariantMap& phi) { return m.kernel_scale() * energy(m.cover(), phi); }

double coercivity_constant(const CommEnergyModel& m, int samples, double radius, std::uint64_t seed) {
  if (samples < 1) throw DomainError("need at least one sample");
  Rng rng(seed);
  const EquivariantProblem& prob = m.cover();
  double best = INFINITY;
  for (int k = 0; k < samples; ++k) {
    const EquivariantMap phi = random_map(prob, radius, rng);
    const double norm = std::pow(map_norm(prob.p(), phi, prob.base_point()), prob.p());
    if (norm > 0.0) best = std::min(best, i_energy(m, phi) / norm);
  }
  return best;
}

bool parallel_orbits_check(const Space& s, const std::vector<Isometry>& group,
                           const std::vector<std::pair<Point, Point>>& pairs, double tol) {
  for (const auto& [x, y] : pairs) {
    if (s.distance(x, y) <= tol) continue;
    bool all_parallel = true;
    for (const Isometry& g : group) {
      if (!parallel_check(s, g.apply(x), g.apply(y), x, y, tol)) {
        all_parallel = false;
        break;
      }
    }
    if (all_parallel) return true;
  }
  return false;
}

namespace {

bool sampled_parallel(const Space& s, const Point& center, const std::vector<Isometry>& group, int sample_pairs,
                      std::uint64_t seed) {
  if (sample_pairs < 1) throw DomainError("need at least one sample pair");
  Rng rng(seed);
  std::vector<std::pair<Point, Point>> pairs;
  for (int k = 0; k < sample_pairs; ++k) pairs.emplace_back(s.sample(center, 3.0, rng), s.sample(center, 3.0, rng));
  return parallel_orbits_check(s, group, pairs);
}

}  // namespace

bool parallel_orbits_check(const EquivariantProblem& prob, int sample_pairs, std::uint64_t seed) {
  std::vector<Isometry> group;
  for (const Edge& e : prob.edges()) group.push_back(e.twist);
  return sampled_parallel(prob.target(), prob.base_point(), group, sample_pairs, seed);
}

bool parallel_orbits_check(const CommEnergyModel& m, int sample_pairs, std::uint64_t seed) {
  return sampled_parallel(m.cover().target(), m.cover().base_point(), m.subgroup(), sample_pairs, seed);
}

Gamma0Report gamma0_harmonic(const CommEnergyModel& m, const SolverOptions& opts, std::uint64_t seed,
                             int sample_pairs) {
  const EquivariantProblem& prob = m.cover();
  const bool parallel = parallel_orbits_check(m, sample_pairs, seed);
  Rng rng(seed);
  const EquivariantMap a = random_map(prob, 4.0, rng);
  const EquivariantMap b = random_map(prob, 4.0, rng);
  auto run = [&](const EquivariantMap& init) {
    SolveReport r = minimize_energy(prob, init, opts);
    r.energy *= m.kernel_scale();
    for (double& v : r.class_energy) v *= m.kernel_scale();
    return r;
  };
  Gamma0Report rep{.solve = run(a), .restart = run(b), .parallel_orbits = parallel};
  rep.restart_gap = rho(prob.p(), rep.solve.solution, rep.restart.solution);
  rep.unique = rep.restart_gap <= 10.0 * opts.tol;
  if (!rep.unique && !rep.parallel_orbits) {
    throw InvariantViolation("restarts disagree by " + std::to_string(rep.restart_gap) +
                             " although no parallel orbits were found");
  }
  return rep;
}

EquivariantMap conjugate_map(const EquivariantMap& phi, const Isometry& lam, const std::vector<int>& relabel) {
  check_bijection(relabel, phi.size(), "relabel");
  lam.check_for(phi.target());
  const Isometry inv = lam.inverse();
  std::vector<double> w(phi.size());
  std::vector<Point> v(phi.size());
  for (int a = 0; a < phi.size(); ++a) {
    w[a] = phi.model().weight(relabel[a]);
    v[a] = inv.apply(phi.value(relabel[a]));
  }
  return {MeasureModel(std::move(w)), phi.target(), std::move(v)};
}

EquivariantProblem conjugate_problem(const EquivariantProblem& prob, const Isometry& lam, const std::vector<int>& relabel) {
  check_bijection(relabel, prob.num_cells(), "relabel");
  lam.check_for(prob.target());
  const Isometry inv = lam.inverse();
  const std::vector<int> back = invert_perm(relabel);
  std::vector<double> w(prob.num_cells());
  for (int a = 0; a < prob.num_cells(); ++a) w[a] = prob.model().weight(relabel[a]);
  std::vector<Edge> edges;
  for (const Edge& e : prob.edges()) {
    edges.push_back({back[e.src], back[e.dst], e.weight, compose(inv, compose(e.twist, lam)), e.cls});
  }
  EquivariantProblem out(MeasureModel(std::move(w)), prob.target(), inv.apply(prob.base_point()), std::move(edges),
                         prob.p());
  return out.with_edge_orbits(prob.edge_orbits());
}

CoverSpec conjugate_cover(const CoverSpec& spec, const Isometry& lam, const std::vector<int>& relabel) {
  const Isometry inv = lam.inverse();
  CoverSpec out{conjugate_problem(spec.base, lam, relabel), spec.index, {}, spec.check_length};
  for (const CosetAction& a : spec.actions) out.actions.push_back({compose(inv, compose(a.twist, lam)), a.perm});
  return out;
}

std::vector<int> cover_relabel(const CoverSpec& spec, const std::vector<int>& relabel) {
  const int n = spec.base.num_cells();
  check_bijection(relabel, n, "relabel");
  std::vector<int> out;
  for (int c = 0; c < spec.index; ++c) {
    for (int i = 0; i < n; ++i) out.push_back(c * n + relabel[i]);
  }
  return out;
}

}  // namespace bnpc
