#pragma once

#include <cstdint>
#include <vector>

#include "bnpc/harmonic.hpp"

namespace bnpc {

/// How one twist permutes the k cosets of a finite-index subgroup Gamma_0. Coset 0 is
/// Gamma_0 itself.
struct CosetAction {
  Isometry twist;
  std::vector<int> perm;
};

/// Finite-index subgroup of the group behind `base`, described by its coset action.
///
/// Maps on the cover are stored in coset coordinates: cell (i, c) holds r_c^-1 phi(r_c w_i)
/// for a coset representative r_c. The twists then stay as in the base model and a lifted
/// Gamma-equivariant map is constant across cosets. None of this depends on the choice of r_c.
struct CoverSpec {
  EquivariantProblem base;
  int index = 1;
  /// One entry per distinct edge twist; extra entries only take part in the consistency check.
  std::vector<CosetAction> actions;
  /// Words in the twists and their inverses up to this length must compose consistently.
  int check_length = 3;
};

/// Throws DomainError unless the permutations are well formed, cover every edge twist, and
/// compose like the twists on all words up to `check_length`.
void validate_cover(const CoverSpec& spec);

/// Cell (i, c) sits at index c * n + i. Each base edge i -> j with twist T lifts to the k
/// edges (i, c) -> (j, pi_T(c)); cell weights are split evenly over the cosets.
EquivariantProblem build_cover(const CoverSpec& spec);

/// Copies a base map onto every coset of the cover.
EquivariantMap lift_to_cover(const CoverSpec& spec, const EquivariantMap& base_phi);

/// Moves a map on a coarse cover to a finer one; `projection[c]` is the coarse coset
/// containing fine coset c. Throws DomainError if the projection is not equivariant.
EquivariantMap pull_back(const CoverSpec& coarse, const CoverSpec& fine, const std::vector<int>& projection,
                         const EquivariantMap& phi);

/// Isometries of Gamma_0 reached by words of length at most `check_length`, without repeats.
std::vector<Isometry> subgroup_elements(const CoverSpec& spec);

/// All-pairs commensurability energy of a cover. The probability weights of the cover carry
/// the 1/mu(Omega_0) normalization.
class CommEnergyModel {
 public:
  explicit CommEnergyModel(const CoverSpec& spec, double kernel_scale = 1.0, double truncation_residual = 0.0);

  [[nodiscard]] const EquivariantProblem& cover() const { return cover_; }
  [[nodiscard]] const std::vector<Isometry>& subgroup() const { return subgroup_; }
  [[nodiscard]] double kernel_scale() const { return scale_; }
  /// Relative kernel mass dropped by truncating the word sum.
  [[nodiscard]] double truncation_residual() const { return residual_; }

 private:
  EquivariantProblem cover_;
  std::vector<Isometry> subgroup_;
  double scale_;
  double residual_;
};

double i_energy(const CommEnergyModel& m, const EquivariantMap& phi);

/// Smallest ratio I(phi) / ||phi||^2 over random maps around the base point.
double coercivity_constant(const CommEnergyModel& m, int samples, double radius, std::uint64_t seed);

/// True when some sampled pair x != y has [g x, g y] parallel to [x, y] for every g in
/// `group`. False only means no such pair turned up.
bool parallel_orbits_check(const Space& s, const std::vector<Isometry>& group, const std::vector<std::pair<Point, Point>>& pairs,
                           double tol = 1e-9);
bool parallel_orbits_check(const EquivariantProblem& prob, int sample_pairs, std::uint64_t seed = 1);
bool parallel_orbits_check(const CommEnergyModel& m, int sample_pairs, std::uint64_t seed = 1);

struct Gamma0Report {
  SolveReport solve;
  SolveReport restart;
  /// rho between the two restarts.
  double restart_gap = 0.0;
  bool parallel_orbits = false;
  bool unique = false;
};

/// Minimizes i_energy from two random starts. Without parallel orbits the two must agree
/// within 10 tol, otherwise InvariantViolation; with parallel orbits a disagreement is
/// reported through `unique`.
Gamma0Report gamma0_harmonic(const CommEnergyModel& m, const SolverOptions& opts = {}, std::uint64_t seed = 1,
                             int sample_pairs = 200);

/// Cell a of the result holds lam^-1 phi(relabel[a]).
EquivariantMap conjugate_map(const EquivariantMap& phi, const Isometry& lam, const std::vector<int>& relabel);

/// Problem for lam^-1 Gamma_0 lam matching conjugate_map: edge a -> b with twist T becomes
/// relabel^-1(a) -> relabel^-1(b) with twist lam^-1 T lam, and weights follow the cells.
EquivariantProblem conjugate_problem(const EquivariantProblem& prob, const Isometry& lam, const std::vector<int>& relabel);

/// The cover of lam^-1 Gamma_0 lam: base conjugated as above, twists of the coset action
/// conjugated, permutations kept.
CoverSpec conjugate_cover(const CoverSpec& spec, const Isometry& lam, const std::vector<int>& relabel);

/// Extends a base-cell relabelling to the cover, coset by coset.
std::vector<int> cover_relabel(const CoverSpec& spec, const std::vector<int>& relabel);

}  // namespace bnpc
