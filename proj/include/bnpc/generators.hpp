#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "bnpc/commensurability.hpp"
#include "bnpc/harmonic.hpp"

namespace bnpc::generators {

/// Steps k of the word norm with weight h(k) = exp(-k^2 + 1), kept while h >= 1e-12.
std::vector<std::pair<int, double>> word_weights();

/// Cells joined in a chain by identity-twisted edges in both directions.
EquivariantProblem consensus(int cells = 2, std::optional<Space> target = std::nullopt);

/// Z acting on R by unit translations; cells at i/n in [0, 1) with steps k/n.
/// Every translate of a harmonic map is harmonic, so the energy is flat.
EquivariantProblem translation_loop(int cells = 1, double base = 0.0);

/// The infinite dihedral group generated by x -> x + 1 and x -> -x acting on R.
/// Cells at u_i = i / (2(n - 1)) cover [0, 1/2] with trapezoid weights; the
/// harmonic map is u_i -> u_i.
EquivariantProblem dihedral_line(int cells = 3);

/// One cell in R x R. Class 1 acts on the first factor (reflection about 1 and unit
/// translations), class 2 on the second (reflection about -2).
EquivariantProblem product_two_class();

/// Kernel mass beyond the truncated steps, relative to the kept mass.
double word_weight_residual();

enum class DihedralSubgroup {
  /// <x -> x + k, x -> -x>: index k, itself dihedral, no parallel orbits.
  Dihedral,
  /// Translations by (k/2) Z: index k (k even), normal, every orbit pair is parallel.
  Translation,
};

/// Finite-index subgroup of the dihedral model's group, as a cover of dihedral_line(cells).
CoverSpec dihedral_cover(int k, DihedralSubgroup subgroup = DihedralSubgroup::Dihedral, int cells = 3);

/// Index-k subgroup kZ of a model whose twists are integer translations of R.
CoverSpec cyclic_cover(const EquivariantProblem& base, int k);

}  // namespace bnpc::generators
