#pragma once

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bnpc/mapspace.hpp"
#include "bnpc/spaces.hpp"

namespace bnpc {

/// Directed edge of the quotient model. Contributes
/// mu(src) * weight * d(twist(phi(src)), phi(dst))^p to the energy.
struct Edge {
  int src = 0;
  int dst = 0;
  double weight = 1.0;
  Isometry twist;
  /// Energy class, 1-based.
  int cls = 1;
};

/// Finite weighted quotient graph with isometry-labelled edges: the discrete
/// stand-in for a fundamental domain together with the weight h on G_1.
class EquivariantProblem {
 public:
  EquivariantProblem(MeasureModel model, Space target, Point base_point, std::vector<Edge> edges, double p = 2.0);

  [[nodiscard]] const MeasureModel& model() const { return model_; }
  [[nodiscard]] const Space& target() const { return target_; }
  [[nodiscard]] const Point& base_point() const { return base_; }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] double p() const { return p_; }
  [[nodiscard]] int num_cells() const { return model_.size(); }
  [[nodiscard]] int num_classes() const { return classes_; }
  /// Non-fatal findings from validation, e.g. a twist set without the identity.
  [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }

  /// Groups of edges related by a declared symmetry of the model. Harmonic maps
  /// have equal edge distances within each group.
  [[nodiscard]] const std::vector<std::vector<int>>& edge_orbits() const { return orbits_; }
  [[nodiscard]] EquivariantProblem with_edge_orbits(std::vector<std::vector<int>> orbits) const;

  [[nodiscard]] EquivariantMap constant_map() const { return EquivariantMap::constant(model_, target_, base_); }

 private:
  MeasureModel model_;
  Space target_;
  Point base_;
  std::vector<Edge> edges_;
  double p_;
  int classes_ = 1;
  std::vector<std::string> warnings_;
  std::vector<std::vector<int>> orbits_;
};

/// Energy over the edges whose class is in `classes` (all edges when empty).
double energy(const EquivariantProblem& prob, const EquivariantMap& phi,
              const std::optional<std::set<int>>& classes = std::nullopt);

/// Minimizer of sum_i w_i d(x, pts_i)^p. Exact weighted mean for Euclidean p = 2.
Point frechet_mean(const Space& s, const std::vector<Point>& pts, const std::vector<double>& weights, double p = 2.0,
                   double tol = 1e-9);

enum class SweepMode { GaussSeidel, Jacobi };

struct SolverOptions {
  double tol = 1e-9;
  int max_sweeps = 20000;
  SweepMode mode = SweepMode::GaussSeidel;
  /// Worker threads for Jacobi sweeps; the result does not depend on it.
  int threads = 1;
  /// For Euclidean targets with p = 2, follow each sweep with an exact solve of the
  /// whole quadratic, kept only when it lowers the objective.
  bool exact_quadratic = true;
};

struct TraceRow {
  int sweep = 0;
  double energy = 0.0;
  std::vector<double> class_energy;
  double norm = 0.0;
  double max_move = 0.0;
};

struct SolveReport {
  EquivariantMap solution;
  double energy = 0.0;
  std::vector<double> class_energy{};
  double norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<TraceRow> trace{};
  /// Norm-minimal homotopy: rho between consecutive stages.
  std::vector<double> stage_gaps{};
  bool cauchy_ok = false;
  /// Lexicographic stages: minimum reached per stage and the worst later drift of each.
  std::vector<double> stage_minima{};
  std::vector<double> stage_drift{};
};

/// Cyclic block-coordinate descent; each block update minimizes the energy in one cell.
/// The objective never increases from one sweep to the next.
SolveReport minimize_energy(const EquivariantProblem& prob, const EquivariantMap& phi_init,
                            const SolverOptions& opts = {});

/// lambda_n = 2^-n for n = 1..20.
std::vector<double> default_schedule();

/// Minimizes E + lambda_n rho(., x0)^p along the schedule, warm starting each stage, then
/// polishes with lambda = 0. Throws ConvergenceError when the stages are not Cauchy.
SolveReport norm_minimal_minimizer(const EquivariantProblem& prob, const SolverOptions& opts = {},
                                   const std::vector<double>& schedule = default_schedule(),
                                   const std::optional<EquivariantMap>& init = std::nullopt);

/// Minimizes the class energies in the given order, each among minimizers of the earlier ones.
SolveReport lexicographic_minimize(const EquivariantProblem& prob, const std::vector<int>& class_order,
                                   const SolverOptions& opts = {});

struct HarmonicReport {
  bool midpoint_ok = false;
  double midpoint_energy = 0.0;
  bool parallel_ok = false;
  /// Edge with the largest parallelism defect, or -1.
  int worst_edge = -1;
  double parallel_defect = 0.0;
  bool orbit_constancy_ok = true;
  double orbit_spread = 0.0;
  /// Largest d(twist(phi(c)), phi(c)); reported, never asserted.
  double orbit_diameter = 0.0;
  [[nodiscard]] bool ok() const { return midpoint_ok && parallel_ok && orbit_constancy_ok; }
};

HarmonicReport harmonic_properties_check(const EquivariantProblem& prob, const EquivariantMap& phi,
                                         const EquivariantMap& psi, double tol = 1e-6);

/// Trace as CSV: sweep, energy_total, energy_class_1.., norm, max_move.
void write_trace_csv(std::ostream& out, const SolveReport& report);

namespace detail {

/// Objective E_w(phi) + anchor * rho(phi, x0)^p where E_w scales class c by class_weights[c-1].
struct Objective {
  std::vector<double> class_weights;
  double anchor = 0.0;
};

SolveReport block_descent(const EquivariantProblem& prob, const EquivariantMap& init, const Objective& obj,
                          const SolverOptions& opts);

double objective_value(const EquivariantProblem& prob, const EquivariantMap& phi, const Objective& obj);

}  // namespace detail

}  // namespace bnpc
