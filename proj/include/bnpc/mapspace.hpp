#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bnpc/spaces.hpp"

namespace bnpc {

/// Finite probability space: one positive weight per cell, summing to 1.
class MeasureModel {
 public:
  explicit MeasureModel(std::vector<double> weights);
  static MeasureModel uniform(int cells);

  [[nodiscard]] int size() const { return static_cast<int>(weights_.size()); }
  [[nodiscard]] double weight(int cell) const { return weights_.at(cell); }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }

  bool operator==(const MeasureModel&) const = default;

 private:
  std::vector<double> weights_;
};

/// A map from the cells of a model into a target space.
class EquivariantMap {
 public:
  EquivariantMap(MeasureModel model, Space target, std::vector<Point> values);
  static EquivariantMap constant(MeasureModel model, Space target, const Point& x);

  [[nodiscard]] const MeasureModel& model() const { return model_; }
  [[nodiscard]] const Space& target() const { return target_; }
  [[nodiscard]] const std::vector<Point>& values() const { return values_; }
  [[nodiscard]] const Point& value(int cell) const { return values_.at(cell); }
  [[nodiscard]] int size() const { return model_.size(); }

  /// Same model and target; throws DomainError otherwise.
  void check_compatible(const EquivariantMap& other) const;

 private:
  MeasureModel model_;
  Space target_;
  std::vector<Point> values_;
};

/// Real function on the cells of a model, regarded as an element of L_p.
class ScalarField {
 public:
  ScalarField(MeasureModel model, std::vector<double> values, double p);

  [[nodiscard]] const MeasureModel& model() const { return model_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] double exponent() const { return p_; }
  [[nodiscard]] double norm() const;
  /// f o pi: cell i takes the value of cell perm[i]. The model must be invariant under perm.
  [[nodiscard]] ScalarField permuted(const std::vector<int>& perm) const;

 private:
  MeasureModel model_;
  std::vector<double> values_;
  double p_;
};

/// (sum_w mu(w) d(phi(w), psi(w))^p)^(1/p)
double rho(double p, const EquivariantMap& phi, const EquivariantMap& psi);
/// rho against the constant map at x0.
double map_norm(double p, const EquivariantMap& phi, const Point& x0);
EquivariantMap map_geodesic(const EquivariantMap& phi, const EquivariantMap& psi, double t);
EquivariantMap map_midpoint(const EquivariantMap& phi, const EquivariantMap& psi);

/// Modulus of convexity of L_p(0,1), computed numerically on the two-dimensional
/// space l_p^2 where it is attained. Tabulated per p on a log grid in eps and read at
/// the grid point below eps, so the value never exceeds the true modulus; 0 below 1e-3.
double banach_modulus(double p, double eps);

/// Certified linear lower bound delta(eps) for the modulus of convexity of a target:
/// Hilbert form for Euclidean spaces, banach_modulus for l_p, eps/2 for metric trees.
double closed_form_modulus(const Space& target, double eps);

/// tau(eps) = beta_p(delta(eps/4)^4)
double uc_tau(double p, const std::function<double(double)>& delta, double eps);

struct UcReport {
  double eps = 0.0;
  double tau = 0.0;
  double midpoint_distance = 0.0;
  double bound = 0.0;
  /// bound - midpoint_distance; negative means a violation.
  double slack = 0.0;
  bool violated = false;
  /// Whether delta(eps/4) is small enough for every inequality used in the proof.
  bool chain_conditions_ok = false;
};

/// Checks rho(m(phi1, phi2), psi) <= r (1 - tau(eps)) with eps = rho(phi1, phi2) / r.
UcReport uc_witness_check(double p, const std::function<double(double)>& delta, const EquivariantMap& psi,
                          const EquivariantMap& phi1, const EquivariantMap& phi2, double r);

/// M_{p,q}: f -> |f|^{p/q} sign(f), mapping the unit sphere of L_p onto that of L_q.
ScalarField mazur_map(const ScalarField& f, double p, double q);

}  // namespace bnpc
