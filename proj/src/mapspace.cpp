#include "bnpc/mapspace.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace bnpc {

// ---------------------------------------------------------------------------
// Models and maps

MeasureModel::MeasureModel(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw DomainError("measure model needs at least one cell");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("cell weights must be positive and finite");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("cell weights must sum to 1");
}

MeasureModel MeasureModel::uniform(int cells) {
  if (cells < 1) throw DomainError("measure model needs at least one cell");
  return MeasureModel(std::vector<double>(cells, 1.0 / cells));
}

EquivariantMap::EquivariantMap(MeasureModel model, Space target, std::vector<Point> values)
    : model_(std::move(model)), target_(std::move(target)), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != model_.size()) throw DomainError("map needs one value per cell");
  for (const Point& v : values_) target_.validate(v);
}

EquivariantMap EquivariantMap::constant(MeasureModel model, Space target, const Point& x) {
  const int n = model.size();
  return EquivariantMap(std::move(model), std::move(target), std::vector<Point>(n, x));
}

void EquivariantMap::check_compatible(const EquivariantMap& other) const {
  if (!(model_ == other.model_)) throw DomainError("maps are defined over different models");
  if (!(target_ == other.target_)) throw DomainError("maps take values in different spaces");
}

ScalarField::ScalarField(MeasureModel model, std::vector<double> values, double p)
    : model_(std::move(model)), values_(std::move(values)), p_(p) {
  if (static_cast<int>(values_.size()) != model_.size()) throw DomainError("field needs one value per cell");
  for (double v : values_) {
    if (!std::isfinite(v)) throw DomainError("field values must be finite");
  }
  if (!(p_ >= 1.0) || !std::isfinite(p_)) throw DomainError("field exponent must be in [1, inf)");
}

double ScalarField::norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  if (m == 0.0) return 0.0;
  double s = 0.0;
  for (int i = 0; i < model_.size(); ++i) s += model_.weight(i) * std::pow(std::abs(values_[i]) / m, p_);
  return m * std::pow(s, 1.0 / p_);
}

ScalarField ScalarField::permuted(const std::vector<int>& perm) const {
  const int n = model_.size();
  if (static_cast<int>(perm.size()) != n) throw DomainError("permutation has the wrong size");
  std::vector<char> seen(n, 0);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const int j = perm[i];
    if (j < 0 || j >= n || seen[j]++) throw DomainError("not a permutation of the cells");
    if (model_.weight(i) != model_.weight(j)) throw DomainError("permutation does not preserve the measure");
    out[i] = values_[j];
  }
  return {model_, std::move(out), p_};
}

// ---------------------------------------------------------------------------
// Metric

double rho(double p, const EquivariantMap& phi, const EquivariantMap& psi) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("rho needs 1 <= p < inf");
  phi.check_compatible(psi);
  const Space& s = phi.target();
  std::vector<double> d(phi.size());
  double m = 0.0;
  for (int i = 0; i < phi.size(); ++i) {
    d[i] = s.distance(phi.value(i), psi.value(i));
    m = std::max(m, d[i]);
  }
  if (m == 0.0) return 0.0;
  double total = 0.0;
  for (int i = 0; i < phi.size(); ++i) total += phi.model().weight(i) * std::pow(d[i] / m, p);
  return m * std::pow(total, 1.0 / p);
}

double map_norm(double p, const EquivariantMap& phi, const Point& x0) {
  return rho(p, phi, EquivariantMap::constant(phi.model(), phi.target(), x0));
}

EquivariantMap map_geodesic(const EquivariantMap& phi, const EquivariantMap& psi, double t) {
  phi.check_compatible(psi);
  std::vector<Point> out;
  out.reserve(phi.size());
  for (int i = 0; i < phi.size(); ++i) out.push_back(phi.target().geodesic_point(phi.value(i), psi.value(i), t));
  return {phi.model(), phi.target(), std::move(out)};
}

EquivariantMap map_midpoint(const EquivariantMap& phi, const EquivariantMap& psi) {
  return map_geodesic(phi, psi, 0.5);
}

// ---------------------------------------------------------------------------
// Banach modulus of L_p

namespace {

double norm2(double x, double y, double p) {
  const double m = std::max(std::abs(x), std::abs(y));
  if (m == 0.0) return 0.0;
  return m * std::pow(std::pow(std::abs(x) / m, p) + std::pow(std::abs(y) / m, p), 1.0 / p);
}

// 1 - |(f + g)/2| for unit f at angle a and the unit g further along the circle with |f - g| = eps.
double pair_gap(double p, double eps, double a) {
  auto unit = [p](double t, double& x, double& y) {
    x = std::cos(t);
    y = std::sin(t);
    const double n = norm2(x, y, p);
    x /= n;
    y /= n;
  };
  double fx, fy;
  unit(a, fx, fy);
  double lo = a, hi = a + std::numbers::pi;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    double gx, gy;
    unit(mid, gx, gy);
    if (norm2(fx - gx, fy - gy, p) >= eps) hi = mid;
    else lo = mid;
  }
  double gx, gy;
  unit(hi, gx, gy);
  return 1.0 - norm2(0.5 * (fx + gx), 0.5 * (fy + gy), p);
}

double modulus_direct(double p, double eps) {
  if (eps <= 0.0) return 0.0;
  if (eps >= 2.0) return 1.0;
  // l_p^2 is invariant under the quarter turn, so f ranges over a quarter of the circle.
  constexpr int kGrid = 256;
  const double h = 0.5 * std::numbers::pi / kGrid;
  int best_k = 0;
  double best = 2.0;
  for (int k = 0; k < kGrid; ++k) {
    const double v = pair_gap(p, eps, k * h);
    if (v < best) {
      best = v;
      best_k = k;
    }
  }
  double a = (best_k - 1) * h, b = (best_k + 1) * h;
  for (int it = 0; it < 80; ++it) {
    const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
    if (pair_gap(p, eps, m1) <= pair_gap(p, eps, m2)) b = m2;
    else a = m1;
  }
  return std::max(0.0, std::min(best, pair_gap(p, eps, 0.5 * (a + b))));
}

constexpr double kTableLo = 1e-3;
constexpr int kTablePoints = 4000;

double table_eps(int k) { return kTableLo * std::pow(2.0 / kTableLo, static_cast<double>(k) / (kTablePoints - 1)); }

}  // namespace

double banach_modulus(double p, double eps) {
  if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("banach_modulus needs 1 < p < inf");
  if (!(eps >= 0.0)) throw DomainError("banach_modulus needs eps >= 0");
  if (eps >= 2.0) return 1.0;
  if (eps < kTableLo) return 0.0;
  // Index of the grid point at or below eps; the modulus is nondecreasing in eps.
  int k = static_cast<int>(std::floor(std::log(eps / kTableLo) / std::log(2.0 / kTableLo) * (kTablePoints - 1)));
  k = std::clamp(k, 0, kTablePoints - 1);
  while (k > 0 && table_eps(k) > eps) --k;
  static std::mutex mutex;
  static std::map<std::pair<double, int>, double> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find({p, k});
    if (it != cache.end()) return it->second;
  }
  const double v = modulus_direct(p, table_eps(k));
  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(std::pair{p, k}, v);
  return v;
}

double closed_form_modulus(const Space& target, double eps) {
  if (!(eps >= 0.0)) throw DomainError("modulus needs eps >= 0");
  const double e = std::min(eps, 2.0);
  switch (target.kind()) {
    case SpaceKind::Euclidean:
      if (target.dim() == 1) return 0.5 * e;
      return 1.0 - std::sqrt(1.0 - 0.25 * e * e);
    case SpaceKind::LpVector:
      if (target.dim() == 1) return 0.5 * e;
      return banach_modulus(target.p(), e);
    case SpaceKind::MetricTree:
      return 0.5 * e;
    case SpaceKind::Product:
      break;
  }
  throw DomainError("no closed-form modulus for product spaces; use modulus_estimate");
}

double uc_tau(double p, const std::function<double(double)>& delta, double eps) {
  if (eps <= 0.0) return 0.0;
  const double d = delta(0.25 * eps);
  return banach_modulus(p, d * d * d * d);
}

UcReport uc_witness_check(double p, const std::function<double(double)>& delta, const EquivariantMap& psi,
                          const EquivariantMap& phi1, const EquivariantMap& phi2, double r) {
  if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("uc_witness_check needs 1 < p < inf");
  if (!(r > 0.0)) throw DomainError("uc_witness_check needs r > 0");
  psi.check_compatible(phi1);
  psi.check_compatible(phi2);
  const double slack_tol = 1e-12 * std::max(1.0, r);
  if (rho(p, phi1, psi) > r + slack_tol || rho(p, phi2, psi) > r + slack_tol) {
    throw DomainError("uc_witness_check: maps are not within r of psi");
  }
  UcReport rep;
  rep.eps = rho(p, phi1, phi2) / r;
  rep.tau = uc_tau(p, delta, rep.eps);
  rep.midpoint_distance = rho(p, map_midpoint(phi1, phi2), psi);
  rep.bound = r * (1.0 - rep.tau);
  rep.slack = rep.bound - rep.midpoint_distance;
  rep.violated = rep.slack < -slack_tol;
  // Side conditions on d = delta(eps/4) used along the proof's inequality chain.
  const double e = rep.eps;
  const double d = e > 0.0 ? delta(0.25 * e) : 0.0;
  const double d2 = d * d, d4 = d2 * d2;
  const bool c1 = std::pow(e, p) - std::pow(2.0 * d2 + d4, p) >= std::pow(0.5 * e, p);
  const bool c2 = (1.0 - std::pow(1.0 - 0.25 * e * d + d4, p)) * std::pow(0.25 * e, p) - p * d4 >= d2;
  const bool c3 = std::pow(1.0 - d2, 1.0 / p) <= 1.0 - d4;
  rep.chain_conditions_ok = e > 0.0 && c1 && c2 && c3;
  return rep;
}

// ---------------------------------------------------------------------------
// Mazur map

ScalarField mazur_map(const ScalarField& f, double p, double q) {
  if (!(p > 1.0) || !(q > 1.0) || !std::isfinite(p) || !std::isfinite(q)) {
    throw DomainError("mazur_map needs 1 < p, q < inf");
  }
  if (std::abs(f.exponent() - p) > 1e-12 * p) throw DomainError("field exponent does not match p");
  std::vector<double> out(f.values().size());
  const double e = p / q;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = f.values()[i];
    out[i] = std::copysign(std::pow(std::abs(v), e), v);
    if (v == 0.0) out[i] = 0.0;
  }
  return {f.model(), std::move(out), q};
}

}  // namespace bnpc
