#include "bnpc/harmonic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "bnpc/convexity.hpp"
#include "linalg.hpp"

namespace bnpc {

namespace {

double powp(double d, double p) { return p == 2.0 ? d * d : std::pow(d, p); }

void check_map(const EquivariantProblem& prob, const EquivariantMap& phi) {
  if (!(phi.model() == prob.model())) throw DomainError("map is defined over a different model than the problem");
  if (!(phi.target() == prob.target())) throw DomainError("map takes values in a different space than the problem");
}

// Euclidean spaces and q = 2 products of Euclidean factors, seen as one R^n.
struct FlatLayout {
  bool ok = false;
  int dim = 0;
  std::vector<int> dims;  // factor dimensions for products, empty otherwise
};

FlatLayout flat_layout(const Space& s) {
  FlatLayout f;
  if (s.kind() == SpaceKind::Euclidean) {
    f.ok = true;
    f.dim = s.dim();
  } else if (s.kind() == SpaceKind::Product && s.q() == 2.0) {
    f.ok = true;
    for (const Space& fs : s.factors()) {
      if (fs.kind() != SpaceKind::Euclidean) return FlatLayout{};
      f.dims.push_back(fs.dim());
      f.dim += fs.dim();
    }
  }
  return f;
}

std::vector<double> flatten(const FlatLayout& f, const Point& x) {
  if (f.dims.empty()) return {x.coords().begin(), x.coords().end()};
  std::vector<double> out;
  out.reserve(f.dim);
  for (const Point& c : x.factors()) out.insert(out.end(), c.coords().begin(), c.coords().end());
  return out;
}

Point unflatten(const FlatLayout& f, const std::vector<double>& v) {
  if (f.dims.empty()) return Point::vector(v);
  std::vector<Point> parts;
  std::size_t at = 0;
  for (int d : f.dims) {
    parts.push_back(Point::vector({v.begin() + static_cast<long>(at), v.begin() + static_cast<long>(at + d)}));
    at += d;
  }
  return Point::product(std::move(parts));
}

// Writes the linear part of a vector-space isometry into the block of q starting at `at`.
void affine_block(const Isometry& t, int n, int at, std::vector<double>& q, std::vector<double>& shift) {
  switch (t.kind()) {
    case Isometry::Kind::Affine:
      for (int r = 0; r < t.dim(); ++r) {
        for (int c = 0; c < t.dim(); ++c) q[(at + r) * n + at + c] = t.matrix()[r * t.dim() + c];
        shift[at + r] = t.translation_part()[r];
      }
      return;
    case Isometry::Kind::SignedPermutation:
      for (int r = 0; r < t.dim(); ++r) {
        q[(at + r) * n + at + t.permutation()[r]] = t.signs()[r];
        shift[at + r] = t.translation_part()[r];
      }
      return;
    case Isometry::Kind::Product: {
      int off = at;
      for (const Isometry& f : t.factors()) {
        affine_block(f, n, off, q, shift);
        off += f.dim();
      }
      return;
    }
    case Isometry::Kind::TreeAutomorphism:
      break;
  }
  throw DomainError("tree automorphism in a vector space problem");
}

struct AffineMap {
  std::vector<double> q;  // row-major n x n
  std::vector<double> t;
};

struct LocalTerms {
  std::vector<Point> ys;
  std::vector<double> a;
  std::vector<int> self;  // edge ids
  std::vector<double> b;
};

constexpr int kGlobalLimit = 400;
constexpr double kArmijo = 1e-4;

// Everything a block update needs, fixed for one descent run.
class Descent {
 public:
  Descent(const EquivariantProblem& prob, const detail::Objective& obj, const SolverOptions& opts)
      : prob_(prob), obj_(obj), opts_(opts), layout_(flat_layout(prob.target())) {
    const int n = prob.num_cells();
    incident_.resize(n);
    for (std::size_t k = 0; k < prob.edges().size(); ++k) {
      const Edge& e = prob.edges()[k];
      inverse_.push_back(e.twist.inverse());
      if (weight(e) == 0.0) continue;
      incident_[e.src].push_back(static_cast<int>(k));
      if (e.dst != e.src) incident_[e.dst].push_back(static_cast<int>(k));
    }
    closed_form_ = layout_.ok && prob.p() == 2.0;
    if (closed_form_) {
      const int d = layout_.dim;
      for (const Edge& e : prob.edges()) {
        AffineMap m{std::vector<double>(d * d, 0.0), std::vector<double>(d, 0.0)};
        affine_block(e.twist, d, 0, m.q, m.t);
        affine_.push_back(std::move(m));
      }
    }
  }

  [[nodiscard]] double weight(const Edge& e) const {
    const auto& w = obj_.class_weights;
    return e.cls - 1 < static_cast<int>(w.size()) ? w[e.cls - 1] : 0.0;
  }

  [[nodiscard]] double objective(const std::vector<Point>& x) const {
    const Space& s = prob_.target();
    const double p = prob_.p();
    double total = 0.0;
    for (const Edge& e : prob_.edges()) {
      const double c = weight(e);
      if (c == 0.0) continue;
      total += c * prob_.model().weight(e.src) * e.weight * powp(s.distance(e.twist.apply(x[e.src]), x[e.dst]), p);
    }
    if (obj_.anchor > 0.0) {
      for (int i = 0; i < prob_.num_cells(); ++i) {
        total += obj_.anchor * prob_.model().weight(i) * powp(s.distance(x[i], prob_.base_point()), p);
      }
    }
    return total;
  }

  [[nodiscard]] LocalTerms terms(const std::vector<Point>& x, int i) const {
    LocalTerms t;
    const MeasureModel& m = prob_.model();
    for (int k : incident_[i]) {
      const Edge& e = prob_.edges()[k];
      const double c = weight(e) * e.weight;
      if (e.src == e.dst) {
        t.self.push_back(k);
        t.b.push_back(c * m.weight(i));
      } else if (e.src == i) {
        t.ys.push_back(inverse_[k].apply(x[e.dst]));
        t.a.push_back(c * m.weight(i));
      } else {
        t.ys.push_back(e.twist.apply(x[e.src]));
        t.a.push_back(c * m.weight(e.src));
      }
    }
    if (obj_.anchor > 0.0) {
      t.ys.push_back(prob_.base_point());
      t.a.push_back(obj_.anchor * m.weight(i));
    }
    return t;
  }

  [[nodiscard]] double local_value(const LocalTerms& t, const Point& x) const {
    const Space& s = prob_.target();
    const double p = prob_.p();
    double v = 0.0;
    for (std::size_t k = 0; k < t.ys.size(); ++k) v += t.a[k] * powp(s.distance(x, t.ys[k]), p);
    for (std::size_t k = 0; k < t.self.size(); ++k) {
      v += t.b[k] * powp(s.distance(prob_.edges()[t.self[k]].twist.apply(x), x), p);
    }
    return v;
  }

  // Minimizes sum a |x - y|^2 + sum b |(Q - I) x + t|^2 exactly. A tiny proximal
  // term keeps x where the quadratic is flat.
  [[nodiscard]] Point closed_form(const LocalTerms& t, const Point& cur) const {
    const int d = layout_.dim;
    std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
    std::vector<double> rhs(d, 0.0);
    for (std::size_t k = 0; k < t.ys.size(); ++k) {
      const std::vector<double> y = flatten(layout_, t.ys[k]);
      for (int r = 0; r < d; ++r) {
        a[r][r] += t.a[k];
        rhs[r] += t.a[k] * y[r];
      }
    }
    for (std::size_t k = 0; k < t.self.size(); ++k) {
      const AffineMap& m = affine_[t.self[k]];
      // M = Q - I; A += b M^T M; rhs -= b M^T t
      auto mat = [&](int r, int c) { return m.q[r * d + c] - (r == c ? 1.0 : 0.0); };
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
          double s = 0.0;
          for (int j = 0; j < d; ++j) s += mat(j, r) * mat(j, c);
          a[r][c] += t.b[k] * s;
        }
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += mat(j, r) * m.t[j];
        rhs[r] -= t.b[k] * s;
      }
    }
    double trace = 0.0;
    for (int r = 0; r < d; ++r) trace += a[r][r];
    const double eps = 1e-13 * (1.0 + trace / d);
    const std::vector<double> c = flatten(layout_, cur);
    for (int r = 0; r < d; ++r) {
      a[r][r] += eps;
      rhs[r] += eps * c[r];
    }
    if (!linalg::solve_dense(std::move(a), rhs)) return cur;
    return unflatten(layout_, rhs);
  }

  // Exact minimizer of the whole quadratic objective, for flat targets with p = 2 and
  // a modest number of unknowns. Block sweeps crawl along directions the energy
  // barely sees; one Newton step settles them. Directions it does not see at all
  // are left where they are.
  [[nodiscard]] std::optional<std::vector<Point>> global_step(const std::vector<Point>& x) const {
    const int d = layout_.dim;
    const int n = prob_.num_cells();
    const int size = n * d;
    if (!closed_form_ || size > kGlobalLimit) return std::nullopt;
    // Objective = X^T H X - 2 b^T X + const.
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(size, size);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(size);
    const MeasureModel& m = prob_.model();
    for (std::size_t k = 0; k < prob_.edges().size(); ++k) {
      const Edge& e = prob_.edges()[k];
      const double c = weight(e) * e.weight * m.weight(e.src);
      if (c == 0.0) continue;
      const AffineMap& a = affine_[k];
      // Residual Q x_src + t - x_dst = A X + t.
      Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(d, size);
      for (int r = 0; r < d; ++r) {
        for (int j = 0; j < d; ++j) rows(r, e.src * d + j) += a.q[r * d + j];
        rows(r, e.dst * d + r) -= 1.0;
      }
      const Eigen::Map<const Eigen::VectorXd> t(a.t.data(), d);
      h.noalias() += c * rows.transpose() * rows;
      b.noalias() -= c * rows.transpose() * t;
    }
    if (obj_.anchor > 0.0) {
      const std::vector<double> base = flatten(layout_, prob_.base_point());
      for (int i = 0; i < n; ++i) {
        const double c = obj_.anchor * m.weight(i);
        for (int r = 0; r < d; ++r) {
          h(i * d + r, i * d + r) += c;
          b(i * d + r) += c * base[r];
        }
      }
    }
    Eigen::VectorXd cur(size);
    for (int i = 0; i < n; ++i) {
      const std::vector<double> c = flatten(layout_, x[i]);
      for (int r = 0; r < d; ++r) cur(i * d + r) = c[r];
    }
    const Eigen::VectorXd next = cur + linalg::pseudo_newton_step(h, h * cur - b);
    if (!next.allFinite()) return std::nullopt;
    std::vector<Point> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(unflatten(layout_, {next.data() + i * d, next.data() + (i + 1) * d}));
    return out;
  }

  // New value for cell i given the others; the current one unless strictly better.
  [[nodiscard]] Point update(const std::vector<Point>& x, int i, double* gain = nullptr) const {
    const Point& cur = x[i];
    if (gain) *gain = 0.0;
    if (incident_[i].empty() && obj_.anchor == 0.0) return cur;
    const LocalTerms t = terms(x, i);
    Point cand;
    if (closed_form_) {
      cand = closed_form(t, cur);
    } else {
      ConvexFunction f{[&](const Point& y) { return local_value(t, y); }};
      SearchOptions so;
      so.seed = 1 + static_cast<std::uint64_t>(i);
      try {
        cand = minimize_convex(prob_.target(), f, cur, 0.1 * opts_.tol, so);
      } catch (const ConvergenceError&) {
        return cur;
      }
    }
    const double before = local_value(t, cur);
    const double after = local_value(t, cand);
    if (!(after < before)) return cur;
    if (gain) *gain = before - after;
    return cand;
  }

  [[nodiscard]] std::vector<Point> gauss_seidel(std::vector<Point> x) const {
    for (int i = 0; i < prob_.num_cells(); ++i) x[i] = update(x, i);
    return x;
  }

  // Simultaneous block minimizers. `best_gain` receives the largest single-block decrease.
  [[nodiscard]] std::vector<Point> jacobi(const std::vector<Point>& x, double& best_gain) const {
    const int n = prob_.num_cells();
    std::vector<Point> out(n);
    std::vector<double> gains(n, 0.0);
    const int workers = std::clamp(opts_.threads, 1, n);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&](int w) {
      try {
        for (int i = w; i < n; i += workers) out[i] = update(x, i, &gains[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    };
    if (workers == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }
    if (failure) std::rethrow_exception(failure);
    best_gain = *std::max_element(gains.begin(), gains.end());
    return out;
  }

 private:
  const EquivariantProblem& prob_;
  const detail::Objective& obj_;
  const SolverOptions& opts_;
  FlatLayout layout_;
  bool closed_form_ = false;
  std::vector<std::vector<int>> incident_;
  std::vector<Isometry> inverse_;
  std::vector<AffineMap> affine_;
};

TraceRow make_row(const EquivariantProblem& prob, const EquivariantMap& phi, int sweep, double move) {
  TraceRow row;
  row.sweep = sweep;
  row.class_energy.assign(prob.num_classes(), 0.0);
  const Space& s = prob.target();
  for (const Edge& e : prob.edges()) {
    row.class_energy[e.cls - 1] += prob.model().weight(e.src) * e.weight *
                                   powp(s.distance(e.twist.apply(phi.value(e.src)), phi.value(e.dst)), prob.p());
  }
  for (double v : row.class_energy) row.energy += v;
  row.norm = map_norm(prob.p(), phi, prob.base_point());
  row.max_move = move;
  return row;
}

void fill_summary(const EquivariantProblem& prob, SolveReport& rep) {
  const TraceRow row = make_row(prob, rep.solution, 0, 0.0);
  rep.energy = row.energy;
  rep.class_energy = row.class_energy;
  rep.norm = row.norm;
}

void check_options(const SolverOptions& opts) {
  if (!(opts.tol > 0.0)) throw DomainError("solver tolerance must be positive");
  if (opts.max_sweeps < 0) throw DomainError("max_sweeps must be nonnegative");
  if (opts.threads < 1) throw DomainError("thread count must be at least 1");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem

EquivariantProblem::EquivariantProblem(MeasureModel model, Space target, Point base_point, std::vector<Edge> edges,
                                       double p)
    : model_(std::move(model)),
      target_(std::move(target)),
      base_(std::move(base_point)),
      edges_(std::move(edges)),
      p_(p) {
  if (!(p_ >= 1.0) || !std::isfinite(p_)) throw DomainError("energy exponent must be in [1, inf)");
  target_.validate(base_);
  const int n = model_.size();
  std::set<int> seen;
  bool identity = false;
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const Edge& e = edges_[k];
    const std::string where = "edge " + std::to_string(k) + ": ";
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) throw DomainError(where + "cell index out of range");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw DomainError(where + "weight must be positive and finite");
    if (e.cls < 1) throw DomainError(where + "classes are numbered from 1");
    e.twist.check_for(target_);
    identity = identity || e.twist.is_identity();
    seen.insert(e.cls);
  }
  classes_ = seen.empty() ? 1 : *seen.rbegin();
  if (!seen.empty() && static_cast<int>(seen.size()) != classes_) {
    throw DomainError("edge classes must be contiguous from 1");
  }
  if (!edges_.empty() && !identity) {
    warnings_.push_back("no edge carries the identity twist; the generating set is taken as given");
  }
}

EquivariantProblem EquivariantProblem::with_edge_orbits(std::vector<std::vector<int>> orbits) const {
  for (const auto& group : orbits) {
    for (int k : group) {
      if (k < 0 || k >= static_cast<int>(edges_.size())) throw DomainError("edge orbit refers to a missing edge");
    }
  }
  EquivariantProblem out = *this;
  out.orbits_ = std::move(orbits);
  return out;
}

double energy(const EquivariantProblem& prob, const EquivariantMap& phi, const std::optional<std::set<int>>& classes) {
  check_map(prob, phi);
  const Space& s = prob.target();
  double total = 0.0;
  for (const Edge& e : prob.edges()) {
    if (classes && !classes->empty() && !classes->contains(e.cls)) continue;
    total += prob.model().weight(e.src) * e.weight *
             powp(s.distance(e.twist.apply(phi.value(e.src)), phi.value(e.dst)), prob.p());
  }
  return total;
}

Point frechet_mean(const Space& s, const std::vector<Point>& pts, const std::vector<double>& weights, double p,
                   double tol) {
  if (pts.empty() || pts.size() != weights.size()) throw DomainError("frechet_mean needs one weight per point");
  if (!(p >= 1.0)) throw DomainError("frechet_mean needs p >= 1");
  double total = 0.0;
  std::size_t heaviest = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) throw DomainError("weights must be nonnegative");
    s.validate(pts[i]);
    total += weights[i];
    if (weights[i] > weights[heaviest]) heaviest = i;
  }
  if (total == 0.0) throw DomainError("weights must not all vanish");
  if (p == 2.0 && s.kind() == SpaceKind::Euclidean) {
    std::vector<double> mean(s.dim(), 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int k = 0; k < s.dim(); ++k) mean[k] += weights[i] * pts[i].coord(k);
    }
    for (double& v : mean) v /= total;
    return Point::vector(std::move(mean));
  }
  ConvexFunction f{[&](const Point& x) {
    double v = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) v += weights[i] * powp(s.distance(x, pts[i]), p);
    return v;
  }};
  return minimize_convex(s, f, pts[heaviest], tol);
}

// ---------------------------------------------------------------------------
// Descent

namespace detail {

double objective_value(const EquivariantProblem& prob, const EquivariantMap& phi, const Objective& obj) {
  check_map(prob, phi);
  const SolverOptions opts;
  return Descent(prob, obj, opts).objective(phi.values());
}

SolveReport block_descent(const EquivariantProblem& prob, const EquivariantMap& init, const Objective& obj,
                          const SolverOptions& opts) {
  check_map(prob, init);
  check_options(opts);
  const Descent run(prob, obj, opts);
  const Space& s = prob.target();
  const int n = prob.num_cells();

  std::vector<Point> x = init.values();
  double f = run.objective(x);
  SolveReport rep{.solution = init};
  rep.trace.push_back(make_row(prob, init, 0, 0.0));

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    std::vector<Point> next;
    double fn = 0.0;
    if (opts.mode == SweepMode::GaussSeidel) {
      next = run.gauss_seidel(x);
      fn = run.objective(next);
    } else {
      double gain = 0.0;
      const std::vector<Point> target = run.jacobi(x, gain);
      next = target;
      fn = run.objective(next);
      // Simultaneous block moves can overshoot or merely trade places. Back off along
      // the map geodesic until the step keeps a fixed share of the best block gain.
      auto enough = [&](double t) { return f - fn >= kArmijo * t * gain; };
      double t = 1.0;
      for (int k = 1; k <= 30 && !enough(t); ++k) {
        t = std::ldexp(1.0, -k);
        for (int i = 0; i < n; ++i) next[i] = s.geodesic_point(x[i], target[i], t);
        fn = run.objective(next);
      }
      if (!enough(t)) {
        next = run.gauss_seidel(x);
        fn = run.objective(next);
      }
    }
    if (opts.exact_quadratic) {
      if (auto whole = run.global_step(next)) {
        const double fg = run.objective(*whole);
        if (fg < fn) {
          next = std::move(*whole);
          fn = fg;
        }
      }
    }
    if (fn > f) {
      // Every block was already optimal up to rounding in the total.
      rep.converged = true;
      break;
    }
    double move = 0.0;
    for (int i = 0; i < n; ++i) move = std::max(move, s.distance(x[i], next[i]));
    const double decrease = f - fn;
    x = std::move(next);
    f = fn;
    rep.iterations = sweep;
    rep.trace.push_back(make_row(prob, EquivariantMap(prob.model(), s, x), sweep, move));
    if (decrease < opts.tol * (1.0 + std::abs(f)) && move < opts.tol) {
      rep.converged = true;
      break;
    }
  }
  rep.solution = EquivariantMap(prob.model(), s, std::move(x));
  fill_summary(prob, rep);
  return rep;
}

}  // namespace detail

SolveReport minimize_energy(const EquivariantProblem& prob, const EquivariantMap& phi_init, const SolverOptions& opts) {
  detail::Objective obj{std::vector<double>(prob.num_classes(), 1.0), 0.0};
  return detail::block_descent(prob, phi_init, obj, opts);
}

std::vector<double> default_schedule() {
  std::vector<double> out;
  for (int k = 1; k <= 20; ++k) out.push_back(std::ldexp(1.0, -k));
  return out;
}

SolveReport norm_minimal_minimizer(const EquivariantProblem& prob, const SolverOptions& opts,
                                   const std::vector<double>& schedule, const std::optional<EquivariantMap>& init) {
  check_options(opts);
  if (schedule.empty()) throw DomainError("schedule must not be empty");
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    if (!(schedule[k] > 0.0) || (k > 0 && !(schedule[k] < schedule[k - 1]))) {
      throw DomainError("schedule must be positive and strictly decreasing");
    }
  }
  EquivariantMap cur = init ? *init : prob.constant_map();
  check_map(prob, cur);
  const std::vector<double> ones(prob.num_classes(), 1.0);
  std::vector<TraceRow> rows;
  std::vector<double> gaps;
  int iterations = 0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    SolveReport stage = detail::block_descent(prob, cur, {ones, schedule[k]}, opts);
    const double gap = rho(prob.p(), stage.solution, cur);
    if (k > 0) gaps.push_back(gap);
    iterations += stage.iterations;
    cur = stage.solution;
    rows.push_back(make_row(prob, cur, static_cast<int>(k) + 1, gap));
  }
  SolveReport rep = detail::block_descent(prob, cur, {ones, 0.0}, opts);
  rep.iterations += iterations;
  rows.push_back(make_row(prob, rep.solution, static_cast<int>(schedule.size()) + 1,
                          rho(prob.p(), rep.solution, cur)));
  rep.trace = std::move(rows);
  rep.stage_gaps = gaps;

  // Gaps may grow while lambda is above the curvature scale of E; the tail must shrink.
  bool shrinking = true;
  for (std::size_t k = gaps.size() / 2 + 1; k < gaps.size(); ++k) {
    if (gaps[k] > gaps[k - 1] && gaps[k] > opts.tol) shrinking = false;
  }
  const double last = gaps.empty() ? 0.0 : gaps.back();
  const double bound = std::max(opts.tol, 10.0 * schedule.back() * (1.0 + rep.norm));
  rep.cauchy_ok = shrinking && last <= bound;
  if (!rep.cauchy_ok) {
    throw ConvergenceError("norm-minimal stages are not Cauchy (last gap " + format_double(last) +
                               "); the energy likely has a flat direction the anchor cannot pin",
                           std::make_shared<const Point>(rep.solution.value(0)));
  }
  return rep;
}

SolveReport lexicographic_minimize(const EquivariantProblem& prob, const std::vector<int>& class_order,
                                   const SolverOptions& opts) {
  check_options(opts);
  if (class_order.empty()) throw DomainError("class order must not be empty");
  std::set<int> seen;
  for (int c : class_order) {
    if (c < 1 || c > prob.num_classes()) throw DomainError("class " + std::to_string(c) + " does not exist");
    if (!seen.insert(c).second) throw DomainError("class order repeats class " + std::to_string(c));
  }
  auto class_energy = [&](const EquivariantMap& phi, int c) { return energy(prob, phi, std::set<int>{c}); };

  EquivariantMap cur = prob.constant_map();
  std::vector<double> minima;
  std::vector<double> drift(class_order.size(), 0.0);
  std::vector<TraceRow> rows;
  int iterations = 0;
  bool converged = true;
  std::optional<SolveReport> last;
  for (std::size_t s = 0; s < class_order.size(); ++s) {
    // Earlier classes enter with penalty weight kappa^(s - t), raised until they stay anchored.
    for (double kappa = 1e3;; kappa *= 1e3) {
      detail::Objective obj{std::vector<double>(prob.num_classes(), 0.0), 0.0};
      obj.class_weights[class_order[s] - 1] = 1.0;
      for (std::size_t t = 0; t < s; ++t) {
        obj.class_weights[class_order[t] - 1] = std::min(1e12, std::pow(kappa, static_cast<double>(s - t)));
      }
      SolveReport r = detail::block_descent(prob, cur, obj, opts);
      iterations += r.iterations;
      double worst = 0.0;
      for (std::size_t t = 0; t < s; ++t) worst = std::max(worst, class_energy(r.solution, class_order[t]) - minima[t]);
      last = std::move(r);
      if (s == 0 || worst <= opts.tol || kappa >= 1e9) break;
    }
    converged = converged && last->converged;
    cur = last->solution;
    for (std::size_t t = 0; t < s; ++t) {
      drift[t] = std::max(drift[t], class_energy(cur, class_order[t]) - minima[t]);
    }
    minima.push_back(class_energy(cur, class_order[s]));
    rows.push_back(make_row(prob, cur, static_cast<int>(s) + 1, 0.0));
  }
  SolveReport rep = std::move(*last);
  rep.iterations = iterations;
  rep.converged = converged;
  rep.trace = std::move(rows);
  rep.stage_minima = std::move(minima);
  rep.stage_drift = std::move(drift);
  return rep;
}

// ---------------------------------------------------------------------------
// Checks and export

HarmonicReport harmonic_properties_check(const EquivariantProblem& prob, const EquivariantMap& phi,
                                         const EquivariantMap& psi, double tol) {
  check_map(prob, phi);
  check_map(prob, psi);
  const Space& s = prob.target();
  HarmonicReport rep;
  const double e_phi = energy(prob, phi);
  const double e_psi = energy(prob, psi);
  rep.midpoint_energy = energy(prob, map_midpoint(phi, psi));
  rep.midpoint_ok = rep.midpoint_energy <= std::max(e_phi, e_psi) + tol;

  std::vector<double> d_phi, d_psi;
  for (std::size_t k = 0; k < prob.edges().size(); ++k) {
    const Edge& e = prob.edges()[k];
    const Point a = e.twist.apply(phi.value(e.src));
    const Point& b = phi.value(e.dst);
    const Point x = e.twist.apply(psi.value(e.src));
    const Point& y = psi.value(e.dst);
    const double ax = s.distance(a, x);
    const double defect = std::max(std::abs(ax - s.distance(b, y)), std::abs(ax - s.distance(s.midpoint(a, b), s.midpoint(x, y))));
    if (defect > rep.parallel_defect) {
      rep.parallel_defect = defect;
      rep.worst_edge = static_cast<int>(k);
    }
    d_phi.push_back(s.distance(a, b));
    d_psi.push_back(s.distance(x, y));
    rep.orbit_diameter = std::max(rep.orbit_diameter, s.distance(a, phi.value(e.src)));
  }
  rep.parallel_ok = rep.parallel_defect <= tol;

  for (const auto& group : prob.edge_orbits()) {
    for (const auto* d : {&d_phi, &d_psi}) {
      double lo = INFINITY, hi = -INFINITY;
      for (int k : group) {
        lo = std::min(lo, (*d)[k]);
        hi = std::max(hi, (*d)[k]);
      }
      if (!group.empty()) rep.orbit_spread = std::max(rep.orbit_spread, hi - lo);
    }
  }
  rep.orbit_constancy_ok = rep.orbit_spread <= tol;
  return rep;
}

void write_trace_csv(std::ostream& out, const SolveReport& report) {
  const std::size_t classes = report.class_energy.size();
  out << "sweep,energy_total";
  for (std::size_t c = 1; c <= classes; ++c) out << ",energy_class_" << c;
  out << ",norm,max_move\n";
  for (const TraceRow& row : report.trace) {
    out << row.sweep << ',' << format_double(row.energy);
    for (double v : row.class_energy) out << ',' << format_double(v);
    out << ',' << format_double(row.norm) << ',' << format_double(row.max_move) << '\n';
  }
}

}  // namespace bnpc
