#include "bnpc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <limits>
#include <numeric>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "bnpc/convexity.hpp"
#include "bnpc/generators.hpp"
#include "bnpc/mapspace.hpp"
#include "json.hpp"

namespace bnpc::cli {

namespace {

using json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// A JSON value together with its dotted path, for error messages.
class Node {
 public:
  Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  [[nodiscard]] const std::string& path() const { return path_; }
  [[nodiscard]] const json& raw() const { return *j_; }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError("config: field '" + path_ + "' " + what); }

  const Node& object(std::initializer_list<const char*> allowed) const {
    if (!j_->is_object()) fail("must be an object");
    for (const auto& [key, value] : j_->items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        throw ConfigError("config: unknown field '" + child_path(key) + "'");
      }
    }
    return *this;
  }

  [[nodiscard]] bool has(const char* key) const { return j_->is_object() && j_->contains(key); }

  [[nodiscard]] Node at(const char* key) const {
    if (!has(key)) throw ConfigError("config: missing required field '" + child_path(key) + "'");
    return {(*j_)[key], child_path(key)};
  }

  [[nodiscard]] std::optional<Node> opt(const char* key) const {
    if (!has(key)) return std::nullopt;
    return Node((*j_)[key], child_path(key));
  }

  [[nodiscard]] std::vector<Node> items() const {
    if (!j_->is_array()) fail("must be an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_->size(); ++i) out.emplace_back((*j_)[i], path_ + "[" + std::to_string(i) + "]");
    return out;
  }

  [[nodiscard]] double number() const {
    if (!j_->is_number()) fail("must be a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) fail("must be finite");
    return v;
  }

  [[nodiscard]] int integer() const {
    if (!j_->is_number_integer()) fail("must be an integer");
    const auto v = j_->get<long long>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail("is out of range");
    return static_cast<int>(v);
  }

  [[nodiscard]] std::uint64_t seed() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<long long>() >= 0)) {
      fail("must be a non-negative integer");
    }
    return j_->get<std::uint64_t>();
  }

  [[nodiscard]] bool boolean() const {
    if (!j_->is_boolean()) fail("must be true or false");
    return j_->get<bool>();
  }

  [[nodiscard]] std::string str() const {
    if (!j_->is_string()) fail("must be a string");
    return j_->get<std::string>();
  }

  [[nodiscard]] std::vector<double> numbers() const {
    std::vector<double> out;
    for (const Node& n : items()) out.push_back(n.number());
    return out;
  }

  [[nodiscard]] std::vector<int> integers() const {
    std::vector<int> out;
    for (const Node& n : items()) out.push_back(n.integer());
    return out;
  }

 private:
  [[nodiscard]] std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* j_;
  std::string path_;
};

// Runs a library constructor and reports its DomainError against a config field.
template <class F>
auto guarded(const Node& n, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const DomainError& e) {
    n.fail(std::string("is invalid: ") + e.what());
  }
}

// ---- spaces, points, isometries ---------------------------------------------------------

Space parse_space(const Node& n) {
  const std::string kind = n.at("kind").str();
  if (kind == "euclidean") {
    n.object({"kind", "dim"});
    const int dim = n.at("dim").integer();
    return guarded(n, [&] { return Space::euclidean(dim); });
  }
  if (kind == "lp") {
    n.object({"kind", "dim", "p"});
    const int dim = n.at("dim").integer();
    const double p = n.at("p").number();
    return guarded(n, [&] { return Space::lp(dim, p); });
  }
  if (kind == "tree") {
    n.object({"kind", "vertices", "edges"});
    const int vertices = n.at("vertices").integer();
    std::vector<TreeEdge> edges;
    for (const Node& e : n.at("edges").items()) {
      e.object({"u", "v", "length"});
      edges.push_back({e.at("u").integer(), e.at("v").integer(), e.at("length").number()});
    }
    return guarded(n, [&] { return Space::tree(vertices, std::move(edges)); });
  }
  if (kind == "product") {
    n.object({"kind", "factors", "q"});
    std::vector<Space> factors;
    for (const Node& f : n.at("factors").items()) factors.push_back(parse_space(f));
    const double q = n.has("q") ? n.at("q").number() : 2.0;
    return guarded(n, [&] { return Space::product(std::move(factors), q); });
  }
  n.at("kind").fail("must be one of euclidean, lp, tree, product (got '" + kind + "')");
}

Point parse_point(const Space& s, const Node& n) {
  Point p = guarded(n, [&]() -> Point {
    switch (s.kind()) {
      case SpaceKind::Euclidean:
      case SpaceKind::LpVector:
        if (n.raw().is_number()) return Point::scalar(n.number());
        return Point::vector(n.numbers());
      case SpaceKind::MetricTree:
        if (n.has("vertex")) {
          n.object({"vertex"});
          return Point::tree_vertex(n.at("vertex").integer());
        }
        n.object({"edge", "offset"});
        return s.tree_point(n.at("edge").integer(), n.at("offset").number());
      case SpaceKind::Product: {
        const std::vector<Node> parts = n.items();
        if (parts.size() != s.factors().size()) n.fail("needs one entry per factor");
        std::vector<Point> factors;
        for (std::size_t i = 0; i < parts.size(); ++i) factors.push_back(parse_point(s.factors()[i], parts[i]));
        return Point::product(std::move(factors));
      }
    }
    n.fail("has an unsupported space");
  });
  guarded(n, [&] {
    s.validate(p);
    return 0;
  });
  return p;
}

Isometry parse_isometry(const Space& s, const Node& n) {
  const std::string kind = n.at("kind").str();
  Isometry t = guarded(n, [&]() -> Isometry {
    if (kind == "identity") {
      n.object({"kind"});
      return Isometry::identity(s);
    }
    if (kind == "translation") {
      n.object({"kind", "by"});
      return Isometry::translation(n.at("by").numbers());
    }
    if (kind == "reflection") {
      n.object({"kind", "normal", "offset"});
      return Isometry::hyperplane_reflection(n.at("normal").numbers(), n.has("offset") ? n.at("offset").number() : 0.0);
    }
    if (kind == "rotation") {
      n.object({"kind", "angle", "translation"});
      return Isometry::rotation2d(n.at("angle").number(),
                                  n.has("translation") ? n.at("translation").numbers() : std::vector<double>{0.0, 0.0});
    }
    if (kind == "orthogonal") {
      n.object({"kind", "matrix", "translation"});
      const std::vector<double> m = n.at("matrix").numbers();
      return Isometry::orthogonal(s.dim(), m,
                                  n.has("translation") ? n.at("translation").numbers() : std::vector<double>(s.dim(), 0.0));
    }
    if (kind == "signed_permutation") {
      n.object({"kind", "perm", "signs", "translation"});
      const std::vector<int> perm = n.at("perm").integers();
      return Isometry::signed_permutation(perm, n.at("signs").integers(),
                                          n.has("translation") ? n.at("translation").numbers()
                                                               : std::vector<double>(perm.size(), 0.0));
    }
    if (kind == "tree_automorphism") {
      n.object({"kind", "perm"});
      return Isometry::tree_automorphism(s, n.at("perm").integers());
    }
    if (kind == "product") {
      n.object({"kind", "factors"});
      if (s.kind() != SpaceKind::Product) n.fail("needs a product space");
      const std::vector<Node> parts = n.at("factors").items();
      if (parts.size() != s.factors().size()) n.at("factors").fail("needs one entry per factor");
      std::vector<Isometry> factors;
      for (std::size_t i = 0; i < parts.size(); ++i) factors.push_back(parse_isometry(s.factors()[i], parts[i]));
      return Isometry::product(std::move(factors));
    }
    n.at("kind").fail("is not a known isometry kind (got '" + kind + "')");
  });
  guarded(n, [&] {
    t.check_for(s);
    return 0;
  });
  return t;
}

// ---- problems ---------------------------------------------------------------------------

void require_space(const Node& n, const Space& got, const Space& want, const std::string& gen) {
  if (!(got == want)) {
    n.fail("'" + gen + "' needs space " + want.to_string() + ", but the config has " + got.to_string());
  }
}

void parse_generator(const Node& n, RunConfig& cfg) {
  std::string gen = n.at("generator").str();
  std::optional<int> k_inline;
  std::smatch m;
  static const std::regex with_index(R"(dihedral-cover\((\d+)\))");
  if (std::regex_match(gen, m, with_index)) {
    k_inline = std::stoi(m[1].str());
    gen = "dihedral-cover";
  }
  cfg.generator = gen;
  auto int_or = [&](const char* key, int fallback) { return n.has(key) ? n.at(key).integer() : fallback; };
  const Space r1 = Space::euclidean(1);
  if (gen == "consensus") {
    n.object({"generator", "cells"});
    const int cells = int_or("cells", 2);
    cfg.problem = guarded(n, [&] { return generators::consensus(cells, cfg.space); });
  } else if (gen == "dihedral-line") {
    n.object({"generator", "cells"});
    require_space(n, cfg.space, r1, gen);
    const int cells = int_or("cells", 3);
    cfg.problem = guarded(n, [&] { return generators::dihedral_line(cells); });
  } else if (gen == "translation-loop") {
    n.object({"generator", "cells", "base"});
    require_space(n, cfg.space, r1, gen);
    const int cells = int_or("cells", 1);
    const double base = n.has("base") ? n.at("base").number() : 0.0;
    cfg.problem = guarded(n, [&] { return generators::translation_loop(cells, base); });
  } else if (gen == "product-two-class") {
    n.object({"generator"});
    require_space(n, cfg.space, Space::product({r1, r1}), gen);
    cfg.problem = generators::product_two_class();
  } else if (gen == "dihedral-cover") {
    n.object({"generator", "k", "subgroup", "cells"});
    require_space(n, cfg.space, r1, gen);
    if (k_inline && n.has("k")) n.at("k").fail("conflicts with the index in the generator name");
    const int k = k_inline ? *k_inline : n.at("k").integer();
    auto sub = generators::DihedralSubgroup::Dihedral;
    if (n.has("subgroup")) {
      const std::string name = n.at("subgroup").str();
      if (name == "translation") {
        sub = generators::DihedralSubgroup::Translation;
      } else if (name != "dihedral") {
        n.at("subgroup").fail("must be 'dihedral' or 'translation'");
      }
    }
    const int cells = int_or("cells", 3);
    cfg.cover = guarded(n, [&] { return generators::dihedral_cover(k, sub, cells); });
    cfg.problem = guarded(n, [&] { return CommEnergyModel(*cfg.cover).cover(); });
  } else {
    n.at("generator").fail(
        "must be one of consensus, dihedral-line, translation-loop, product-two-class, dihedral-cover (got '" + gen +
        "')");
  }
}

void parse_explicit(const Node& n, RunConfig& cfg) {
  n.object({"weights", "base_point", "p", "edges", "cover"});
  const Space& s = cfg.space;
  std::vector<double> weights = n.at("weights").numbers();
  const Point base = n.has("base_point") ? parse_point(s, n.at("base_point")) : s.origin();
  const double p = n.has("p") ? n.at("p").number() : 2.0;
  std::vector<Edge> edges;
  for (const Node& e : n.at("edges").items()) {
    e.object({"src", "dst", "weight", "twist", "class"});
    edges.push_back({e.at("src").integer(), e.at("dst").integer(), e.has("weight") ? e.at("weight").number() : 1.0,
                     e.has("twist") ? parse_isometry(s, e.at("twist")) : Isometry::identity(s),
                     e.has("class") ? e.at("class").integer() : 1});
  }
  MeasureModel model = guarded(n.at("weights"), [&] { return MeasureModel(std::move(weights)); });
  EquivariantProblem prob = guarded(n, [&] { return EquivariantProblem(model, s, base, edges, p); });
  if (auto c = n.opt("cover")) {
    c->object({"index", "actions", "check_length"});
    CoverSpec spec{prob, c->at("index").integer(), {}};
    if (c->has("check_length")) spec.check_length = c->at("check_length").integer();
    for (const Node& a : c->at("actions").items()) {
      a.object({"twist", "perm"});
      spec.actions.push_back({parse_isometry(s, a.at("twist")), a.at("perm").integers()});
    }
    guarded(*c, [&] {
      validate_cover(spec);
      return 0;
    });
    cfg.cover = spec;
    cfg.problem = guarded(*c, [&] { return CommEnergyModel(spec).cover(); });
  } else {
    cfg.problem = std::move(prob);
  }
}

// ---- solver and verify blocks -----------------------------------------------------------

void parse_solver(const Node& n, RunConfig& cfg) {
  n.object({"method", "tol", "max_sweeps", "mode", "threads", "exact_quadratic", "schedule", "class_order", "init",
            "init_radius", "seed"});
  SolverConfig& sc = cfg.solver;
  if (auto m = n.opt("method")) {
    const std::string name = m->str();
    if (name == "minimize") {
      sc.method = Method::Minimize;
    } else if (name == "norm-minimal") {
      sc.method = Method::NormMinimal;
    } else if (name == "lexicographic") {
      sc.method = Method::Lexicographic;
    } else if (name == "gamma0") {
      sc.method = Method::Gamma0;
    } else {
      m->fail("must be one of minimize, norm-minimal, lexicographic, gamma0 (got '" + name + "')");
    }
  }
  if (auto t = n.opt("tol")) {
    sc.options.tol = t->number();
    if (!(sc.options.tol > 0.0)) t->fail("must be positive");
  }
  if (auto t = n.opt("max_sweeps")) {
    sc.options.max_sweeps = t->integer();
    if (sc.options.max_sweeps < 0) t->fail("must be non-negative");
  }
  if (auto t = n.opt("mode")) {
    const std::string mode = t->str();
    if (mode == "gauss-seidel") {
      sc.options.mode = SweepMode::GaussSeidel;
    } else if (mode == "jacobi") {
      sc.options.mode = SweepMode::Jacobi;
    } else {
      t->fail("must be 'gauss-seidel' or 'jacobi'");
    }
  }
  if (auto t = n.opt("threads")) {
    sc.options.threads = t->integer();
    if (sc.options.threads < 1) t->fail("must be at least 1");
  }
  if (auto t = n.opt("exact_quadratic")) sc.options.exact_quadratic = t->boolean();
  if (auto t = n.opt("schedule")) {
    sc.schedule = t->numbers();
    for (double l : sc.schedule) {
      if (!(l > 0.0)) t->fail("must hold positive values");
    }
  }
  if (auto t = n.opt("class_order")) sc.class_order = t->integers();
  if (auto t = n.opt("init")) {
    if (t->raw().is_array()) {
      if (!cfg.problem) t->fail("needs a problem");
      sc.init = "values";
      for (const Node& v : t->items()) sc.init_values.push_back(parse_point(cfg.space, v));
      if (static_cast<int>(sc.init_values.size()) != cfg.problem->num_cells()) t->fail("needs one point per cell");
    } else {
      sc.init = t->str();
      if (sc.init != "base" && sc.init != "random") t->fail("must be 'base', 'random' or a list of points");
    }
  }
  if (auto t = n.opt("init_radius")) {
    sc.init_radius = t->number();
    if (!(sc.init_radius > 0.0)) t->fail("must be positive");
  }
  if (auto t = n.opt("seed")) sc.seed = t->seed();
}

void parse_verify(const Node& n, RunConfig& cfg) {
  n.object({"samples", "seed"});
  if (auto t = n.opt("samples")) {
    cfg.verify.samples = t->integer();
    if (cfg.verify.samples < 1) t->fail("must be positive");
  }
  if (auto t = n.opt("seed")) cfg.verify.seed = t->seed();
}

// ---- solve ------------------------------------------------------------------------------

std::uint64_t need_seed(const std::optional<std::uint64_t>& seed, const std::string& field, const std::string& why) {
  if (!seed) throw ConfigError("config: missing required field '" + field + "' (" + why + " is stochastic)");
  return *seed;
}

EquivariantMap random_map(const MeasureModel& m, const Space& s, const Point& center, double radius, Rng& rng) {
  std::vector<Point> v;
  for (int i = 0; i < m.size(); ++i) v.push_back(s.sample(center, radius, rng));
  return {m, s, std::move(v)};
}

EquivariantMap initial_map(const RunConfig& cfg) {
  const EquivariantProblem& prob = *cfg.problem;
  if (cfg.solver.init == "values") return {prob.model(), prob.target(), cfg.solver.init_values};
  if (cfg.solver.init == "random") {
    Rng rng(need_seed(cfg.solver.seed, "solver.seed", "random initialisation"));
    return random_map(prob.model(), prob.target(), prob.base_point(), cfg.solver.init_radius, rng);
  }
  return prob.constant_map();
}

CoverSpec trivial_cover(const EquivariantProblem& prob) {
  CoverSpec spec{prob, 1, {}};
  for (const Edge& e : prob.edges()) spec.actions.push_back({e.twist, {0}});
  return spec;
}

// Column names and values of a point, flattened.
void flatten(const Point& p, const std::string& prefix, std::vector<std::string>* names, std::vector<std::string>* values) {
  switch (p.kind()) {
    case PointKind::Vector:
      for (std::size_t i = 0; i < p.dim(); ++i) {
        if (names) names->push_back(prefix + "x" + std::to_string(i));
        if (values) values->push_back(fmt(p.coord(i)));
      }
      break;
    case PointKind::Tree:
      if (names) {
        for (const char* c : {"vertex", "edge", "offset"}) names->push_back(prefix + c);
      }
      if (values) {
        values->push_back(std::to_string(p.tree().vertex));
        values->push_back(std::to_string(p.tree().edge));
        values->push_back(fmt(p.tree().offset));
      }
      break;
    case PointKind::Product:
      for (std::size_t i = 0; i < p.factors().size(); ++i) {
        flatten(p.factors()[i], prefix + "f" + std::to_string(i) + "_", names, values);
      }
      break;
  }
}

void write_solution_csv(std::ostream& out, const EquivariantMap& phi) {
  std::vector<std::string> names;
  flatten(phi.value(0), "", &names, nullptr);
  out << "cell";
  for (const std::string& n : names) out << ',' << n;
  out << '\n';
  for (int c = 0; c < phi.size(); ++c) {
    std::vector<std::string> values;
    flatten(phi.value(c), "", nullptr, &values);
    out << c;
    for (const std::string& v : values) out << ',' << v;
    out << '\n';
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  return f;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Minimize: return "minimize";
    case Method::NormMinimal: return "norm-minimal";
    case Method::Lexicographic: return "lexicographic";
    case Method::Gamma0: return "gamma0";
  }
  return "?";
}

// ---- verify suites ----------------------------------------------------------------------

struct Suite {
  std::string name;
  std::vector<CheckResult> out;

  void add(const std::string& check, bool passed, double slack, std::string detail, const json& witness = nullptr) {
    CheckResult r{name, check, passed, false, slack, std::move(detail), ""};
    if (!passed && !witness.is_null()) r.witness = witness.dump();
    out.push_back(std::move(r));
  }
};

std::uint64_t verify_seed(const RunConfig& cfg, const std::string& suite) {
  return need_seed(cfg.verify.seed, "verify.seed", "the " + suite + " suite");
}

// Inapplicable configurations raise ConfigError for a named suite and are skipped under "all".
class NotApplicable : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

std::optional<Point> translated(const Space& s, const Point& p, const Point& v) {
  switch (s.kind()) {
    case SpaceKind::Euclidean:
    case SpaceKind::LpVector: {
      std::vector<double> c(p.coords().begin(), p.coords().end());
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += v.coord(i);
      return Point::vector(std::move(c));
    }
    case SpaceKind::MetricTree:
      return std::nullopt;
    case SpaceKind::Product: {
      std::vector<Point> parts;
      for (std::size_t i = 0; i < s.factors().size(); ++i) {
        auto f = translated(s.factors()[i], p.factors()[i], v.factors()[i]);
        if (!f) return std::nullopt;
        parts.push_back(*f);
      }
      return Point::product(std::move(parts));
    }
  }
  return std::nullopt;
}

// Largest relative defect of d(a, x) = d(b, y) = d(m(a, b), m(x, y)).
double parallel_defect(const Space& s, const Point& a, const Point& b, const Point& x, const Point& y) {
  const double d1 = s.distance(a, x), d2 = s.distance(b, y);
  const double d3 = s.distance(s.midpoint(a, b), s.midpoint(x, y));
  return std::max(std::abs(d1 - d2), std::abs(d1 - d3)) / std::max({1.0, d1, d2, d3});
}

Suite parallelogram_suite(const RunConfig& cfg) {
  Suite suite{"parallelogram", {}};
  const Space& s = cfg.space;
  constexpr double tol = 1e-9;
  Rng rng(verify_seed(cfg, suite.name));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0, parallel = 0;
  double worst = std::numeric_limits<double>::infinity();
  json witness;
  const Point o = s.origin();
  for (int k = 0; k < cfg.verify.samples; ++k) {
    Point a = s.sample(o, 2.0, rng), b = s.sample(o, 2.0, rng), x, y;
    std::optional<Point> tx, ty;
    if (k % 3 == 0) {
      const Point v = s.sample(o, 1.0, rng);
      tx = translated(s, a, v);
      ty = translated(s, b, v);
    }
    if (tx && ty) {
      x = *tx;
      y = *ty;
    } else if (k % 3 != 2) {
      // Two sub-segments of one geodesic, the second slid along it.
      const double t0 = 0.5 * u(rng), len = 0.5 * u(rng), slide = (1.0 - t0 - len) * u(rng);
      const Point p = a, q = b;
      a = s.geodesic_point(p, q, t0);
      b = s.geodesic_point(p, q, t0 + len);
      x = s.geodesic_point(p, q, t0 + slide);
      y = s.geodesic_point(p, q, t0 + len + slide);
    } else {
      x = s.sample(o, 2.0, rng);
      y = s.sample(o, 2.0, rng);
    }
    const bool lhs = parallel_check(s, a, b, x, y, tol);
    const bool rhs = parallel_check(s, a, x, b, y, tol);
    parallel += lhs;
    const double defect = parallel_defect(s, a, x, b, y);
    worst = std::min(worst, lhs ? tol - defect : defect - tol);
    if (lhs != rhs) {
      if (violations++ == 0) {
        witness = {{"a", a.to_string()}, {"b", b.to_string()}, {"x", x.to_string()}, {"y", y.to_string()},
                   {"parallel_ab_xy", lhs},  {"parallel_ax_by", rhs}, {"defect_ax_by", defect}};
      }
    }
  }
  suite.add("symmetry", violations == 0, worst,
            std::to_string(violations) + " violations over " + std::to_string(cfg.verify.samples) + " quadruples",
            witness);
  const int needed = cfg.verify.samples / 6;
  suite.add("coverage", parallel >= needed, parallel - needed,
            std::to_string(parallel) + " parallel quadruples sampled");
  return suite;
}

Suite modulus_suite(const RunConfig& cfg) {
  Suite suite{"modulus", {}};
  const Space& s = cfg.space;
  if (s.kind() == SpaceKind::Product) throw NotApplicable("the modulus suite needs a Euclidean, l_p or tree space");
  const std::uint64_t seed = verify_seed(cfg, suite.name);
  const Point x = s.origin();
  double r = 1.0;
  if (s.kind() == SpaceKind::MetricTree) {
    // Some geodesic from x must be at least r long for the eps r / 2 bound to be attained.
    double ecc = 0.0;
    for (int v = 0; v < s.topology().num_vertices(); ++v) ecc = std::max(ecc, s.topology().vertex_distance(0, v));
    r = std::min(1.0, ecc);
  }
  constexpr double rel_tol = 0.02;
  double worst_gap = 0.0;
  json witness;
  bool ok = true;
  for (double eps : {0.25, 0.5, 1.0, 1.5}) {
    const ModulusEstimate est = modulus_estimate(s, x, eps, r, cfg.verify.samples, seed);
    const double exact = r * closed_form_modulus(s, eps);
    const double gap = est.feasible ? std::abs(est.delta - exact) / exact : std::numeric_limits<double>::infinity();
    if (gap > worst_gap) {
      worst_gap = gap;
      witness = {{"eps", eps}, {"r", r}, {"estimate", est.feasible ? est.delta : -1.0}, {"closed_form", exact}};
    }
    ok = ok && gap <= rel_tol;
  }
  suite.add("closed-form agreement", ok, rel_tol - worst_gap, "max relative gap " + fmt(worst_gap), witness);
  return suite;
}

Suite uc_suite(const RunConfig& cfg) {
  Suite suite{"uc-witness", {}};
  const Space& s = cfg.space;
  if (s.kind() == SpaceKind::Product) throw NotApplicable("the uc-witness suite needs a Euclidean, l_p or tree space");
  Rng rng(verify_seed(cfg, suite.name));
  const MeasureModel m({0.2, 0.3, 0.5});
  const Point o = s.origin();
  auto delta = [&](double e) { return closed_form_modulus(s, e); };
  for (double p : {1.5, 2.0, 3.0}) {
    int violations = 0;
    double worst = std::numeric_limits<double>::infinity();
    json witness;
    for (int k = 0; k < cfg.verify.samples; ++k) {
      const EquivariantMap psi = random_map(m, s, o, 1.0, rng);
      const EquivariantMap a = random_map(m, s, o, 1.0, rng), b = random_map(m, s, o, 1.0, rng);
      const double r = std::max(rho(p, a, psi), rho(p, b, psi));
      if (r == 0.0) continue;
      const UcReport rep = uc_witness_check(p, delta, psi, a, b, r);
      worst = std::min(worst, rep.slack);
      if (rep.violated && violations++ == 0) {
        auto pts = [](const EquivariantMap& f) {
          json j = json::array();
          for (const Point& v : f.values()) j.push_back(v.to_string());
          return j;
        };
        witness = {{"p", p},           {"r", r},         {"eps", rep.eps},  {"tau", rep.tau},
                   {"midpoint_distance", rep.midpoint_distance},            {"bound", rep.bound},
                   {"psi", pts(psi)},  {"phi1", pts(a)}, {"phi2", pts(b)}};
      }
    }
    suite.add("p=" + fmt(p), violations == 0, worst, std::to_string(violations) + " violations", witness);
  }
  return suite;
}

// Grid points of a tree: every vertex and `steps - 1` interior points per edge.
std::vector<Point> tree_grid(const Space& s, int steps, double* spacing) {
  std::vector<Point> pts;
  for (int v = 0; v < s.topology().num_vertices(); ++v) pts.push_back(Point::tree_vertex(v));
  *spacing = 0.0;
  const auto& edges = s.topology().edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double h = edges[e].length / steps;
    *spacing = std::max(*spacing, h);
    for (int j = 1; j < steps; ++j) pts.push_back(s.tree_point(static_cast<int>(e), j * h));
  }
  return pts;
}

// Minimum of f over all assignments of `cells` grid points, by exhaustive enumeration.
std::pair<double, std::vector<Point>> exhaustive(const std::vector<Point>& grid, int cells,
                                                 const std::function<double(const std::vector<Point>&)>& f) {
  std::vector<std::size_t> idx(cells, 0);
  std::vector<Point> cur(cells, grid[0]), best = cur;
  double fbest = std::numeric_limits<double>::infinity();
  while (true) {
    for (int i = 0; i < cells; ++i) cur[i] = grid[idx[i]];
    const double v = f(cur);
    if (v < fbest) {
      fbest = v;
      best = cur;
    }
    int i = 0;
    while (i < cells && ++idx[i] == grid.size()) idx[i++] = 0;
    if (i == cells) break;
  }
  return {fbest, best};
}

Suite solver_oracle_suite(const RunConfig& cfg) {
  Suite suite{"solver-oracle", {}};
  if (!cfg.problem) throw NotApplicable("the solver-oracle suite needs a problem");
  const EquivariantProblem& prob = *cfg.problem;
  const Space& s = prob.target();
  const int n = prob.num_cells();
  const bool line = s == Space::euclidean(1);
  if (n > 3 || !(line || s.kind() == SpaceKind::MetricTree)) {
    throw NotApplicable("the solver-oracle suite needs at most 3 cells and a target that is R or a tree");
  }
  const SolveReport rep = minimize_energy(prob, prob.constant_map(), cfg.solver.options);

  int rises = 0;
  double worst_rise = 0.0;
  json rise;
  for (std::size_t i = 1; i < rep.trace.size(); ++i) {
    const double d = rep.trace[i].energy - rep.trace[i - 1].energy;
    if (d > 0.0 && rises++ == 0) rise = {{"sweep", rep.trace[i].sweep}, {"before", rep.trace[i - 1].energy}, {"after", rep.trace[i].energy}};
    worst_rise = std::max(worst_rise, d);
  }
  suite.add("monotone trace", rises == 0, -worst_rise, std::to_string(rises) + " increases over " + std::to_string(rep.trace.size()) + " sweeps", rise);

  auto as_map = [&](std::vector<Point> v) { return EquivariantMap(prob.model(), s, std::move(v)); };
  auto f = [&](const std::vector<Point>& v) { return energy(prob, as_map(v)); };
  double grid_energy = 0.0, spacing = 0.0;
  std::vector<Point> arg;
  if (line) {
    // Zooming grid on a box around the base point large enough to hold the solution.
    const double b0 = prob.base_point().coord(0);
    double half = 2.0;
    for (const Point& p : rep.solution.values()) half = std::max(half, 2.0 * std::abs(p.coord(0) - b0) + 2.0);
    std::vector<double> centre(n, b0);
    constexpr int steps = 20;
    grid_energy = std::numeric_limits<double>::infinity();
    for (int round = 0; round < 10; ++round) {
      std::vector<Point> grid;
      const double h = 2.0 * half / steps;
      for (int j = 0; j <= steps; ++j) grid.push_back(Point::scalar(-half + j * h));
      auto [v, off] = exhaustive(grid, n, [&](const std::vector<Point>& u) {
        std::vector<Point> x;
        for (int i = 0; i < n; ++i) x.push_back(Point::scalar(centre[i] + u[i].coord(0)));
        return f(x);
      });
      if (v <= grid_energy) {
        for (int i = 0; i < n; ++i) centre[i] += off[i].coord(0);
        grid_energy = v;
      }
      spacing = h;
      half *= 4.0 / steps;
    }
    for (double c : centre) arg.push_back(Point::scalar(c));
  } else {
    const int edges = static_cast<int>(s.topology().edges().size());
    const int budget = n == 1 ? 100000 : n == 2 ? 3000 : 160;
    const int steps = std::max(2, (budget - s.topology().num_vertices()) / std::max(1, edges) + 1);
    const std::vector<Point> grid = tree_grid(s, steps, &spacing);
    std::tie(grid_energy, arg) = exhaustive(grid, n, f);
  }
  // Every cell of the solution lies within h of a grid point, so each edge distance of
  // that grid neighbour exceeds its value at the solution by at most 2h.
  const double p = prob.p();
  double bound = 0.0;
  for (const Edge& e : prob.edges()) {
    const double d = s.distance(e.twist.apply(rep.solution.value(e.src)), rep.solution.value(e.dst));
    bound += prob.model().weight(e.src) * e.weight * (std::pow(d + 2.0 * spacing, p) - std::pow(d, p));
  }
  const double below = grid_energy + 1e-5 - rep.energy;
  const double above = rep.energy + 1e-5 + bound - grid_energy;
  json witness = {{"solver_energy", rep.energy}, {"grid_energy", grid_energy}, {"grid_bound", bound}};
  witness["grid_argmin"] = json::array();
  for (const Point& a : arg) witness["grid_argmin"].push_back(a.to_string());
  suite.add("grid agreement", below >= 0.0 && above >= 0.0, std::min(below, above),
            "solver " + fmt(rep.energy) + ", grid " + fmt(grid_energy) + ", resolution bound " + fmt(bound), witness);
  return suite;
}

Suite commensurability_suite(const RunConfig& cfg) {
  Suite suite{"commensurability", {}};
  const std::uint64_t seed = verify_seed(cfg, suite.name);
  Rng rng(seed);
  const SolverOptions opts{.tol = 1e-10, .threads = cfg.solver.options.threads};

  double worst = 0.0;
  json witness;
  const int trials = std::min(cfg.verify.samples, 50);
  for (int k : {1, 2}) {
    const CoverSpec spec = generators::dihedral_cover(k);
    const CommEnergyModel m(spec);
    std::vector<int> relabel(spec.base.num_cells());
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);
    const std::vector<int> lifted = cover_relabel(spec, relabel);
    for (double t : {1.0, -2.0, 0.5}) {
      const Isometry lam = Isometry::translation({t});
      const CommEnergyModel conj(conjugate_cover(spec, lam, relabel));
      for (int i = 0; i < trials; ++i) {
        const EquivariantMap phi = random_map(m.cover().model(), m.cover().target(), m.cover().base_point(), 3.0, rng);
        const double gap = std::abs(i_energy(conj, conjugate_map(phi, lam, lifted)) - i_energy(m, phi));
        if (gap > worst) {
          worst = gap;
          witness = {{"index", k}, {"lambda", t}, {"gap", gap}};
        }
      }
    }
  }
  suite.add("conjugation identity", worst <= 1e-12, 1e-12 - worst, "max energy gap " + fmt(worst), witness);

  const EquivariantProblem base = generators::dihedral_line(3);
  const SolveReport b = minimize_energy(base, base.constant_map(), {.tol = 1e-12, .threads = opts.threads});
  const CoverSpec two = generators::dihedral_cover(2);
  const Gamma0Report c = gamma0_harmonic(CommEnergyModel(two), opts, seed + 1);
  const double lift_gap = rho(2.0, c.solve.solution, lift_to_cover(two, b.solution));
  suite.add("normal-cover coincidence", lift_gap <= 1e-5, 1e-5 - lift_gap, "rho to the lifted base map " + fmt(lift_gap),
            {{"rho", lift_gap}});

  const Gamma0Report d = gamma0_harmonic(CommEnergyModel(generators::dihedral_cover(1)), opts, seed + 2);
  suite.add("restart uniqueness", d.unique && !d.parallel_orbits, 10.0 * opts.tol - d.restart_gap,
            "restart gap " + fmt(d.restart_gap), {{"restart_gap", d.restart_gap}, {"parallel_orbits", d.parallel_orbits}});

  const Gamma0Report t = gamma0_harmonic(CommEnergyModel(trivial_cover(generators::translation_loop(3))), opts, seed + 3);
  suite.add("non-uniqueness reported", t.parallel_orbits && !t.unique, t.restart_gap - 10.0 * opts.tol,
            "translation model restart gap " + fmt(t.restart_gap),
            {{"restart_gap", t.restart_gap}, {"parallel_orbits", t.parallel_orbits}, {"unique", t.unique}});
  return suite;
}

Suite mazur_suite(const RunConfig& cfg) {
  Suite suite{"mazur", {}};
  Rng rng(verify_seed(cfg, suite.name));
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> u(-6.0, 0.0);
  const MeasureModel m({0.125, 0.125, 0.25, 0.25, 0.25});
  const std::vector<int> perm{1, 0, 4, 2, 3};
  auto unit = [&](std::vector<double> v, double p) {
    const double nrm = ScalarField(m, v, p).norm();
    for (double& x : v) x /= nrm;
    return ScalarField(m, std::move(v), p);
  };
  for (auto [p, q] : {std::pair{2.0, 4.0}, std::pair{3.0, 1.5}}) {
    const std::string tag = "(" + fmt(p) + "," + fmt(q) + ")";
    const double s = p / q;
    // Sup of |M f - M g|_q / |f - g|_p^min(1, s) on the unit sphere.
    const double cap = s <= 1.0 ? std::pow(2.0, 1.0 - s) : 2.0 * s;
    double round_trip = 0.0, ratio = 0.0;
    int mismatches = 0;
    json rt_w, pm_w, uc_w;
    for (int k = 0; k < cfg.verify.samples; ++k) {
      std::vector<double> v(5), w(5);
      for (double& x : v) x = gauss(rng);
      const ScalarField f = unit(v, p);
      const ScalarField g = mazur_map(f, p, q);
      const ScalarField back = mazur_map(g, q, p);
      for (int i = 0; i < 5; ++i) {
        const double e = std::abs(back.values()[i] - f.values()[i]) / std::max(1.0, std::abs(f.values()[i]));
        if (e > round_trip) {
          round_trip = e;
          rt_w = {{"f", f.values()}, {"back", back.values()}};
        }
      }
      if (mazur_map(f.permuted(perm), p, q).values() != g.permuted(perm).values() && mismatches++ == 0) {
        pm_w = {{"f", f.values()}};
      }
      // Partner at a random scale so that short and long distances both get probed.
      const double scale = std::pow(10.0, u(rng));
      for (int i = 0; i < 5; ++i) w[i] = f.values()[i] + scale * gauss(rng);
      const ScalarField h = unit(w, p);
      std::vector<double> df(5), dm(5);
      const ScalarField mh = mazur_map(h, p, q);
      for (int i = 0; i < 5; ++i) {
        df[i] = f.values()[i] - h.values()[i];
        dm[i] = g.values()[i] - mh.values()[i];
      }
      const double dist = ScalarField(m, df, p).norm();
      if (dist == 0.0) continue;
      const double r = ScalarField(m, dm, q).norm() / std::pow(dist, std::min(1.0, s));
      if (r > ratio) {
        ratio = r;
        uc_w = {{"f", f.values()}, {"g", h.values()}, {"ratio", r}};
      }
    }
    suite.add("round trip " + tag, round_trip <= 1e-12, 1e-12 - round_trip, "max relative error " + fmt(round_trip), rt_w);
    suite.add("permutation " + tag, mismatches == 0, -mismatches, std::to_string(mismatches) + " mismatches", pm_w);
    suite.add("uniform continuity " + tag, std::isfinite(ratio) && ratio <= cap, cap - ratio,
              "sampled modulus constant " + fmt(ratio) + " (bound " + fmt(cap) + ")", uc_w);
  }
  return suite;
}

// Random orthogonal matrix, row-major, by Gram-Schmidt on a Gaussian matrix.
std::vector<double> random_orthogonal(int d, Rng& rng) {
  std::normal_distribution<double> gauss;
  std::vector<std::vector<double>> rows;
  while (static_cast<int>(rows.size()) < d) {
    std::vector<double> v(d);
    for (double& x : v) x = gauss(rng);
    for (const auto& r : rows) {
      const double dot = std::inner_product(v.begin(), v.end(), r.begin(), 0.0);
      for (int i = 0; i < d; ++i) v[i] -= dot * r[i];
    }
    const double nrm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (nrm < 1e-6) continue;
    for (double& x : v) x /= nrm;
    rows.push_back(std::move(v));
  }
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

Suite clifford_suite(const RunConfig& cfg) {
  Suite suite{"clifford", {}};
  const Space& s = cfg.space;
  if (s.kind() != SpaceKind::Euclidean && s.kind() != SpaceKind::LpVector) {
    throw NotApplicable("the clifford suite needs a Euclidean or l_p space");
  }
  const std::uint64_t seed = verify_seed(cfg, suite.name);
  Rng rng(seed);
  std::normal_distribution<double> gauss;
  const int d = s.dim();
  constexpr int kCount = 100;
  int wrong = 0;
  double worst_half = 0.0;
  json tw, hw;
  for (int k = 0; k < kCount; ++k) {
    std::vector<double> v(d);
    for (double& x : v) x = gauss(rng);
    const Isometry T = Isometry::translation(v);
    const double c = s.distance(s.origin(), T.apply(s.origin()));
    const CliffordReport r = clifford_check(s, T, 20, 1e-9, seed + k);
    const double e = std::abs(r.halfway_displacement - 0.5 * c);
    if (!(r.is_clifford && r.halfway_ok) && wrong++ == 0) tw = {{"translation", v}, {"spread", r.spread}};
    if (e > worst_half) {
      worst_half = e;
      hw = {{"translation", v}, {"halfway_displacement", r.halfway_displacement}, {"expected", 0.5 * c}};
    }
  }
  suite.add("translations are Clifford", wrong == 0, -wrong, std::to_string(wrong) + " misclassified", tw);
  suite.add("halfway displacement", worst_half <= 1e-9, 1e-9 - worst_half, "max error " + fmt(worst_half), hw);

  wrong = 0;
  json nw;
  for (int k = 0; k < kCount; ++k) {
    std::vector<double> t(d);
    for (double& x : t) x = gauss(rng);
    Isometry T = Isometry::identity(s);
    if (s.kind() == SpaceKind::Euclidean && d >= 2) {
      std::vector<double> q;
      double off = 0.0;
      do {
        q = k % 2 ? random_orthogonal(d, rng) : std::vector<double>{};
        if (q.empty()) break;
        off = 0.0;
        for (int i = 0; i < d; ++i) off = std::max(off, std::abs(q[i * d + i] - 1.0));
      } while (off < 1e-2);
      T = q.empty() ? Isometry::hyperplane_reflection(t, gauss(rng)) : Isometry::orthogonal(d, q, t);
    } else {
      // A sign flip on one coordinate fixes a hyperplane and moves everything else.
      std::vector<int> perm(d), signs(d, 1);
      std::iota(perm.begin(), perm.end(), 0);
      signs[k % d] = -1;
      T = Isometry::signed_permutation(perm, signs, t);
    }
    const CliffordReport r = clifford_check(s, T, 20, 1e-9, seed + 1000 + k);
    if (r.is_clifford && wrong++ == 0) nw = {{"isometry", T.to_string()}, {"spread", r.spread}};
  }
  suite.add("non-translations are not Clifford", wrong == 0, -wrong, std::to_string(wrong) + " misclassified", nw);
  return suite;
}

using SuiteFn = Suite (*)(const RunConfig&);

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> r{
      {"parallelogram", parallelogram_suite}, {"modulus", modulus_suite},
      {"uc-witness", uc_suite},               {"solver-oracle", solver_oracle_suite},
      {"commensurability", commensurability_suite}, {"mazur", mazur_suite},
      {"clifford", clifford_suite}};
  return r;
}

json to_json(const CheckResult& r) {
  json j = {{"suite", r.suite},
            {"check", r.name},
            {"status", r.skipped ? "skipped" : r.passed ? "pass" : "fail"},
            {"worst_slack", r.worst_slack},
            {"detail", r.detail}};
  if (!r.witness.empty()) j["witness"] = json::parse(r.witness);
  return j;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  const Node root(doc, "");
  root.object({"schema", "space", "problem", "solver", "verify", "output"});
  const std::string schema = root.at("schema").str();
  if (schema != kSchema) root.at("schema").fail("must be '" + std::string(kSchema) + "' (got '" + schema + "')");
  RunConfig cfg;
  cfg.space = parse_space(root.at("space"));
  if (auto p = root.opt("problem")) {
    if (p->has("generator")) {
      parse_generator(*p, cfg);
    } else {
      parse_explicit(*p, cfg);
    }
  }
  if (auto s = root.opt("solver")) parse_solver(*s, cfg);
  if (auto v = root.opt("verify")) parse_verify(*v, cfg);
  if (auto o = root.opt("output")) {
    o->object({"dir"});
    cfg.out_dir = o->at("dir").str();
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply(RunConfig& cfg, const Overrides& o) {
  if (o.out) cfg.out_dir = *o.out;
  if (o.seed) {
    cfg.solver.seed = *o.seed;
    cfg.verify.seed = *o.seed;
  }
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads must be at least 1");
    cfg.solver.options.threads = *o.threads;
  }
}

SolveReport solve(const RunConfig& cfg, std::ostream& log) {
  if (!cfg.problem) throw ConfigError("config: missing required field 'problem'");
  const EquivariantProblem& prob = *cfg.problem;
  const SolverConfig& sc = cfg.solver;
  const EquivariantMap init = initial_map(cfg);
  ensure_dir(cfg.out_dir);

  const auto start = std::chrono::steady_clock::now();
  json extra = json::object();
  SolveReport rep = [&]() -> SolveReport {
    switch (sc.method) {
      case Method::Minimize:
        return minimize_energy(prob, init, sc.options);
      case Method::NormMinimal:
        return norm_minimal_minimizer(prob, sc.options, sc.schedule, init);
      case Method::Lexicographic: {
        std::vector<int> order = sc.class_order;
        if (order.empty()) {
          order.resize(prob.num_classes());
          std::iota(order.begin(), order.end(), 1);
        }
        return lexicographic_minimize(prob, order, sc.options);
      }
      case Method::Gamma0: {
        const std::uint64_t seed = need_seed(sc.seed, "solver.seed", "the gamma0 restart pair");
        const CommEnergyModel model(cfg.cover ? *cfg.cover : trivial_cover(prob));
        Gamma0Report g = gamma0_harmonic(model, sc.options, seed);
        extra["restart_gap"] = g.restart_gap;
        extra["unique"] = g.unique;
        extra["parallel_orbits"] = g.parallel_orbits;
        return g.solve;
      }
    }
    throw ConfigError("unknown solver method");
  }();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  {
    std::ofstream f = open_out(cfg.out_dir / "trace.csv");
    write_trace_csv(f, rep);
  }
  {
    std::ofstream f = open_out(cfg.out_dir / "solution.csv");
    write_solution_csv(f, rep.solution);
  }
  json summary = {{"schema", kSchema},
                  {"command", "solve"},
                  {"generator", cfg.generator.empty() ? json(nullptr) : json(cfg.generator)},
                  {"method", method_name(sc.method)},
                  {"space", prob.target().to_string()},
                  {"cells", prob.num_cells()},
                  {"energy", rep.energy},
                  {"class_energy", rep.class_energy},
                  {"norm", rep.norm},
                  {"iterations", rep.iterations},
                  {"converged", rep.converged},
                  {"seed", sc.seed ? json(*sc.seed) : json(nullptr)},
                  {"warnings", prob.warnings()}};
  if (sc.method == Method::NormMinimal) {
    summary["stage_gaps"] = rep.stage_gaps;
    summary["cauchy_ok"] = rep.cauchy_ok;
  }
  if (sc.method == Method::Lexicographic) {
    summary["stage_minima"] = rep.stage_minima;
    summary["stage_drift"] = rep.stage_drift;
  }
  for (const auto& [k, v] : extra.items()) summary[k] = v;
  summary["wall_time_s"] = wall;
  {
    std::ofstream f = open_out(cfg.out_dir / "summary.json");
    f << summary.dump(2) << '\n';
  }
  log << method_name(sc.method) << ": energy " << fmt(rep.energy) << ", norm " << fmt(rep.norm) << ", "
      << rep.iterations << " sweeps, " << (rep.converged ? "converged" : "not converged") << '\n';
  return rep;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : registry()) n.push_back(name);
    n.push_back("all");
    return n;
  }();
  return names;
}

std::vector<CheckResult> run_suite(const RunConfig& cfg, const std::string& suite) {
  std::vector<CheckResult> out;
  bool found = false;
  for (const auto& [name, fn] : registry()) {
    if (suite != "all" && suite != name) continue;
    found = true;
    try {
      Suite s = fn(cfg);
      out.insert(out.end(), s.out.begin(), s.out.end());
    } catch (const NotApplicable& e) {
      if (suite != "all") throw;
      out.push_back({name, "applicability", true, true, 0.0, e.what(), ""});
    }
  }
  if (!found) {
    std::string list;
    for (const std::string& n : suite_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown suite '" + suite + "'; expected one of " + list);
  }
  return out;
}

int verify(const RunConfig& cfg, const std::string& suite, std::ostream& log) {
  const std::vector<CheckResult> results = run_suite(cfg, suite);
  ensure_dir(cfg.out_dir);
  json report = {{"schema", kSchema}, {"command", "verify"}, {"suite", suite}, {"samples", cfg.verify.samples},
                 {"seed", cfg.verify.seed ? json(*cfg.verify.seed) : json(nullptr)}, {"checks", json::array()}};
  json failures = json::array();
  for (const CheckResult& r : results) {
    report["checks"].push_back(to_json(r));
    log << (r.skipped ? "SKIP" : r.passed ? "PASS" : "FAIL") << ' ' << r.suite << '/' << r.name
        << " slack=" << fmt(r.worst_slack) << " (" << r.detail << ")\n";
    if (!r.passed && !r.skipped) failures.push_back(to_json(r));
  }
  report["passed"] = failures.empty();
  {
    std::ofstream f = open_out(cfg.out_dir / "report.json");
    f << report.dump(2) << '\n';
  }
  if (failures.empty()) return kSuccess;
  std::ofstream f = open_out(cfg.out_dir / "witness.json");
  f << failures.dump(2) << '\n';
  log << "failing witness written to " << (cfg.out_dir / "witness.json").string() << '\n';
  return kCheckFailed;
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Harmonic maps and convexity checks in Busemann non-positively curved spaces", "bnpc"};
  app.require_subcommand(1);
  std::string config, suite;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  auto common = [&](CLI::App* sub) {
    sub->add_option("config", config, "Run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Seed for stochastic routines, overriding the config");
    sub->add_option("--threads", threads, "Worker threads");
  };
  CLI::App* solve_cmd = app.add_subcommand("solve", "Minimize the configured energy and write its artifacts");
  common(solve_cmd);
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run a property suite");
  common(verify_cmd);
  verify_cmd->add_option("--suite", suite, "Suite name")->required()->check(CLI::IsMember(suite_names()));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kSuccess : kInvalidInput;
  }

  RunConfig cfg;
  try {
    cfg = load_config(config);
    Overrides o;
    if (out_dir) o.out = *out_dir;
    o.seed = seed;
    o.threads = threads;
    apply(cfg, o);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  }
  try {
    if (*solve_cmd) {
      solve(cfg, out);
      return kSuccess;
    }
    return verify(cfg, suite, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "solver error: " << e.what() << '\n';
    return kSolverFailed;
  }
}

}  // namespace bnpc::cli
