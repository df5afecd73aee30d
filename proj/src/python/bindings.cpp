#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "bnpc/cli.hpp"
#include "bnpc/commensurability.hpp"
#include "bnpc/convexity.hpp"
#include "bnpc/generators.hpp"
#include "bnpc/harmonic.hpp"
#include "bnpc/mapspace.hpp"

namespace py = pybind11;
using namespace bnpc;

namespace {

void bind_geometry(py::module_& m) {
  py::enum_<SpaceKind>(m, "SpaceKind")
      .value("Euclidean", SpaceKind::Euclidean)
      .value("LpVector", SpaceKind::LpVector)
      .value("MetricTree", SpaceKind::MetricTree)
      .value("Product", SpaceKind::Product);
  py::enum_<PointKind>(m, "PointKind")
      .value("Vector", PointKind::Vector)
      .value("Tree", PointKind::Tree)
      .value("Product", PointKind::Product);

  py::class_<TreeEdge>(m, "TreeEdge")
      .def(py::init<int, int, double>(), py::arg("u"), py::arg("v"), py::arg("length") = 1.0)
      .def_readwrite("u", &TreeEdge::u)
      .def_readwrite("v", &TreeEdge::v)
      .def_readwrite("length", &TreeEdge::length);

  py::class_<Point>(m, "Point")
      .def(py::init([](std::vector<double> c) { return Point::vector(std::move(c)); }), py::arg("coords"))
      .def(py::init([](double x) { return Point::scalar(x); }), py::arg("x"))
      .def_static("vector", &Point::vector, py::arg("coords"))
      .def_static("scalar", &Point::scalar, py::arg("x"))
      .def_static("tree_vertex", &Point::tree_vertex, py::arg("v"))
      .def_static("product", &Point::product, py::arg("factors"))
      .def_property_readonly("kind", &Point::kind)
      .def_property_readonly("coords",
                             [](const Point& p) { return std::vector<double>(p.coords().begin(), p.coords().end()); })
      .def_property_readonly("factors", &Point::factors)
      .def_property_readonly("tree_vertex_index", [](const Point& p) { return p.tree().vertex; })
      .def_property_readonly("tree_edge", [](const Point& p) { return p.tree().edge; })
      .def_property_readonly("tree_offset", [](const Point& p) { return p.tree().offset; })
      .def("__eq__", [](const Point& a, const Point& b) { return a == b; })
      .def("__repr__", &Point::to_string);
  py::implicitly_convertible<py::list, Point>();
  py::implicitly_convertible<py::tuple, Point>();
  py::implicitly_convertible<py::float_, Point>();
  py::implicitly_convertible<py::int_, Point>();

  py::class_<Space>(m, "Space")
      .def_static("euclidean", &Space::euclidean, py::arg("dim"))
      .def_static("lp", &Space::lp, py::arg("dim"), py::arg("p"))
      .def_static("tree", &Space::tree, py::arg("num_vertices"), py::arg("edges"))
      .def_static("product", &Space::product, py::arg("factors"), py::arg("q") = 2.0)
      .def_property_readonly("kind", &Space::kind)
      .def_property_readonly("dim", &Space::dim)
      .def_property_readonly("p", &Space::p)
      .def("distance", &Space::distance, py::arg("x"), py::arg("y"))
      .def("geodesic_point", &Space::geodesic_point, py::arg("x"), py::arg("y"), py::arg("t"))
      .def("midpoint", &Space::midpoint, py::arg("x"), py::arg("y"))
      .def("extend", &Space::extend, py::arg("x"), py::arg("y"), py::arg("length"))
      .def("origin", &Space::origin)
      .def("contains", &Space::contains, py::arg("x"))
      .def("tree_point", &Space::tree_point, py::arg("edge"), py::arg("offset"))
      .def(
          "sample",
          [](const Space& s, const Point& c, double radius, std::uint64_t seed) {
            Rng rng(seed);
            return s.sample(c, radius, rng);
          },
          py::arg("center"), py::arg("radius"), py::arg("seed"))
      .def("__eq__", [](const Space& a, const Space& b) { return a == b; })
      .def("__repr__", &Space::to_string);

  py::class_<Isometry>(m, "Isometry")
      .def_static("identity", &Isometry::identity, py::arg("space"))
      .def_static("translation", &Isometry::translation, py::arg("by"))
      .def_static("point_reflection", &Isometry::point_reflection, py::arg("dim"))
      .def_static("orthogonal", &Isometry::orthogonal, py::arg("dim"), py::arg("matrix"), py::arg("translation"))
      .def_static("rotation2d", &Isometry::rotation2d, py::arg("angle"),
                  py::arg("translation") = std::vector<double>{0.0, 0.0})
      .def_static("hyperplane_reflection", &Isometry::hyperplane_reflection, py::arg("normal"), py::arg("offset") = 0.0)
      .def_static("signed_permutation", &Isometry::signed_permutation, py::arg("perm"), py::arg("signs"),
                  py::arg("translation"))
      .def_static("tree_automorphism", &Isometry::tree_automorphism, py::arg("tree"), py::arg("vertex_perm"))
      .def_static("product", &Isometry::product, py::arg("factors"))
      .def("apply", &Isometry::apply, py::arg("x"))
      .def("__call__", &Isometry::apply, py::arg("x"))
      .def("inverse", &Isometry::inverse)
      .def("is_identity", &Isometry::is_identity)
      .def("__matmul__", [](const Isometry& a, const Isometry& b) { return compose(a, b); })
      .def("__repr__", &Isometry::to_string);
}

void bind_convexity(py::module_& m) {
  py::class_<ModulusEstimate>(m, "ModulusEstimate")
      .def_readonly("feasible", &ModulusEstimate::feasible)
      .def_readonly("delta", &ModulusEstimate::delta)
      .def_readonly("y1", &ModulusEstimate::y1)
      .def_readonly("y2", &ModulusEstimate::y2);
  py::class_<Circumcenter>(m, "Circumcenter")
      .def_readonly("center", &Circumcenter::center)
      .def_readonly("radius", &Circumcenter::radius)
      .def_readonly("gap", &Circumcenter::gap);
  py::class_<CliffordReport>(m, "CliffordReport")
      .def_readonly("is_clifford", &CliffordReport::is_clifford)
      .def_readonly("displacement", &CliffordReport::displacement)
      .def_readonly("spread", &CliffordReport::spread)
      .def_readonly("halfway_ok", &CliffordReport::halfway_ok)
      .def_readonly("halfway_displacement", &CliffordReport::halfway_displacement);

  m.def("modulus_estimate", &modulus_estimate, py::arg("space"), py::arg("x"), py::arg("eps"), py::arg("r"),
        py::arg("budget"), py::arg("seed") = 1);
  m.def("circumcenter", &circumcenter, py::arg("space"), py::arg("points"), py::arg("relative") = false,
        py::arg("tol") = 1e-9, py::arg("hull_depth") = 4);
  m.def("parallel_check", &parallel_check, py::arg("space"), py::arg("a"), py::arg("b"), py::arg("x"), py::arg("y"),
        py::arg("tol") = 1e-9);
  m.def("clifford_check", &clifford_check, py::arg("space"), py::arg("isometry"), py::arg("samples"),
        py::arg("tol") = 1e-9, py::arg("seed") = 1, py::arg("radius") = 10.0);
  m.def(
      "minimize_convex",
      [](const Space& s, const std::function<double(const Point&)>& f, const Point& x0, double tol, std::uint64_t seed) {
        py::gil_scoped_release release;
        return minimize_convex(s, {[&](const Point& x) {
                                    py::gil_scoped_acquire acquire;
                                    return f(x);
                                  }},
                               x0, tol, {.seed = seed});
      },
      py::arg("space"), py::arg("f"), py::arg("x0"), py::arg("tol") = 1e-9, py::arg("seed") = 1);
  m.def("closed_form_modulus", &closed_form_modulus, py::arg("space"), py::arg("eps"));
  m.def("banach_modulus", &banach_modulus, py::arg("p"), py::arg("eps"));
}

void bind_maps(py::module_& m) {
  py::class_<MeasureModel>(m, "MeasureModel")
      .def(py::init<std::vector<double>>(), py::arg("weights"))
      .def_static("uniform", &MeasureModel::uniform, py::arg("cells"))
      .def_property_readonly("weights", &MeasureModel::weights)
      .def("__len__", &MeasureModel::size);

  py::class_<EquivariantMap>(m, "EquivariantMap")
      .def(py::init<MeasureModel, Space, std::vector<Point>>(), py::arg("model"), py::arg("target"), py::arg("values"))
      .def_static("constant", &EquivariantMap::constant, py::arg("model"), py::arg("target"), py::arg("x"))
      .def_property_readonly("model", &EquivariantMap::model)
      .def_property_readonly("target", &EquivariantMap::target)
      .def_property_readonly("values", &EquivariantMap::values)
      .def("__len__", &EquivariantMap::size)
      .def("__getitem__", &EquivariantMap::value);

  py::class_<ScalarField>(m, "ScalarField")
      .def(py::init<MeasureModel, std::vector<double>, double>(), py::arg("model"), py::arg("values"), py::arg("p"))
      .def_property_readonly("values", &ScalarField::values)
      .def_property_readonly("exponent", &ScalarField::exponent)
      .def("norm", &ScalarField::norm)
      .def("permuted", &ScalarField::permuted, py::arg("perm"));

  m.def("rho", &rho, py::arg("p"), py::arg("phi"), py::arg("psi"));
  m.def("map_norm", &map_norm, py::arg("p"), py::arg("phi"), py::arg("x0"));
  m.def("map_midpoint", &map_midpoint, py::arg("phi"), py::arg("psi"));
  m.def("mazur_map", &mazur_map, py::arg("f"), py::arg("p"), py::arg("q"));
}

void bind_harmonic(py::module_& m) {
  py::class_<Edge>(m, "Edge")
      .def(py::init([](int src, int dst, double weight, Isometry twist, int cls) {
             return Edge{src, dst, weight, std::move(twist), cls};
           }),
           py::arg("src"), py::arg("dst"), py::arg("weight"), py::arg("twist"), py::arg("cls") = 1)
      .def_readonly("src", &Edge::src)
      .def_readonly("dst", &Edge::dst)
      .def_readonly("weight", &Edge::weight)
      .def_readonly("twist", &Edge::twist)
      .def_readonly("cls", &Edge::cls);

  py::class_<EquivariantProblem>(m, "EquivariantProblem")
      .def(py::init<MeasureModel, Space, Point, std::vector<Edge>, double>(), py::arg("model"), py::arg("target"),
           py::arg("base_point"), py::arg("edges"), py::arg("p") = 2.0)
      .def_property_readonly("model", &EquivariantProblem::model)
      .def_property_readonly("target", &EquivariantProblem::target)
      .def_property_readonly("base_point", &EquivariantProblem::base_point)
      .def_property_readonly("edges", &EquivariantProblem::edges)
      .def_property_readonly("num_cells", &EquivariantProblem::num_cells)
      .def_property_readonly("num_classes", &EquivariantProblem::num_classes)
      .def_property_readonly("warnings", &EquivariantProblem::warnings)
      .def("constant_map", &EquivariantProblem::constant_map);

  py::enum_<SweepMode>(m, "SweepMode")
      .value("GaussSeidel", SweepMode::GaussSeidel)
      .value("Jacobi", SweepMode::Jacobi);

  py::class_<SolverOptions>(m, "SolverOptions")
      .def(py::init([](double tol, int max_sweeps, SweepMode mode, int threads, bool exact_quadratic) {
             return SolverOptions{tol, max_sweeps, mode, threads, exact_quadratic};
           }),
           py::arg("tol") = 1e-9, py::arg("max_sweeps") = 20000, py::arg("mode") = SweepMode::GaussSeidel,
           py::arg("threads") = 1, py::arg("exact_quadratic") = true)
      .def_readwrite("tol", &SolverOptions::tol)
      .def_readwrite("max_sweeps", &SolverOptions::max_sweeps)
      .def_readwrite("mode", &SolverOptions::mode)
      .def_readwrite("threads", &SolverOptions::threads)
      .def_readwrite("exact_quadratic", &SolverOptions::exact_quadratic);

  py::class_<TraceRow>(m, "TraceRow")
      .def_readonly("sweep", &TraceRow::sweep)
      .def_readonly("energy", &TraceRow::energy)
      .def_readonly("class_energy", &TraceRow::class_energy)
      .def_readonly("norm", &TraceRow::norm)
      .def_readonly("max_move", &TraceRow::max_move);

  py::class_<SolveReport>(m, "SolveReport")
      .def_readonly("solution", &SolveReport::solution)
      .def_readonly("energy", &SolveReport::energy)
      .def_readonly("class_energy", &SolveReport::class_energy)
      .def_readonly("norm", &SolveReport::norm)
      .def_readonly("iterations", &SolveReport::iterations)
      .def_readonly("converged", &SolveReport::converged)
      .def_readonly("trace", &SolveReport::trace)
      .def_readonly("stage_gaps", &SolveReport::stage_gaps)
      .def_readonly("cauchy_ok", &SolveReport::cauchy_ok)
      .def_readonly("stage_minima", &SolveReport::stage_minima)
      .def_readonly("stage_drift", &SolveReport::stage_drift);

  const SolverOptions defaults{};
  m.def(
      "energy",
      [](const EquivariantProblem& prob, const EquivariantMap& phi, std::optional<std::set<int>> classes) {
        return energy(prob, phi, classes);
      },
      py::arg("problem"), py::arg("phi"), py::arg("classes") = std::nullopt);
  m.def("minimize_energy", &minimize_energy, py::arg("problem"), py::arg("init"), py::arg("options") = defaults,
        py::call_guard<py::gil_scoped_release>());
  m.def("norm_minimal_minimizer", &norm_minimal_minimizer, py::arg("problem"), py::arg("options") = defaults,
        py::arg("schedule") = default_schedule(), py::arg("init") = std::nullopt,
        py::call_guard<py::gil_scoped_release>());
  m.def("lexicographic_minimize", &lexicographic_minimize, py::arg("problem"), py::arg("class_order"),
        py::arg("options") = defaults, py::call_guard<py::gil_scoped_release>());
  m.def("default_schedule", &default_schedule);
}

void bind_commensurability(py::module_& m) {
  py::class_<CosetAction>(m, "CosetAction")
      .def(py::init([](Isometry twist, std::vector<int> perm) { return CosetAction{std::move(twist), std::move(perm)}; }),
           py::arg("twist"), py::arg("perm"))
      .def_readonly("twist", &CosetAction::twist)
      .def_readonly("perm", &CosetAction::perm);

  py::class_<CoverSpec>(m, "CoverSpec")
      .def(py::init([](EquivariantProblem base, int index, std::vector<CosetAction> actions, int check_length) {
             return CoverSpec{std::move(base), index, std::move(actions), check_length};
           }),
           py::arg("base"), py::arg("index"), py::arg("actions"), py::arg("check_length") = 3)
      .def_readonly("base", &CoverSpec::base)
      .def_readonly("index", &CoverSpec::index)
      .def_readonly("actions", &CoverSpec::actions);

  py::class_<CommEnergyModel>(m, "CommEnergyModel")
      .def(py::init<const CoverSpec&, double, double>(), py::arg("cover"), py::arg("kernel_scale") = 1.0,
           py::arg("truncation_residual") = 0.0)
      .def_property_readonly("cover", &CommEnergyModel::cover);

  py::class_<Gamma0Report>(m, "Gamma0Report")
      .def_readonly("solve", &Gamma0Report::solve)
      .def_readonly("restart", &Gamma0Report::restart)
      .def_readonly("restart_gap", &Gamma0Report::restart_gap)
      .def_readonly("parallel_orbits", &Gamma0Report::parallel_orbits)
      .def_readonly("unique", &Gamma0Report::unique);

  m.def("build_cover", &build_cover, py::arg("cover"));
  m.def("lift_to_cover", &lift_to_cover, py::arg("cover"), py::arg("phi"));
  m.def("i_energy", &i_energy, py::arg("model"), py::arg("phi"));
  m.def("gamma0_harmonic", &gamma0_harmonic, py::arg("model"), py::arg("options") = SolverOptions{},
        py::arg("seed") = 1, py::arg("sample_pairs") = 200, py::call_guard<py::gil_scoped_release>());
  m.def("conjugate_map", &conjugate_map, py::arg("phi"), py::arg("lam"), py::arg("relabel"));
  m.def("conjugate_cover", &conjugate_cover, py::arg("cover"), py::arg("lam"), py::arg("relabel"));
  m.def("cover_relabel", &cover_relabel, py::arg("cover"), py::arg("relabel"));

  py::module_ g = m.def_submodule("generators", "Named model problems");
  py::enum_<generators::DihedralSubgroup>(g, "DihedralSubgroup")
      .value("Dihedral", generators::DihedralSubgroup::Dihedral)
      .value("Translation", generators::DihedralSubgroup::Translation);
  g.def("consensus", &generators::consensus, py::arg("cells") = 2, py::arg("target") = std::nullopt);
  g.def("translation_loop", &generators::translation_loop, py::arg("cells") = 1, py::arg("base") = 0.0);
  g.def("dihedral_line", &generators::dihedral_line, py::arg("cells") = 3);
  g.def("product_two_class", &generators::product_two_class);
  g.def("dihedral_cover", &generators::dihedral_cover, py::arg("k"),
        py::arg("subgroup") = generators::DihedralSubgroup::Dihedral, py::arg("cells") = 3);
  g.def("cyclic_cover", &generators::cyclic_cover, py::arg("base"), py::arg("k"));
}

void bind_cli(py::module_& m) {
  py::class_<cli::CheckResult>(m, "CheckResult")
      .def_readonly("suite", &cli::CheckResult::suite)
      .def_readonly("name", &cli::CheckResult::name)
      .def_readonly("passed", &cli::CheckResult::passed)
      .def_readonly("skipped", &cli::CheckResult::skipped)
      .def_readonly("worst_slack", &cli::CheckResult::worst_slack)
      .def_readonly("detail", &cli::CheckResult::detail)
      .def_readonly("witness", &cli::CheckResult::witness);

  m.def(
      "solve_config",
      [](const std::string& text, const std::filesystem::path& out_dir) {
        cli::RunConfig cfg = cli::parse_config(text);
        cfg.out_dir = out_dir;
        std::ostringstream log;
        py::gil_scoped_release release;
        return cli::solve(cfg, log);
      },
      py::arg("config"), py::arg("out_dir"), "Parses a JSON run configuration, solves it and writes the artifacts.");
  m.def(
      "verify_config",
      [](const std::string& text, const std::string& suite) {
        const cli::RunConfig cfg = cli::parse_config(text);
        py::gil_scoped_release release;
        return cli::run_suite(cfg, suite);
      },
      py::arg("config"), py::arg("suite"));
  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "bnpc");
        std::vector<char*> argv;
        for (std::string& a : args) argv.push_back(a.data());
        std::ostringstream out, err;
        const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line; returns (exit code, stdout, stderr).");
}

}  // namespace

PYBIND11_MODULE(_bnpc, m) {
  m.doc() = "Harmonic maps and convexity checks in Busemann non-positively curved spaces";

  auto domain = py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<InvariantViolation>(m, "InvariantViolation", PyExc_RuntimeError);
  py::register_exception<cli::ConfigError>(m, "ConfigError", domain.ptr());

  bind_geometry(m);
  bind_convexity(m);
  bind_maps(m);
  bind_harmonic(m);
  bind_commensurability(m);
  bind_cli(m);
}
