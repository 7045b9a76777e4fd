#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hjbfem/assembly.hpp"
#include "hjbfem/diagnostics.hpp"
#include "hjbfem/errors.hpp"
#include "hjbfem/solver.hpp"

namespace py = pybind11;
using namespace hjbfem;

namespace {

// Python floats become constant fields, callables f(x, y) general ones.
ScalarField to_scalar(const py::object &value) {
    if (py::isinstance<py::float_>(value) || py::isinstance<py::int_>(value))
        return ScalarField::constant(value.cast<double>());
    auto f = value.cast<std::function<double(double, double)>>();
    return ScalarField([f](const Point &p) { return f(p.x(), p.y()); });
}

VectorField to_vector(const py::object &value) {
    if (py::isinstance<py::float_>(value) || py::isinstance<py::int_>(value))
        return VectorField::constant(Point(value.cast<double>(), 0.0));
    if (py::isinstance<py::tuple>(value) || py::isinstance<py::list>(value)) {
        auto items = value.cast<std::vector<py::object>>();
        if (items.size() != 2)
            throw py::value_error("drift needs two components");
        const ScalarField bx = to_scalar(items[0]), by = to_scalar(items[1]);
        if (bx.constant_value() && by.constant_value())
            return VectorField::constant(Point(*bx.constant_value(), *by.constant_value()));
        return VectorField([bx, by](const Point &p) { return Point(bx(p), by(p)); });
    }
    auto f = value.cast<std::function<std::pair<double, double>(double, double)>>();
    return VectorField([f](const Point &p) {
        const auto [bx, by] = f(p.x(), p.y());
        return Point(bx, by);
    });
}

Eigen::MatrixXd node_array(const Mesh &mesh) {
    Eigen::MatrixXd out(mesh.node_count(), mesh.dimension());
    for (Index i = 0; i < mesh.node_count(); ++i)
        for (int d = 0; d < mesh.dimension(); ++d)
            out(i, d) = mesh.nodes()[i][d];
    return out;
}

Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> element_array(const Mesh &mesh) {
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> out(mesh.element_count(), mesh.vertices_per_element());
    for (Index e = 0; e < mesh.element_count(); ++e)
        for (int k = 0; k < mesh.vertices_per_element(); ++k)
            out(e, k) = mesh.elements()[e].vertices[k];
    return out;
}

// Everything assembled for one problem on one mesh.
struct Discretization {
    std::shared_ptr<const Mesh> mesh;
    ControlProblem problem;
    OperatorSplitting splitting;
    DiffusionBudget budget;
    DiscreteOperatorSet ops;
};

Discretization discretize(std::shared_ptr<const Mesh> mesh, const ControlProblem &problem,
                          SplittingMode mode, const std::string &diffusion, double diffusion_scale) {
    Discretization d{std::move(mesh), problem, {}, {}, {}};
    d.splitting = make_splitting(problem, *d.mesh, mode);
    const auto rule = parse_diffusion_rule(diffusion);
    if (!rule)
        throw ConfigurationError("unknown diffusion rule '" + diffusion + "'");
    d.budget = compute_diffusion_budget(*d.mesh, d.splitting, acuteness_certificate(*d.mesh), *rule);
    if (diffusion_scale != 1.0)
        d.budget = scale_diffusion_budget(d.budget, diffusion_scale);
    d.ops = assemble(*d.mesh, d.splitting, d.budget);
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Monotone P1 finite elements for parabolic HJB equations";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigurationError>(m, "ConfigurationError", PyExc_ValueError);
    py::register_exception<MonotonicityError>(m, "MonotonicityError", PyExc_RuntimeError);
    py::register_exception<CertificationError>(m, "CertificationError", PyExc_RuntimeError);
    py::register_exception<NonConvergenceError>(m, "NonConvergenceError", PyExc_RuntimeError);
    py::register_exception<QueryError>(m, "QueryError", PyExc_ValueError);

    py::enum_<MeshPattern>(m, "MeshPattern")
        .value("consistent", MeshPattern::consistent)
        .value("inconsistent", MeshPattern::inconsistent)
        .value("equilateral", MeshPattern::equilateral);
    py::enum_<SplittingMode>(m, "SplittingMode")
        .value("explicit", SplittingMode::explicit_scheme)
        .value("implicit", SplittingMode::implicit_scheme)
        .value("semi_implicit", SplittingMode::semi_implicit);

    py::class_<Mesh, std::shared_ptr<Mesh>>(m, "Mesh")
        .def_property_readonly("dimension", &Mesh::dimension)
        .def_property_readonly("node_count", &Mesh::node_count)
        .def_property_readonly("interior_count", &Mesh::interior_count)
        .def_property_readonly("element_count", &Mesh::element_count)
        .def_property_readonly("mesh_size", &Mesh::mesh_size)
        .def_property_readonly("nodes", &node_array, "Coordinates, interior nodes first")
        .def_property_readonly("elements", &element_array)
        .def("hat_l1_norm", &Mesh::hat_l1_norm)
        .def("write", [](const Mesh &mesh, const std::filesystem::path &path) { write_mesh(path.string(), mesh); });

    m.def("interval_mesh", [](double a, double b, Index n) { return std::make_shared<Mesh>(build_interval_mesh(a, b, n)); },
          py::arg("a"), py::arg("b"), py::arg("elements"));
    m.def("rectangle_mesh",
          [](Index nx, Index ny, MeshPattern pattern, double x0, double x1, double y0, double y1) {
              return std::make_shared<Mesh>(build_patterned_rectangle_mesh(Rectangle{x0, x1, y0, y1}, nx, ny, pattern));
          },
          py::arg("nx"), py::arg("ny"), py::arg("pattern") = MeshPattern::equilateral, py::arg("x0") = 0.0,
          py::arg("x1") = 1.0, py::arg("y0") = 0.0, py::arg("y1") = 1.0);
    m.def("read_mesh", [](const std::filesystem::path &path) { return std::make_shared<Mesh>(read_mesh(path.string())); });

    py::class_<AcutenessCertificate>(m, "AcutenessCertificate")
        .def_readonly("sin_theta", &AcutenessCertificate::sin_theta)
        .def_readonly("strictly_acute", &AcutenessCertificate::strictly_acute)
        .def_readonly("worst_element", &AcutenessCertificate::worst_element)
        .def_property_readonly("worst_pair", [](const AcutenessCertificate &c) {
            return std::make_pair(c.worst_node_a, c.worst_node_b);
        });
    m.def("acuteness_certificate", [](const Mesh &mesh) { return acuteness_certificate(mesh); });

    py::class_<ControlProblem>(m, "ControlProblem")
        .def(py::init([](int dimension, double horizon, const py::object &final_data) {
                 ControlProblem p;
                 p.dimension = dimension;
                 p.horizon = horizon;
                 p.final_data = to_scalar(final_data);
                 return p;
             }),
             py::arg("dimension"), py::arg("horizon") = 1.0, py::arg("final_data") = 0.0)
        .def("add_control",
             [](ControlProblem &p, const std::string &label, const py::object &diffusion, const py::object &drift,
                const py::object &reaction, const py::object &cost) {
                 p.controls.push_back({label, to_scalar(diffusion), to_vector(drift), to_scalar(reaction),
                                       to_scalar(cost)});
             },
             py::arg("label"), py::arg("diffusion") = 0.0, py::arg("drift") = 0.0, py::arg("reaction") = 0.0,
             py::arg("cost") = 0.0,
             "Scalars are constants; callables take (x, y). drift may be a pair or a callable returning one.")
        .def_readwrite("horizon", &ControlProblem::horizon)
        .def_readonly("dimension", &ControlProblem::dimension)
        .def_property_readonly("labels", [](const ControlProblem &p) {
            std::vector<std::string> out;
            for (const auto &c : p.controls)
                out.push_back(c.label);
            return out;
        });
    m.def("eikonal_problem", &eikonal_problem);
    m.def("diffusion_control_problem", &diffusion_control_problem, py::arg("controls"));
    m.def("eikonal_solution", [](double t, double x) { return eikonal_solution(t, Point(x, 0.0)); });

    py::class_<MonotonicityReport>(m, "MonotonicityReport")
        .def_readonly("h", &MonotonicityReport::h)
        .def_readonly("max_stable_h", &MonotonicityReport::max_stable_h)
        .def_property_readonly("admissible", &MonotonicityReport::admissible)
        .def("describe_failure", &MonotonicityReport::describe_failure);

    py::class_<Discretization>(m, "Discretization")
        .def(py::init(&discretize), py::arg("mesh"), py::arg("problem"),
             py::arg("mode") = SplittingMode::implicit_scheme, py::arg("diffusion") = "patch_bound",
             py::arg("diffusion_scale") = 1.0)
        .def_property_readonly("mesh", [](const Discretization &d) { return std::const_pointer_cast<Mesh>(d.mesh); })
        .def_property_readonly("control_count", [](const Discretization &d) { return d.ops.control_count(); })
        .def("explicit_matrix", [](const Discretization &d, Index k) { return Eigen::SparseMatrix<double>(d.ops.controls.at(k).explicit_part); })
        .def("implicit_matrix", [](const Discretization &d, Index k) { return Eigen::SparseMatrix<double>(d.ops.controls.at(k).implicit_part); })
        .def("source", [](const Discretization &d, Index k) { return d.ops.controls.at(k).source; })
        .def("artificial_diffusion", [](const Discretization &d, Index k) {
            const auto &c = d.budget.controls.at(static_cast<std::size_t>(k));
            return std::make_pair(c.nu_explicit, c.nu_implicit);
        })
        .def("certify", [](const Discretization &d, double h) { return certify_monotonicity(d.ops, h); })
        .def("max_stable_h", [](const Discretization &d) { return certify_monotonicity(d.ops, 1.0).max_stable_h; })
        .def("solve",
             [](const Discretization &d, double h, std::optional<double> tol, Index max_iter) {
                 SolverOptions options;
                 options.tol = tol;
                 options.max_iter = max_iter;
                 return backward_solve(d.problem, d.mesh, d.splitting, d.budget,
                                       TimeGrid::from_step(d.problem.horizon, h), options);
             },
             py::arg("h"), py::arg("tol") = py::none(), py::arg("max_iter") = 50)
        .def("solve_fixed_control",
             [](const Discretization &d, double h, Index control) {
                 return fixed_control_solve(d.problem, d.mesh, d.splitting, d.budget,
                                            TimeGrid::from_step(d.problem.horizon, h), control);
             },
             py::arg("h"), py::arg("control"));

    py::class_<DiscreteSolution>(m, "Solution")
        .def_property_readonly("values", &DiscreteSolution::values, "Rows are time levels, columns nodes")
        .def_property_readonly("times", [](const DiscreteSolution &s) {
            Eigen::VectorXd t(s.grid().steps + 1);
            for (Index k = 0; k <= s.grid().steps; ++k)
                t[k] = s.grid().level(k);
            return t;
        })
        .def_property_readonly("min_value", &DiscreteSolution::min_value)
        .def("evaluate", [](const DiscreteSolution &s, double t, double x, double y) { return s.evaluate(t, Point(x, y)); },
             py::arg("t"), py::arg("x"), py::arg("y") = 0.0)
        .def("gradient", [](const DiscreteSolution &s, double t, double x, double y) {
                 const Point g = s.gradient(t, Point(x, y));
                 return std::make_pair(g.x(), g.y());
             },
             py::arg("t"), py::arg("x"), py::arg("y") = 0.0);

    py::class_<SolveResult>(m, "SolveResult")
        .def_readonly("solution", &SolveResult::solution)
        .def_readonly("certification", &SolveResult::certification)
        .def_property_readonly("iterations", [](const SolveResult &r) {
            std::vector<Index> out;
            for (const auto &level : r.report.levels)
                out.push_back(level.iterations);
            return out;
        }, "Policy iterations per time step, from the last step down to the first")
        .def_property_readonly("residuals", [](const SolveResult &r) {
            std::vector<std::vector<double>> out;
            for (const auto &level : r.report.levels)
                out.push_back(level.residuals);
            return out;
        })
        .def_property_readonly("policy", [](const SolveResult &r) {
            std::vector<std::vector<Index>> out;
            for (const auto &level : r.report.levels)
                out.push_back(level.policy);
            return out;
        });

    py::class_<ConvergenceRow>(m, "ConvergenceRow")
        .def_readonly("mesh_size", &ConvergenceRow::mesh_size)
        .def_readonly("h", &ConvergenceRow::h)
        .def_readonly("linf_error", &ConvergenceRow::linf_error)
        .def_readonly("l2h1_error", &ConvergenceRow::l2h1_error);
    m.def("eikonal_benchmark",
          [](SplittingMode mode, const std::vector<Index> &elements, double cfl) {
              return eikonal_benchmark(mode, elements, cfl);
          },
          py::arg("mode"), py::arg("elements"), py::arg("cfl") = 1.0);

    py::class_<ConsistencyProbe>(m, "ConsistencyProbe")
        .def_readonly("spacing", &ConsistencyProbe::spacing)
        .def_property_readonly("interpolant_ratio", &ConsistencyProbe::interpolant_ratio)
        .def_property_readonly("projection_ratio", &ConsistencyProbe::projection_ratio);
    m.def("consistency_experiment",
          [](MeshPattern pattern, const std::vector<double> &spacings) {
              return consistency_experiment(pattern, sine_product_field(), Point(0.5, 0.5), spacings);
          },
          py::arg("pattern"), py::arg("spacings"),
          "Stiffness-action probes of sin(pi x) sin(pi y) at the center of the unit square");
    m.def("l2h1_difference", &l2h1_difference, py::arg("coarse"), py::arg("fine"));
}
