#include "hjbfem/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <Eigen/SparseCholesky>

#include "hjbfem/errors.hpp"
#include "local_matrices.hpp"
#include "quadrature.hpp"

namespace hjbfem {

namespace {

using Triplet = Eigen::Triplet<double, Index>;

constexpr unsigned kErrorPoints = 3;
constexpr unsigned kProbePoints = 12;

// |grad u|^2 style bilinear form sum_T vol grad u . grad v.
double stiffness_form(const Mesh &mesh, const Eigen::VectorXd &u, const Eigen::VectorXd &v) {
    double total = 0.0;
    for (const Element &el : mesh.elements()) {
        Point gu = Point::Zero(), gv = Point::Zero();
        for (int j = 0; j < mesh.vertices_per_element(); ++j) {
            gu += u[el.vertices[j]] * el.gradients[j];
            gv += v[el.vertices[j]] * el.gradients[j];
        }
        total += el.volume * gu.dot(gv);
    }
    return total;
}

double mass_form(const Mesh &mesh, const Eigen::VectorXd &u, const Eigen::VectorXd &v) {
    double total = 0.0;
    const int nv = mesh.vertices_per_element();
    for (const Element &el : mesh.elements())
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                total += el.volume * detail::pair_mass(mesh.dimension(), a, b) *
                         u[el.vertices[a]] * v[el.vertices[b]];
    return total;
}

double lumped_form(const Mesh &mesh, const Eigen::VectorXd &u, const Eigen::VectorXd &v) {
    double total = 0.0;
    for (Index l = 0; l < mesh.interior_count(); ++l)
        total += u[l] * v[l] * mesh.hat_l1_norm(l);
    return total;
}

Point element_gradient(const Mesh &mesh, const Element &el, const Eigen::VectorXd &u) {
    Point g = Point::Zero();
    for (int j = 0; j < mesh.vertices_per_element(); ++j)
        g += u[el.vertices[j]] * el.gradients[j];
    return g;
}

Index find_node(const Mesh &mesh, const Point &p) {
    const double tol = 1e-10 * std::max(1.0, p.norm());
    for (Index i = 0; i < mesh.node_count(); ++i)
        if ((mesh.node(i) - p).norm() <= tol)
            return i;
    return -1;
}

} // namespace

double linf_error(const DiscreteSolution &solution, const SpaceTimeField &exact) {
    const Mesh &mesh = solution.mesh();
    double worst = 0.0;
    for (Index k = 0; k <= solution.grid().steps; ++k) {
        const double t = solution.grid().level(k);
        for (Index i = 0; i < mesh.node_count(); ++i)
            worst = std::max(worst, std::abs(solution.values()(k, i) - exact(t, mesh.node(i))));
    }
    return worst;
}

double l2h1_error(const DiscreteSolution &solution, const SpaceTimeGradient &exact_gradient) {
    const Mesh &mesh = solution.mesh();
    const TimeGrid &grid = solution.grid();
    const double h = grid.step();
    const auto time_rule = detail::gauss_unit<2>();
    double total = 0.0;
    for (Index k = 0; k < grid.steps; ++k)
        for (Index e = 0; e < mesh.element_count(); ++e) {
            const Element &el = mesh.element(e);
            const Point g0 = element_gradient(mesh, el, solution.values().row(k).transpose());
            const Point g1 = element_gradient(mesh, el, solution.values().row(k + 1).transpose());
            const auto space_rule = detail::element_rule<kErrorPoints>(mesh, e);
            for (const auto &[theta, wt] : time_rule) {
                const double t = grid.level(k) + theta * h;
                const Point g = (1.0 - theta) * g0 + theta * g1;
                for (const auto &q : space_rule) {
                    Point diff = g - exact_gradient(t, q.x);
                    if (mesh.dimension() == 1)
                        diff.y() = 0.0;
                    total += h * wt * q.weight * diff.squaredNorm();
                }
            }
        }
    return std::sqrt(total);
}

double l2h1_difference(const DiscreteSolution &coarse, const DiscreteSolution &fine) {
    if (coarse.mesh().dimension() != fine.mesh().dimension())
        throw ConfigurationError("solutions live in different dimensions");
    return l2h1_error(fine, [&coarse](double t, const Point &x) { return coarse.gradient(t, x); });
}

SmoothField sine_product_field() {
    using std::numbers::pi;
    SmoothField f;
    f.value = [](const Point &p) { return std::sin(pi * p.x()) * std::sin(pi * p.y()); };
    f.gradient = [](const Point &p) {
        return Point(pi * std::cos(pi * p.x()) * std::sin(pi * p.y()),
                     pi * std::sin(pi * p.x()) * std::cos(pi * p.y()));
    };
    f.laplacian = [](const Point &p) {
        return -2.0 * pi * pi * std::sin(pi * p.x()) * std::sin(pi * p.y());
    };
    return f;
}

SmoothField affine_field(double c, const Point &g) {
    SmoothField f;
    f.value = [c, g](const Point &p) { return c + g.dot(p); };
    f.gradient = [g](const Point &) { return g; };
    f.laplacian = [](const Point &) { return 0.0; };
    return f;
}

SparseMatrix stiffness_matrix(const Mesh &mesh) {
    std::vector<Triplet> triplets;
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const auto k = detail::stiffness_local(mesh, e);
        const Element &el = mesh.element(e);
        for (int a = 0; a < mesh.vertices_per_element(); ++a) {
            if (!mesh.is_interior(el.vertices[a]))
                continue;
            for (int b = 0; b < mesh.vertices_per_element(); ++b)
                triplets.emplace_back(el.vertices[a], el.vertices[b], k[a][b]);
        }
    }
    SparseMatrix m(mesh.interior_count(), mesh.node_count());
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

EllipticProjection elliptic_projection(const Mesh &mesh, const SmoothField &w) {
    const Index n = mesh.interior_count();
    Eigen::VectorXd load = Eigen::VectorXd::Zero(n);
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Element &el = mesh.element(e);
        Point integral = Point::Zero();
        for (const auto &q : detail::element_rule<kProbePoints>(mesh, e))
            integral += q.weight * w.gradient(q.x);
        if (mesh.dimension() == 1)
            integral.y() = 0.0;
        for (int a = 0; a < mesh.vertices_per_element(); ++a)
            if (mesh.is_interior(el.vertices[a]))
                load[el.vertices[a]] += integral.dot(el.gradients[a]);
    }

    const SparseMatrix k = stiffness_matrix(mesh);
    Eigen::VectorXd values = interpolate(mesh, w.value);
    values.head(n).setZero();
    const Eigen::VectorXd rhs = load - k * values;

    Eigen::SparseMatrix<double> block = k.leftCols(n);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(block);
    if (ldlt.info() != Eigen::Success)
        throw ConfigurationError("stiffness matrix is singular; the mesh is degenerate");
    values.head(n) = ldlt.solve(rhs);

    EllipticProjection out;
    out.residual = n ? (k * values - load).lpNorm<Eigen::Infinity>() : 0.0;
    out.values = std::move(values);
    return out;
}

double stiffness_action(const Mesh &mesh, const Eigen::VectorXd &u, Index node) {
    if (u.size() != mesh.node_count())
        throw ConfigurationError("vector length does not match the node count");
    double total = 0.0;
    for (Index e : mesh.patch(node)) {
        const Element &el = mesh.element(e);
        total += el.volume * element_gradient(mesh, el, u).dot(el.gradients[mesh.local_index(e, node)]);
    }
    return total / mesh.hat_l1_norm(node);
}

double laplacian_action(const Mesh &mesh, const SmoothField &w, Index node) {
    double total = 0.0;
    for (Index e : mesh.patch(node)) {
        const int local = mesh.local_index(e, node);
        for (const auto &q : detail::element_rule<kProbePoints>(mesh, e)) {
            const double hat = barycentric(mesh, e, q.x)[local];
            total -= q.weight * w.laplacian(q.x) * hat;
        }
    }
    return total / mesh.hat_l1_norm(node);
}

std::vector<ConsistencyProbe> consistency_experiment(MeshPattern pattern, const SmoothField &w,
                                                     const Point &probe,
                                                     const std::vector<double> &spacings) {
    if (pattern == MeshPattern::equilateral)
        throw ConfigurationError("the consistency experiment uses square-cell patterns");
    std::vector<ConsistencyProbe> out;
    for (double dx : spacings) {
        if (!(dx > 0.0))
            throw ConfigurationError("spacing must be positive");
        const double cells = std::round(1.0 / dx);
        if (cells < 2.0 || std::abs(cells * dx - 1.0) > 1e-12)
            throw ConfigurationError("spacing must divide the unit interval");
        const Index nc = static_cast<Index>(cells);
        const Mesh mesh = build_patterned_rectangle_mesh(Rectangle{}, nc, nc, pattern);
        const Index node = find_node(mesh, probe);
        if (node < 0 || !mesh.is_interior(node))
            throw ConfigurationError("probe point is not an interior node of the mesh");

        ConsistencyProbe p;
        p.pattern = pattern;
        p.spacing = dx;
        p.node = node;
        p.probe = probe;
        p.interpolant_action = stiffness_action(mesh, interpolate(mesh, w.value), node);
        p.projection_action = stiffness_action(mesh, elliptic_projection(mesh, w).values, node);
        p.exact_action = laplacian_action(mesh, w, node);
        p.laplacian_reference = -w.laplacian(probe);
        out.push_back(p);
    }
    return out;
}

std::vector<ConvergenceRow> convergence_study(const std::vector<DiscreteSolution> &solutions,
                                              const SpaceTimeField &exact,
                                              const SpaceTimeGradient &exact_gradient) {
    std::vector<ConvergenceRow> rows;
    for (const auto &s : solutions) {
        ConvergenceRow r;
        r.mesh_size = s.mesh().mesh_size();
        r.h = s.grid().step();
        r.linf_error = linf_error(s, exact);
        r.l2h1_error = l2h1_error(s, exact_gradient);
        if (rows.empty()) {
            r.linf_reduction = std::numeric_limits<double>::quiet_NaN();
            r.l2h1_reduction = std::numeric_limits<double>::quiet_NaN();
        } else {
            r.linf_reduction = rows.back().linf_error / r.linf_error;
            r.l2h1_reduction = rows.back().l2h1_error / r.l2h1_error;
        }
        rows.push_back(r);
    }
    return rows;
}

bool linf_non_increasing(const std::vector<ConvergenceRow> &rows) {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].linf_error > rows[i - 1].linf_error)
            return false;
    return true;
}

std::vector<ConvergenceRow> eikonal_benchmark(SplittingMode mode,
                                              const std::vector<Index> &element_counts,
                                              double cfl, const SolverOptions &options) {
    const ControlProblem problem = eikonal_problem();
    std::vector<DiscreteSolution> solutions;
    for (Index n : element_counts) {
        auto mesh = std::make_shared<const Mesh>(build_interval_mesh(-1.0, 1.0, n));
        const OperatorSplitting splitting = make_splitting(problem, *mesh, mode);
        const DiffusionBudget budget = compute_diffusion_budget(
            *mesh, splitting, acuteness_certificate(*mesh), DiffusionRule::offdiagonal);
        const DiscreteOperatorSet ops = assemble(*mesh, splitting, budget);
        const double max_h = certify_monotonicity(ops, 1.0).max_stable_h;
        const double base = std::isfinite(max_h) ? max_h : 2.0 / static_cast<double>(n);
        const TimeGrid grid = TimeGrid::from_cfl(problem.horizon, base, cfl);
        const Eigen::VectorXd final_values =
            interpolate(*mesh, [&](const Point &p) { return problem.final_data(p); });
        solutions.push_back(backward_solve(ops, mesh, grid, final_values, options).solution);
    }
    return convergence_study(solutions, eikonal_solution, eikonal_gradient);
}

double pivot_form(const Mesh &mesh, const Eigen::VectorXd &operator_rows, const Eigen::VectorXd &u) {
    double total = 0.0;
    for (Index l = 0; l < mesh.interior_count(); ++l)
        total += u[l] * mesh.hat_l1_norm(l) * operator_rows[l];
    return total;
}

std::optional<double> coercivity_probe(const DiscreteOperatorSet &ops, const Mesh &mesh,
                                       const TimeGrid &grid, Index control,
                                       const std::vector<Eigen::MatrixXd> &trials) {
    if (ops.mesh_id != mesh.id())
        throw ConfigurationError("operators were assembled on a different mesh");
    if (control < 0 || control >= ops.control_count())
        throw ConfigurationError("control index out of range");
    const auto &c = ops.controls[static_cast<std::size_t>(control)];
    const double h = grid.step();
    std::optional<double> best;
    for (const auto &w : trials) {
        if (w.rows() != grid.steps + 1 || w.cols() != mesh.node_count())
            throw ConfigurationError("trial does not match the mesh and time grid");
        if (w.minCoeff() < 0.0)
            throw ConfigurationError("trial fields must be non-negative");
        if (w.rightCols(mesh.node_count() - mesh.interior_count()).cwiseAbs().maxCoeff() > 0.0)
            throw ConfigurationError("trial fields must vanish on the boundary");

        double seminorm = 0.0;
        double rhs = 0.0;
        for (Index k = 0; k < grid.steps; ++k) {
            const Eigen::VectorXd wk = w.row(k).transpose();
            const Eigen::VectorXd wn = w.row(k + 1).transpose();
            seminorm += h / 3.0 *
                        (stiffness_form(mesh, wk, wk) + stiffness_form(mesh, wk, wn) +
                         stiffness_form(mesh, wn, wn));
            const Eigen::VectorXd rows = h * (c.explicit_part * wn) + h * (c.implicit_part * wk);
            rhs += pivot_form(mesh, rows, wk) - lumped_form(mesh, wn, wk) + lumped_form(mesh, wk, wk);
        }
        const Eigen::VectorXd wt = w.row(grid.steps).transpose();
        rhs += 0.5 * lumped_form(mesh, wt, wt) + mass_form(mesh, wt, wt) + stiffness_form(mesh, wt, wt);
        if (!(seminorm > 0.0))
            continue;
        const double ratio = rhs / seminorm;
        best = best ? std::min(*best, ratio) : ratio;
    }
    return best;
}

void write_convergence_csv(std::ostream &out, const std::vector<ConvergenceRow> &rows) {
    const auto old = out.precision(17);
    out << "mesh_size,h,linf_error,l2h1_error,linf_reduction,l2h1_reduction\n";
    for (const auto &r : rows)
        out << r.mesh_size << ',' << r.h << ',' << r.linf_error << ',' << r.l2h1_error << ','
            << r.linf_reduction << ',' << r.l2h1_reduction << '\n';
    out.precision(old);
}

void write_consistency_csv(std::ostream &out, const std::vector<ConsistencyProbe> &probes) {
    const auto old = out.precision(17);
    out << "dx,measured,reference,ratio,projection,projection_reference,projection_ratio\n";
    for (const auto &p : probes)
        out << p.spacing << ',' << p.interpolant_action << ',' << p.laplacian_reference << ','
            << p.interpolant_ratio() << ',' << p.projection_action << ',' << p.exact_action << ','
            << p.projection_ratio() << '\n';
    out.precision(old);
}

} // namespace hjbfem
