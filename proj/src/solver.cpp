#include "hjbfem/solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "hjbfem/errors.hpp"

namespace hjbfem {

namespace {

using Triplet = Eigen::Triplet<double, Index>;
using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

constexpr Index kDirectSolverLimit = 20000;
constexpr double kTieTolerance = 1e-13;
constexpr double kLinearTolerance = 1e-10;

// Factorizes once and solves repeatedly under the residual contract of
// solve_mmatrix_system.
class MMatrixSolver {
public:
    explicit MMatrixSolver(const SparseMatrix &m) : matrix_(m) {
        if (m.rows() != m.cols())
            throw ConfigurationError("system matrix must be square");
        ColMatrix cm = m.cast<double>();
        direct_ = m.rows() <= kDirectSolverLimit;
        if (direct_) {
            lu_.analyzePattern(cm);
            lu_.factorize(cm);
            if (lu_.info() != Eigen::Success)
                throw MMatrixError("system matrix is singular: " + lu_.lastErrorMessage());
        } else {
            iterative_.setMaxIterations(std::max<Index>(1000, 4 * m.rows()));
            iterative_.compute(cm);
            if (iterative_.info() != Eigen::Success)
                throw MMatrixError("preconditioner setup failed");
        }
    }

    Eigen::VectorXd solve(const Eigen::VectorXd &rhs, double tol) {
        if (rhs.size() != matrix_.rows())
            throw ConfigurationError("right-hand side length does not match the system");
        const double bound = tol * (1.0 + rhs.lpNorm<Eigen::Infinity>());
        Eigen::VectorXd x;
        if (direct_) {
            x = lu_.solve(rhs);
        } else {
            iterative_.setTolerance(tol * 1e-2);
            x = iterative_.solve(rhs);
        }
        const double residual = rhs.size() ? (matrix_ * x - rhs).lpNorm<Eigen::Infinity>() : 0.0;
        if (!std::isfinite(residual))
            throw MMatrixError("linear solve produced non-finite values");
        if (residual > bound)
            throw LinearSolverError("linear solve residual " + std::to_string(residual) +
                                        " exceeds " + std::to_string(bound),
                                    residual);
        return x;
    }

private:
    SparseMatrix matrix_;
    bool direct_ = true;
    Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu_;
    Eigen::BiCGSTAB<ColMatrix> iterative_;
};

SparseMatrix shifted_identity(const SparseMatrix &implicit_part, Index n, double h) {
    SparseMatrix m = h * implicit_part.leftCols(n);
    SparseMatrix id(n, n);
    id.setIdentity();
    m += id;
    m.makeCompressed();
    return m;
}

void check_sizes(const DiscreteOperatorSet &ops, const Eigen::VectorXd &v) {
    if (ops.controls.empty())
        throw ConfigurationError("operator set has no controls");
    if (v.size() != ops.node_count)
        throw ConfigurationError("vector length does not match the node count");
}

// Per-control values of E v_next + I v_curr - C on the interior rows.
std::vector<Eigen::VectorXd> control_values(const DiscreteOperatorSet &ops,
                                            const Eigen::VectorXd &v_next,
                                            const Eigen::VectorXd &v_curr) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(ops.controls.size());
    for (const auto &c : ops.controls)
        out.push_back(c.explicit_part * v_next + c.implicit_part * v_curr - c.source);
    return out;
}

std::vector<Index> argmax_rows(const std::vector<Eigen::VectorXd> &values, Index n) {
    std::vector<Index> policy(static_cast<std::size_t>(n), 0);
    for (Index row = 0; row < n; ++row) {
        double best = values[0][row];
        for (std::size_t k = 1; k < values.size(); ++k) {
            const double v = values[k][row];
            if (v > best + kTieTolerance * (1.0 + std::abs(best))) {
                best = v;
                policy[static_cast<std::size_t>(row)] = static_cast<Index>(k);
            }
        }
    }
    return policy;
}

SparseMatrix gather_rows(const DiscreteOperatorSet &ops, const std::vector<Index> &policy,
                         bool implicit) {
    std::vector<Triplet> triplets;
    for (Index row = 0; row < ops.interior_count; ++row) {
        const auto &c = ops.controls[static_cast<std::size_t>(policy[static_cast<std::size_t>(row)])];
        const SparseMatrix &m = implicit ? c.implicit_part : c.explicit_part;
        for (SparseMatrix::InnerIterator it(m, row); it; ++it)
            triplets.emplace_back(row, it.col(), it.value());
    }
    SparseMatrix out(ops.interior_count, ops.node_count);
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

PolicySelection build_selection(const DiscreteOperatorSet &ops, std::vector<Index> policy) {
    PolicySelection s;
    s.explicit_part = gather_rows(ops, policy, false);
    s.implicit_part = gather_rows(ops, policy, true);
    s.source.resize(ops.interior_count);
    for (Index row = 0; row < ops.interior_count; ++row)
        s.source[row] = ops.controls[static_cast<std::size_t>(policy[static_cast<std::size_t>(row)])]
                            .source[row];
    s.policy = std::move(policy);
    return s;
}

double tolerance_or_default(const DiscreteOperatorSet &ops, const SolverOptions &options) {
    const double tol = options.tol.value_or(default_tolerance(ops));
    if (!(tol > 0.0))
        throw ConfigurationError("solver tolerance must be positive");
    return tol;
}

MonotonicityReport certify_or_throw(const DiscreteOperatorSet &ops, double h,
                                    const SolverOptions &options) {
    MonotonicityReport report = certify_monotonicity(ops, h);
    if (options.require_certification && !report.admissible())
        throw CertificationError("monotonicity certification failed: " + report.describe_failure());
    return report;
}

Eigen::VectorXd final_level(const DiscreteOperatorSet &ops, const Eigen::VectorXd &final_values) {
    check_sizes(ops, final_values);
    Eigen::VectorXd v = final_values;
    v.tail(ops.node_count - ops.interior_count).setZero();
    return v;
}

void check_mesh(const DiscreteOperatorSet &ops, const Mesh &mesh) {
    if (ops.mesh_id != mesh.id())
        throw ConfigurationError("operators were assembled on a different mesh");
}

Eigen::VectorXd interpolate_final(const ControlProblem &problem, const Mesh &mesh) {
    return interpolate(mesh, [&](const Point &p) { return problem.final_data(p); });
}

} // namespace

TimeGrid TimeGrid::from_steps(double horizon, Index steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw ConfigurationError("time horizon must be positive");
    if (steps < 1)
        throw ConfigurationError("need at least one time step");
    return TimeGrid{horizon, steps};
}

TimeGrid TimeGrid::from_step(double horizon, double h) {
    if (!(h > 0.0) || !std::isfinite(h))
        throw ConfigurationError("time step must be positive");
    const double ratio = horizon / h;
    const double steps = std::round(ratio);
    if (steps < 1.0 || std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio))
        throw ConfigurationError("T/h must be a positive integer");
    return from_steps(horizon, static_cast<Index>(steps));
}

TimeGrid TimeGrid::from_cfl(double horizon, double max_stable_h, double cfl, bool *adjusted) {
    if (!(cfl > 0.0))
        throw ConfigurationError("CFL factor must be positive");
    if (!(horizon > 0.0))
        throw ConfigurationError("time horizon must be positive");
    if (adjusted)
        *adjusted = false;
    if (!std::isfinite(max_stable_h))
        throw ConfigurationError("no explicit step restriction: give h instead of a CFL factor");
    const double target = cfl * max_stable_h;
    const double ratio = horizon / target;
    double steps = std::ceil(ratio - 1e-9 * std::max(1.0, ratio));
    steps = std::max(steps, 1.0);
    if (adjusted)
        *adjusted = std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio);
    return from_steps(horizon, static_cast<Index>(steps));
}

DiscreteSolution::DiscreteSolution(std::shared_ptr<const Mesh> mesh, TimeGrid grid,
                                   Eigen::MatrixXd values)
    : mesh_(std::move(mesh)), grid_(grid), values_(std::move(values)) {
    if (!mesh_)
        throw ConfigurationError("solution needs a mesh");
    if (values_.rows() != grid_.steps + 1 || values_.cols() != mesh_->node_count())
        throw ConfigurationError("solution values do not match the mesh and time grid");
    locator_ = std::make_shared<PointLocator>(*mesh_);
}

namespace {

struct TimeBracket {
    Index k;
    double theta;
};

TimeBracket bracket(const TimeGrid &grid, double t) {
    const double tol = 1e-12 * grid.horizon;
    if (!(t >= -tol && t <= grid.horizon + tol))
        throw QueryError("time " + std::to_string(t) + " outside [0, T]");
    const double h = grid.step();
    Index k = static_cast<Index>(std::floor(t / h));
    k = std::clamp<Index>(k, 0, grid.steps - 1);
    const double theta = std::clamp((t - grid.level(k)) / h, 0.0, 1.0);
    return {k, theta};
}

} // namespace

double DiscreteSolution::evaluate(double t, const Point &x) const {
    const auto hit = locator_->locate(x);
    if (!hit)
        throw QueryError("point outside the mesh");
    const auto [k, theta] = bracket(grid_, t);
    const Element &el = mesh_->element(hit->element);
    double lower = 0.0, upper = 0.0;
    for (int j = 0; j < mesh_->vertices_per_element(); ++j) {
        lower += hit->weights[j] * values_(k, el.vertices[j]);
        upper += hit->weights[j] * values_(k + 1, el.vertices[j]);
    }
    return (1.0 - theta) * lower + theta * upper;
}

Point DiscreteSolution::gradient(double t, const Point &x) const {
    const auto hit = locator_->locate(x);
    if (!hit)
        throw QueryError("point outside the mesh");
    const auto [k, theta] = bracket(grid_, t);
    const Element &el = mesh_->element(hit->element);
    Point g = Point::Zero();
    for (int j = 0; j < mesh_->vertices_per_element(); ++j) {
        const double v = (1.0 - theta) * values_(k, el.vertices[j]) +
                         theta * values_(k + 1, el.vertices[j]);
        g += v * el.gradients[j];
    }
    return g;
}

Index PolicyIterationReport::total_iterations() const {
    Index total = 0;
    for (const auto &l : levels)
        total += l.iterations;
    return total;
}

Index PolicyIterationReport::max_iterations() const {
    Index most = 0;
    for (const auto &l : levels)
        most = std::max(most, l.iterations);
    return most;
}

double default_tolerance(const DiscreteOperatorSet &ops) {
    double c = 0.0;
    for (const auto &ctrl : ops.controls)
        if (ctrl.source.size())
            c = std::max(c, ctrl.source.lpNorm<Eigen::Infinity>());
    return 1e-10 * (1.0 + c);
}

PolicySelection select_policy(const DiscreteOperatorSet &ops, const Eigen::VectorXd &v_next,
                              const Eigen::VectorXd &v_curr) {
    check_sizes(ops, v_next);
    check_sizes(ops, v_curr);
    return build_selection(ops, argmax_rows(control_values(ops, v_next, v_curr), ops.interior_count));
}

Eigen::VectorXd scheme_residual(const DiscreteOperatorSet &ops, const Eigen::VectorXd &v_next,
                                const Eigen::VectorXd &v_curr, double h) {
    check_sizes(ops, v_next);
    check_sizes(ops, v_curr);
    if (!(h > 0.0))
        throw ConfigurationError("time step must be positive");
    const Index n = ops.interior_count;
    const auto values = control_values(ops, v_next, v_curr);
    Eigen::VectorXd best = values[0];
    for (std::size_t k = 1; k < values.size(); ++k)
        best = best.cwiseMax(values[k]);
    return best - (v_next.head(n) - v_curr.head(n)) / h;
}

StepResult howard_solve_step(const DiscreteOperatorSet &ops, const Eigen::VectorXd &v_next,
                             double h, double tol, Index max_iter) {
    check_sizes(ops, v_next);
    if (!(h > 0.0))
        throw ConfigurationError("time step must be positive");
    if (!(tol > 0.0))
        throw ConfigurationError("tolerance must be positive");
    if (max_iter < 1)
        throw ConfigurationError("max_iter must be at least 1");
    const Index n = ops.interior_count;
    StepResult result;
    result.values = Eigen::VectorXd::Zero(ops.node_count);

    if (ops.is_explicit()) {
        const auto values = control_values(ops, v_next, v_next);
        const auto policy = argmax_rows(values, n);
        for (Index row = 0; row < n; ++row)
            result.values[row] =
                v_next[row] - h * values[static_cast<std::size_t>(policy[static_cast<std::size_t>(row)])][row];
        result.report.iterations = 1;
        result.report.residuals.push_back(
            scheme_residual(ops, v_next, result.values, h).lpNorm<Eigen::Infinity>());
        result.report.policy = policy;
        return result;
    }

    std::vector<Index> policy(static_cast<std::size_t>(n), 0);
    for (Index m = 1; m <= max_iter; ++m) {
        const PolicySelection sel = build_selection(ops, policy);
        const SparseMatrix system = shifted_identity(sel.implicit_part, n, h);
        const Eigen::VectorXd rhs =
            h * sel.source - h * (sel.explicit_part * v_next) + v_next.head(n);
        MMatrixSolver solver(system);
        result.values.head(n) = solver.solve(rhs, kLinearTolerance);

        const auto values = control_values(ops, v_next, result.values);
        std::vector<Index> next = argmax_rows(values, n);
        const double residual =
            scheme_residual(ops, v_next, result.values, h).lpNorm<Eigen::Infinity>();
        result.report.residuals.push_back(residual);
        result.report.iterations = m;
        if (next == policy || residual <= tol) {
            result.report.policy = std::move(next);
            return result;
        }
        policy = std::move(next);
    }
    throw NonConvergenceError("policy iteration did not converge in " + std::to_string(max_iter) +
                                  " iterations",
                              result.report.residuals);
}

Eigen::VectorXd solve_mmatrix_system(const SparseMatrix &m, const Eigen::VectorXd &rhs,
                                     double tol) {
    if (!(tol > 0.0))
        throw ConfigurationError("tolerance must be positive");
    MMatrixSolver solver(m);
    return solver.solve(rhs, tol);
}

SolveResult backward_solve(const DiscreteOperatorSet &ops, std::shared_ptr<const Mesh> mesh,
                           const TimeGrid &grid, const Eigen::VectorXd &final_values,
                           const SolverOptions &options) {
    if (!mesh)
        throw ConfigurationError("backward_solve needs a mesh");
    check_mesh(ops, *mesh);
    const double h = grid.step();
    const double tol = tolerance_or_default(ops, options);
    MonotonicityReport certification = certify_or_throw(ops, h, options);

    Eigen::MatrixXd values(grid.steps + 1, ops.node_count);
    Eigen::VectorXd v = final_level(ops, final_values);
    values.row(grid.steps) = v.transpose();
    PolicyIterationReport report;
    for (Index k = grid.steps - 1; k >= 0; --k) {
        StepResult step = howard_solve_step(ops, v, h, tol, options.max_iter);
        step.report.level = k;
        v = std::move(step.values);
        values.row(k) = v.transpose();
        report.levels.push_back(std::move(step.report));
    }
    return {DiscreteSolution(std::move(mesh), grid, std::move(values)), std::move(report),
            std::move(certification)};
}

SolveResult backward_solve(const ControlProblem &problem, std::shared_ptr<const Mesh> mesh,
                           const OperatorSplitting &splitting, const DiffusionBudget &budget,
                           const TimeGrid &grid, const SolverOptions &options) {
    if (!mesh)
        throw ConfigurationError("backward_solve needs a mesh");
    const DiscreteOperatorSet ops = assemble(*mesh, splitting, budget);
    const Eigen::VectorXd final_values = interpolate_final(problem, *mesh);
    return backward_solve(ops, std::move(mesh), grid, final_values, options);
}

SolveResult backward_solve(const ControlProblem &problem, std::shared_ptr<const Mesh> mesh,
                           const OperatorSplitting &splitting, const TimeGrid &grid,
                           const SolverOptions &options) {
    if (!mesh)
        throw ConfigurationError("backward_solve needs a mesh");
    const DiffusionBudget budget =
        compute_diffusion_budget(*mesh, splitting, acuteness_certificate(*mesh));
    return backward_solve(problem, std::move(mesh), splitting, budget, grid, options);
}

DiscreteSolution fixed_control_solve(const DiscreteOperatorSet &ops,
                                     std::shared_ptr<const Mesh> mesh, const TimeGrid &grid,
                                     const Eigen::VectorXd &final_values, Index control,
                                     const SolverOptions &options) {
    if (!mesh)
        throw ConfigurationError("fixed_control_solve needs a mesh");
    check_mesh(ops, *mesh);
    if (control < 0 || control >= ops.control_count())
        throw ConfigurationError("control index out of range");
    const double h = grid.step();
    certify_or_throw(ops, h, options);

    const auto &c = ops.controls[static_cast<std::size_t>(control)];
    const Index n = ops.interior_count;
    MMatrixSolver solver(shifted_identity(c.implicit_part, n, h));
    Eigen::MatrixXd values(grid.steps + 1, ops.node_count);
    Eigen::VectorXd v = final_level(ops, final_values);
    values.row(grid.steps) = v.transpose();
    for (Index k = grid.steps - 1; k >= 0; --k) {
        const Eigen::VectorXd rhs = h * c.source - h * (c.explicit_part * v) + v.head(n);
        Eigen::VectorXd next = Eigen::VectorXd::Zero(ops.node_count);
        next.head(n) = solver.solve(rhs, kLinearTolerance);
        v = std::move(next);
        values.row(k) = v.transpose();
    }
    return DiscreteSolution(std::move(mesh), grid, std::move(values));
}

DiscreteSolution fixed_control_solve(const ControlProblem &problem,
                                     std::shared_ptr<const Mesh> mesh,
                                     const OperatorSplitting &splitting,
                                     const DiffusionBudget &budget, const TimeGrid &grid,
                                     Index control, const SolverOptions &options) {
    if (!mesh)
        throw ConfigurationError("fixed_control_solve needs a mesh");
    const DiscreteOperatorSet ops = assemble(*mesh, splitting, budget);
    const Eigen::VectorXd final_values = interpolate_final(problem, *mesh);
    return fixed_control_solve(ops, std::move(mesh), grid, final_values, control, options);
}

void write_solution_csv(std::ostream &out, const DiscreteSolution &solution) {
    const auto old = out.precision(17);
    const Mesh &mesh = solution.mesh();
    const bool two_d = mesh.dimension() == 2;
    out << (two_d ? "k,s,node,x,y,value\n" : "k,s,node,x,value\n");
    for (Index k = 0; k <= solution.grid().steps; ++k)
        for (Index i = 0; i < mesh.node_count(); ++i) {
            out << k << ',' << solution.grid().level(k) << ',' << i << ',' << mesh.node(i).x();
            if (two_d)
                out << ',' << mesh.node(i).y();
            out << ',' << solution.values()(k, i) << '\n';
        }
    out.precision(old);
}

void write_policy_csv(std::ostream &out, const PolicyIterationReport &report) {
    out << "k,node,control_index\n";
    for (const auto &level : report.levels)
        for (std::size_t i = 0; i < level.policy.size(); ++i)
            out << level.level << ',' << i << ',' << level.policy[i] << '\n';
}

void write_report_csv(std::ostream &out, const PolicyIterationReport &report) {
    const auto old = out.precision(17);
    out << "k,iteration,residual\n";
    for (const auto &level : report.levels)
        for (std::size_t m = 0; m < level.residuals.size(); ++m)
            out << level.level << ',' << m + 1 << ',' << level.residuals[m] << '\n';
    out.precision(old);
}

} // namespace hjbfem
