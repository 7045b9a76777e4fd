#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "hjbfem/errors.hpp"
#include "hjbfem/solver.hpp"

using namespace hjbfem;

namespace {

struct Setup {
    std::shared_ptr<const Mesh> mesh;
    OperatorSplitting splitting;
    DiffusionBudget budget;
    DiscreteOperatorSet ops;
};

Setup setup(Mesh mesh, const ControlProblem &p, SplittingMode mode,
            DiffusionRule rule = DiffusionRule::patch_bound) {
    Setup s;
    s.mesh = std::make_shared<const Mesh>(std::move(mesh));
    s.splitting = make_splitting(p, *s.mesh, mode);
    s.budget = compute_diffusion_budget(*s.mesh, s.splitting, acuteness_certificate(*s.mesh), rule);
    s.ops = assemble(*s.mesh, s.splitting, s.budget);
    return s;
}

Setup eikonal(Index n, SplittingMode mode) {
    return setup(build_interval_mesh(-1.0, 1.0, n), eikonal_problem(), mode, DiffusionRule::offdiagonal);
}

// Node indices sorted by x.
std::vector<Index> by_position(const Mesh &mesh) {
    std::vector<Index> order(static_cast<std::size_t>(mesh.node_count()));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return mesh.node(a).x() < mesh.node(b).x(); });
    return order;
}

// Gaussian elimination with partial pivoting on a dense copy.
Eigen::VectorXd gauss_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
    const Index n = a.rows();
    for (Index k = 0; k < n; ++k) {
        Index p = k;
        for (Index i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(p, k)))
                p = i;
        a.row(k).swap(a.row(p));
        std::swap(b[k], b[p]);
        for (Index i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            a.row(i) -= f * a.row(k);
            b[i] -= f * b[k];
        }
    }
    Eigen::VectorXd x(n);
    for (Index i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (Index j = i + 1; j < n; ++j)
            s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return x;
}

ControlCoefficients control(double a, Point b, double c, double d, std::string label = "u") {
    return {std::move(label), ScalarField::constant(a), VectorField::constant(b),
            ScalarField::constant(c), ScalarField::constant(d)};
}

} // namespace

TEST_CASE("time grid") {
    const auto g = TimeGrid::from_steps(1.0, 4);
    CHECK(g.step() == 0.25);
    CHECK(g.level(3) == 0.75);
    CHECK(TimeGrid::from_step(1.0, 0.1).steps == 10);
    CHECK_THROWS_AS(TimeGrid::from_step(1.0, 0.3), ConfigurationError);
    CHECK_THROWS_AS(TimeGrid::from_steps(1.0, 0), ConfigurationError);
    CHECK_THROWS_AS(TimeGrid::from_steps(-1.0, 3), ConfigurationError);
    bool adjusted = true;
    CHECK(TimeGrid::from_cfl(1.0, 0.125, 1.0, &adjusted).steps == 8);
    CHECK_FALSE(adjusted);
    const auto rounded = TimeGrid::from_cfl(1.0, 0.3, 1.0, &adjusted);
    CHECK(rounded.steps == 4);
    CHECK(rounded.step() <= 0.3);
    CHECK(adjusted);
    CHECK(TimeGrid::from_cfl(1.0, 0.125, 0.5).steps == 16);
    CHECK_THROWS_AS(TimeGrid::from_cfl(1.0, INFINITY, 1.0), ConfigurationError);
}

TEST_CASE("upwind row applied to x is one") {
    auto s = eikonal(4, SplittingMode::explicit_scheme);
    Eigen::VectorXd x(s.mesh->node_count());
    for (Index i = 0; i < x.size(); ++i)
        x[i] = s.mesh->node(i).x();
    const Eigen::VectorXd plus = apply(s.ops, 0, OperatorPart::explicit_part, x);
    const Eigen::VectorXd minus = apply(s.ops, 1, OperatorPart::explicit_part, x);
    CHECK((plus.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((minus.array() + 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("explicit eikonal against a hand-rolled upwind march") {
    for (Index n : {4, 10, 16}) {
        const double dx = 2.0 / n;
        auto s = eikonal(n, SplittingMode::explicit_scheme);
        const auto grid = TimeGrid::from_step(1.0, dx);
        const auto result = backward_solve(s.ops, s.mesh, grid, Eigen::VectorXd::Zero(s.mesh->node_count()));
        const auto order = by_position(*s.mesh);

        std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
        for (Index k = grid.steps - 1; k >= 0; --k) {
            std::vector<double> next = v;
            for (Index i = 1; i < n; ++i) {
                const double back = (v[i] - v[i - 1]) / dx - 1.0;
                const double fwd = (v[i] - v[i + 1]) / dx - 1.0;
                next[i] = v[i] - grid.step() * std::max(back, fwd);
            }
            v = next;
            for (Index i = 0; i <= n; ++i) {
                const double computed = result.solution.values()(k, order[i]);
                CHECK(computed == doctest::Approx(v[i]).epsilon(1e-13));
                // With h = dx the scheme reproduces the exact solution at the nodes.
                CHECK(computed == doctest::Approx(eikonal_solution(grid.level(k), s.mesh->node(order[i]))).epsilon(1e-12));
            }
        }
        CHECK(result.report.max_iterations() == 1);
        CHECK(result.certification.admissible());
    }
}

TEST_CASE("implicit step equals the componentwise minimum over all policies") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Index n = 7; // 6 interior nodes, 64 policies
    auto s = eikonal(n, SplittingMode::implicit_scheme);
    const Index N = s.mesh->interior_count();
    for (double h : {0.05, 0.3, 1.0}) {
        Eigen::VectorXd v_next = Eigen::VectorXd::Zero(s.mesh->node_count());
        for (Index i = 0; i < N; ++i)
            v_next[i] = u(rng);
        const StepResult step = howard_solve_step(s.ops, v_next, h, 1e-12, 50);

        Eigen::VectorXd best = Eigen::VectorXd::Constant(N, INFINITY);
        for (int mask = 0; mask < (1 << N); ++mask) {
            Eigen::MatrixXd A(N, N);
            Eigen::VectorXd r(N);
            for (Index l = 0; l < N; ++l) {
                const auto &op = s.ops.controls[(mask >> l) & 1];
                const Eigen::MatrixXd I = Eigen::MatrixXd(op.implicit_part);
                A.row(l) = h * I.row(l).leftCols(N);
                A(l, l) += 1.0;
                r[l] = v_next[l] + h * op.source[l];
            }
            best = best.cwiseMin(gauss_solve(A, r));
        }
        CHECK((step.values.head(N) - best).cwiseAbs().maxCoeff() < 1e-11);
        CHECK(step.values.tail(s.mesh->node_count() - N).isZero(0.0));
        CHECK(step.report.residuals.back() <= 1e-12 * 2);
    }
}

TEST_CASE("single control takes one iteration and matches the linear evolution") {
    ControlProblem p;
    p.dimension = 2;
    p.controls.push_back(control(0.05, Point(0.4, -0.3), 0.5, 1.0));
    auto mesh = std::make_shared<const Mesh>(
        build_patterned_rectangle_mesh(Rectangle{}, 8, 8, MeshPattern::equilateral));
    Eigen::VectorXd bump = Eigen::VectorXd::Zero(mesh->node_count());
    for (Index i = 0; i < mesh->interior_count(); ++i)
        bump[i] = 0.1 + std::abs(mesh->node(i).x() * mesh->node(i).y());
    p.final_data = nodal_field(mesh, bump);
    auto s = setup(*mesh, p, SplittingMode::semi_implicit);
    const double max_h = certify_monotonicity(s.ops, 1.0).max_stable_h;
    const auto grid = TimeGrid::from_cfl(0.2, max_h, 1.0);
    const auto howard = backward_solve(p, s.mesh, s.splitting, s.budget, grid);
    const auto linear = fixed_control_solve(p, s.mesh, s.splitting, s.budget, grid, 0);
    CHECK(howard.report.max_iterations() == 1);
    CHECK((howard.solution.values() - linear.values()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ties go to the lowest control index") {
    ControlProblem p;
    p.dimension = 1;
    p.controls.push_back(control(0.0, Point(1, 0), 0.0, 1.0, "a"));
    p.controls.push_back(control(0.0, Point(1, 0), 0.0, 1.0, "b"));
    auto s = setup(build_interval_mesh(0.0, 1.0, 8), p, SplittingMode::implicit_scheme);
    const auto result = backward_solve(s.ops, s.mesh, TimeGrid::from_steps(1.0, 4),
                                       Eigen::VectorXd::Zero(s.mesh->node_count()));
    for (const auto &level : result.report.levels) {
        CHECK(level.iterations == 1);
        for (Index c : level.policy)
            CHECK(c == 0);
    }
}

TEST_CASE("zero data gives the zero solution") {
    ControlProblem p;
    p.dimension = 2;
    p.controls.push_back(control(0.1, Point(1, 1), 1.0, 0.0));
    p.controls.push_back(control(0.2, Point(-1, 0), 0.0, 0.0));
    auto s = setup(build_patterned_rectangle_mesh(Rectangle{}, 4, 4, MeshPattern::equilateral), p,
                   SplittingMode::implicit_scheme);
    const auto result = backward_solve(p, s.mesh, s.splitting, s.budget, TimeGrid::from_steps(1.0, 5));
    CHECK(result.solution.values().isZero(0.0));
}

TEST_CASE("non-negativity, domination by fixed controls and residual certificate") {
    for (auto mode : {SplittingMode::explicit_scheme, SplittingMode::implicit_scheme,
                      SplittingMode::semi_implicit}) {
        const auto p = diffusion_control_problem(3);
        auto s = setup(build_patterned_rectangle_mesh(Rectangle{}, 8, 8, MeshPattern::equilateral), p, mode);
        const double max_h = certify_monotonicity(s.ops, 1.0).max_stable_h;
        const auto grid = std::isfinite(max_h) ? TimeGrid::from_cfl(p.horizon, max_h, 1.0)
                                               : TimeGrid::from_steps(p.horizon, 10);
        const auto result = backward_solve(p, s.mesh, s.splitting, s.budget, grid);
        const double tol = default_tolerance(s.ops);
        CHECK(result.solution.min_value() >= -tol);
        CHECK(result.solution.values().row(0).maxCoeff() > 0.0);

        for (Index k = 0; k < s.ops.control_count(); ++k) {
            const auto fixed = fixed_control_solve(p, s.mesh, s.splitting, s.budget, grid, k);
            CHECK((result.solution.values() - fixed.values()).maxCoeff() <= 1e-9);
        }
        for (Index k = 0; k < grid.steps; ++k) {
            const Eigen::VectorXd r = scheme_residual(s.ops, result.solution.level_values(k + 1),
                                                      result.solution.level_values(k), grid.step());
            CHECK(r.cwiseAbs().maxCoeff() <= tol / grid.step() + 1e-9);
        }
    }
}

TEST_CASE("comparison principle for ordered data") {
    auto s = eikonal(20, SplittingMode::implicit_scheme);
    const Index nodes = s.mesh->node_count();
    Eigen::VectorXd low = Eigen::VectorXd::Zero(nodes), high = Eigen::VectorXd::Zero(nodes);
    for (Index i = 0; i < s.mesh->interior_count(); ++i) {
        const double x = s.mesh->node(i).x();
        low[i] = 0.2 * (1 - x * x);
        high[i] = low[i] + 0.1 * std::cos(x * 1.5) * (1 - x * x);
    }
    const auto grid = TimeGrid::from_steps(1.0, 10);
    const auto a = backward_solve(s.ops, s.mesh, grid, low);
    const auto b = backward_solve(s.ops, s.mesh, grid, high);
    CHECK((a.solution.values() - b.solution.values()).maxCoeff() <= 1e-12);
}

TEST_CASE("sparse M-matrix solve") {
    SUBCASE("identity") {
        SparseMatrix id(5, 5);
        id.setIdentity();
        const Eigen::VectorXd rhs = Eigen::VectorXd::LinSpaced(5, 1, 5);
        CHECK((solve_mmatrix_system(id, rhs) - rhs).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("tridiagonal with a known solution") {
        const Index n = 30;
        std::vector<Eigen::Triplet<double, Index>> t;
        for (Index i = 0; i < n; ++i) {
            t.emplace_back(i, i, 3.0);
            if (i > 0)
                t.emplace_back(i, i - 1, -1.0);
            if (i + 1 < n)
                t.emplace_back(i, i + 1, -1.0);
        }
        SparseMatrix m(n, n);
        m.setFromTriplets(t.begin(), t.end());
        const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, -1, 2);
        const Eigen::VectorXd rhs = m * x;
        CHECK((solve_mmatrix_system(m, rhs) - x).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("random diagonally dominant system against Gaussian elimination") {
        std::mt19937 rng(8);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const Index n = 50;
        Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j)
                if (i != j && u(rng) < 0.1)
                    dense(i, j) = -u(rng);
            dense(i, i) = 0.1 - dense.row(i).sum();
        }
        const SparseMatrix m = dense.sparseView();
        Eigen::VectorXd rhs(n);
        for (Index i = 0; i < n; ++i)
            rhs[i] = u(rng) - 0.5;
        const Eigen::VectorXd x = solve_mmatrix_system(m, rhs);
        const Eigen::VectorXd y = gauss_solve(dense, rhs);
        CHECK((x - y).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((dense * x - rhs).cwiseAbs().maxCoeff() <= 1e-12 * (1 + rhs.cwiseAbs().maxCoeff()));
    }
    SUBCASE("singular") {
        SparseMatrix z(3, 3);
        z.insert(0, 0) = 1.0;
        z.insert(1, 1) = 1.0;
        z.makeCompressed();
        CHECK_THROWS_AS(solve_mmatrix_system(z, Eigen::VectorXd::Ones(3)), MMatrixError);
    }
}

TEST_CASE("solution queries interpolate in space and time") {
    auto mesh = std::make_shared<const Mesh>(
        build_patterned_rectangle_mesh(Rectangle{}, 4, 4, MeshPattern::equilateral));
    const auto grid = TimeGrid::from_steps(1.0, 2);
    Eigen::MatrixXd values(3, mesh->node_count());
    for (Index k = 0; k < 3; ++k)
        for (Index i = 0; i < mesh->node_count(); ++i) {
            const Point &x = mesh->node(i);
            values(k, i) = 1.0 + 2.0 * x.x() - x.y() + 3.0 * grid.level(k);
        }
    const DiscreteSolution sol(mesh, grid, values);
    const Point x(0.37, 0.41);
    CHECK(sol.evaluate(0.3, x) == doctest::Approx(1.0 + 0.74 - 0.41 + 0.9));
    CHECK(sol.evaluate(1.0, x) == doctest::Approx(1.0 + 0.74 - 0.41 + 3.0));
    CHECK(sol.gradient(0.7, x).x() == doctest::Approx(2.0));
    CHECK(sol.gradient(0.7, x).y() == doctest::Approx(-1.0));
    CHECK_THROWS_AS(sol.evaluate(1.5, x), QueryError);
    CHECK_THROWS_AS(sol.evaluate(0.5, Point(2.0, 0.5)), QueryError);
    CHECK_THROWS_AS(DiscreteSolution(mesh, grid, Eigen::MatrixXd::Zero(2, 2)), ConfigurationError);
}

TEST_CASE("certification and convergence failures") {
    auto s = eikonal(8, SplittingMode::explicit_scheme);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(s.mesh->node_count());
    CHECK_THROWS_AS(backward_solve(s.ops, s.mesh, TimeGrid::from_steps(1.0, 2), zero), CertificationError);
    SolverOptions lax;
    lax.require_certification = false;
    const auto unchecked = backward_solve(s.ops, s.mesh, TimeGrid::from_steps(1.0, 2), zero, lax);
    CHECK_FALSE(unchecked.certification.admissible());

    auto imp = eikonal(16, SplittingMode::implicit_scheme);
    Eigen::VectorXd v_next = Eigen::VectorXd::Zero(imp.mesh->node_count());
    try {
        howard_solve_step(imp.ops, v_next, 0.5, 1e-12, 1);
        FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError &e) {
        CHECK(e.residuals().size() == 1);
        CHECK(e.residuals()[0] > 1e-12);
    }
    CHECK(howard_solve_step(imp.ops, v_next, 0.5, 1e-12, 50).report.iterations >= 2);
}

TEST_CASE("CSV output") {
    auto s = eikonal(4, SplittingMode::explicit_scheme);
    const auto result = backward_solve(s.ops, s.mesh, TimeGrid::from_steps(1.0, 2),
                                       Eigen::VectorXd::Zero(s.mesh->node_count()));
    auto lines = [](const std::string &text) {
        std::vector<std::string> out;
        std::istringstream in(text);
        for (std::string line; std::getline(in, line);)
            out.push_back(line);
        return out;
    };
    std::ostringstream sol, pol, rep;
    write_solution_csv(sol, result.solution);
    write_policy_csv(pol, result.report);
    write_report_csv(rep, result.report);
    const auto s_lines = lines(sol.str());
    CHECK(s_lines.front() == "k,s,node,x,value");
    CHECK(s_lines.size() == 1 + 3 * 5);
    const auto p_lines = lines(pol.str());
    CHECK(p_lines.front() == "k,node,control_index");
    CHECK(p_lines.size() == 1 + 2 * 3);
    const auto r_lines = lines(rep.str());
    CHECK(r_lines.front() == "k,iteration,residual");
    CHECK(r_lines.size() == 1 + 2);
}
