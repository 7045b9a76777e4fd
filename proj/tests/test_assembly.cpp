#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "hjbfem/assembly.hpp"
#include "hjbfem/errors.hpp"

using namespace hjbfem;

namespace {

struct Built {
    Mesh mesh;
    OperatorSplitting splitting;
    DiffusionBudget budget;
    DiscreteOperatorSet ops;
};

Built build(Mesh mesh, const ControlProblem &p, SplittingMode mode,
            DiffusionRule rule = DiffusionRule::patch_bound, double scale = 1.0) {
    Built b{std::move(mesh), {}, {}, {}};
    b.splitting = make_splitting(p, b.mesh, mode);
    b.budget = compute_diffusion_budget(b.mesh, b.splitting, acuteness_certificate(b.mesh), rule);
    if (scale != 1.0)
        b.budget = scale_diffusion_budget(b.budget, scale);
    b.ops = assemble(b.mesh, b.splitting, b.budget);
    return b;
}

ControlCoefficients control(double a, Point b, double c, double d) {
    return {"u", ScalarField::constant(a), VectorField::constant(b), ScalarField::constant(c),
            ScalarField::constant(d)};
}

ControlProblem single(int dim, ControlCoefficients c) {
    ControlProblem p;
    p.dimension = dim;
    p.controls.push_back(std::move(c));
    return p;
}

// Degree-5 rule on the reference triangle in barycentric coordinates and the
// three-point Gauss rule on the unit interval, both exact for the cubic
// integrands below.
struct QuadPoint {
    std::array<double, 3> lambda;
    double weight; // fraction of the element measure
};

std::vector<QuadPoint> triangle_rule() {
    const double s = std::sqrt(15.0);
    const double a = (6.0 - s) / 21.0, wa = (155.0 - s) / 1200.0;
    const double b = (6.0 + s) / 21.0, wb = (155.0 + s) / 1200.0;
    return {{{1 / 3.0, 1 / 3.0, 1 / 3.0}, 9.0 / 40.0},
            {{a, a, 1 - 2 * a}, wa},
            {{a, 1 - 2 * a, a}, wa},
            {{1 - 2 * a, a, a}, wa},
            {{b, b, 1 - 2 * b}, wb},
            {{b, 1 - 2 * b, b}, wb},
            {{1 - 2 * b, b, b}, wb}};
}

std::vector<QuadPoint> interval_rule() {
    const double g = std::sqrt(0.6) / 2.0;
    return {{{0.5 - g, 0.5 + g, 0.0}, 5.0 / 18.0},
            {{0.5, 0.5, 0.0}, 8.0 / 18.0},
            {{0.5 + g, 0.5 - g, 0.0}, 5.0 / 18.0}};
}

struct Geometry {
    double measure;
    std::vector<Point> grads; // hat gradients of the local vertices
};

Geometry geometry(const Mesh &mesh, Index e) {
    const auto &v = mesh.element(e).vertices;
    if (mesh.dimension() == 1) {
        const double len = mesh.node(v[1]).x() - mesh.node(v[0]).x();
        return {std::abs(len), {Point(-1.0 / len, 0), Point(1.0 / len, 0)}};
    }
    const Point p0 = mesh.node(v[0]), p1 = mesh.node(v[1]), p2 = mesh.node(v[2]);
    const double det = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
    auto rot = [&](const Point &a, const Point &b) -> Point { return Point(a.y() - b.y(), b.x() - a.x()) / det; };
    return {std::abs(det) / 2.0, {rot(p1, p2), rot(p2, p0), rot(p0, p1)}};
}

struct Coefficients {
    std::function<double(const Point &)> c, d;
    std::function<Point(const Point &)> b;
};

// Dense row l of (nu-or-a) stiffness + drift + reaction against phi_l / |phi_l|_1,
// integrating the given coefficient functions exactly at the quadrature points.
Eigen::RowVectorXd oracle_row(const Mesh &mesh, Index l, double diffusion,
                              const Coefficients &k, double *source = nullptr) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(mesh.node_count());
    double norm = 0.0, load = 0.0;
    const auto rule = mesh.dimension() == 1 ? interval_rule() : triangle_rule();
    for (Index e : mesh.patch(l)) {
        const auto &v = mesh.element(e).vertices;
        const Geometry g = geometry(mesh, e);
        const int nv = mesh.vertices_per_element();
        int a = 0;
        while (v[a] != l)
            ++a;
        norm += g.measure / (nv);
        for (const auto &q : rule) {
            Point x = Point::Zero();
            for (int i = 0; i < nv; ++i)
                x += q.lambda[i] * mesh.node(v[i]);
            const double w = q.weight * g.measure;
            for (int j = 0; j < nv; ++j)
                row[v[j]] += w * (k.b(x).dot(g.grads[j]) + k.c(x) * q.lambda[j]) * q.lambda[a];
            load += w * k.d(x) * q.lambda[a];
        }
        for (int j = 0; j < nv; ++j)
            row[v[j]] += diffusion * g.measure * g.grads[j].dot(g.grads[a]);
    }
    if (source)
        *source = load / norm;
    return row / norm;
}

Eigen::MatrixXd dense(const SparseMatrix &m) { return Eigen::MatrixXd(m); }

} // namespace

TEST_CASE("eikonal rows are the upwind differences") {
    const Index n = 10;
    const double dx = 2.0 / n;
    auto b = build(build_interval_mesh(-1.0, 1.0, n), eikonal_problem(),
                   SplittingMode::explicit_scheme, DiffusionRule::offdiagonal);
    REQUIRE(b.ops.is_explicit());
    REQUIRE(b.ops.control_count() == 2);
    const Mesh &mesh = b.mesh;
    for (Index l = 0; l < mesh.interior_count(); ++l) {
        Index left = -1, right = -1;
        for (Index j = 0; j < mesh.node_count(); ++j) {
            if (std::abs(mesh.node(j).x() - (mesh.node(l).x() - dx)) < 1e-12)
                left = j;
            if (std::abs(mesh.node(j).x() - (mesh.node(l).x() + dx)) < 1e-12)
                right = j;
        }
        const Eigen::MatrixXd plus = dense(b.ops.controls[0].explicit_part);
        const Eigen::MatrixXd minus = dense(b.ops.controls[1].explicit_part);
        CHECK(plus(l, l) == doctest::Approx(1 / dx));
        CHECK(plus(l, left) == doctest::Approx(-1 / dx));
        CHECK(std::abs(plus(l, right)) < 1e-12);
        CHECK(minus(l, l) == doctest::Approx(1 / dx));
        CHECK(minus(l, right) == doctest::Approx(-1 / dx));
        CHECK(std::abs(minus(l, left)) < 1e-12);
        CHECK(b.ops.controls[0].source[l] == doctest::Approx(1.0));
        CHECK(b.ops.controls[0].implicit_part.nonZeros() == 0);
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.node_count());
    CHECK(apply(b.ops, 0, OperatorPart::explicit_part, ones).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("assembly agrees with an independent quadrature oracle") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
        const bool two_d = trial % 2 == 0;
        // Affine coefficients are reproduced exactly by their P1 interpolants.
        const double b0 = u(rng), b1 = u(rng), b2 = u(rng), c0 = 1.5 + u(rng), c1 = u(rng),
                     d0 = 2 + u(rng), d1 = u(rng);
        Coefficients k;
        k.b = [=](const Point &x) { return Point(b0 + b1 * x.y(), b2 * x.x()); };
        k.c = [=](const Point &x) { return c0 + 0.5 * c1 * (x.x() + x.y()); };
        k.d = [=](const Point &x) { return d0 + d1 * x.x(); };
        if (!two_d)
            k.b = [=](const Point &x) { return Point(b0 + b1 * x.x(), 0); };

        ControlProblem p = single(two_d ? 2 : 1, control(0.0, Point::Zero(), 0.0, 1.0));
        p.controls[0].drift = VectorField(k.b);
        p.controls[0].reaction = ScalarField(k.c);
        p.controls[0].cost = ScalarField(k.d);
        p.controls[0].diffusion = ScalarField([](const Point &x) { return 0.01 * (1 + x.x() * x.x()); });
        Mesh mesh = two_d ? build_patterned_rectangle_mesh(Rectangle{}, 5, 5, MeshPattern::equilateral)
                          : build_interval_mesh(0.0, 1.0, 9);
        auto b = build(std::move(mesh), p, trial < 4 ? SplittingMode::implicit_scheme
                                                     : SplittingMode::explicit_scheme);
        const auto &ops = b.ops.controls[0];
        const bool implicit = trial < 4;
        const Eigen::MatrixXd m = dense(implicit ? ops.implicit_part : ops.explicit_part);
        const auto &diffusion =
            implicit ? b.budget.controls[0].diffusion_implicit : b.budget.controls[0].diffusion_explicit;
        for (Index l = 0; l < b.mesh.interior_count(); ++l) {
            // The nodal diffusion is max(a(y_l), nu_l).
            const double a_l = 0.01 * (1 + std::pow(b.mesh.node(l).x(), 2));
            const double nu_l = implicit ? b.budget.controls[0].nu_implicit[l]
                                         : b.budget.controls[0].nu_explicit[l];
            CHECK(diffusion[l] == doctest::Approx(std::max(a_l, nu_l)).epsilon(1e-13));
            double source = 0.0;
            const Eigen::RowVectorXd expected = oracle_row(b.mesh, l, diffusion[l], k, &source);
            INFO("trial " << trial << " row " << l << "\n" << m.row(l) << "\n" << expected);
            CHECK((m.row(l) - expected).cwiseAbs().maxCoeff() <= 1e-11 * (1 + expected.cwiseAbs().maxCoeff()));
            CHECK(ops.source[l] == doctest::Approx(source).epsilon(1e-12));
        }
    }
}

TEST_CASE("row sums and constants") {
    const Mesh mesh = build_patterned_rectangle_mesh(Rectangle{}, 6, 6, MeshPattern::equilateral);
    const double c = 0.7;
    auto b = build(mesh, single(2, control(0.1, Point(0.3, -0.2), c, 1.0)),
                   SplittingMode::implicit_scheme);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(b.mesh.node_count());
    const Eigen::VectorXd sums = apply(b.ops, 0, OperatorPart::implicit_part, ones);
    // <c, phi_hat> = c for constant c.
    CHECK((sums.array() - c).abs().maxCoeff() < 1e-12);
    CHECK((b.ops.controls[0].source.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("stencil stays within the patch and apply extracts columns") {
    const Mesh mesh = build_patterned_rectangle_mesh(Rectangle{}, 5, 4, MeshPattern::equilateral);
    auto b = build(mesh, diffusion_control_problem(3), SplittingMode::semi_implicit);
    for (Index k = 0; k < b.ops.control_count(); ++k) {
        for (auto part : {OperatorPart::explicit_part, OperatorPart::implicit_part}) {
            const SparseMatrix &m = part == OperatorPart::explicit_part
                                        ? b.ops.controls[k].explicit_part
                                        : b.ops.controls[k].implicit_part;
            for (Index l = 0; l < m.outerSize(); ++l) {
                std::set<Index> neighbours;
                for (Index e : b.mesh.patch(l))
                    for (Index v : b.mesh.element(e).vertices)
                        neighbours.insert(v);
                for (SparseMatrix::InnerIterator it(m, l); it; ++it)
                    CHECK(neighbours.count(it.col()) == 1);
            }
            for (Index j = 0; j < b.mesh.node_count(); j += 7) {
                Eigen::VectorXd e = Eigen::VectorXd::Zero(b.mesh.node_count());
                e[j] = 1.0;
                const Eigen::VectorXd col = apply(b.ops, k, part, e);
                CHECK((col - dense(m).col(j)).cwiseAbs().maxCoeff() == 0.0);
            }
        }
    }
}

TEST_CASE("certification of the eikonal scheme") {
    const Index n = 16;
    const double dx = 2.0 / n;
    SUBCASE("nu = dx/2 is monotone up to h = dx") {
        auto b = build(build_interval_mesh(-1.0, 1.0, n), eikonal_problem(),
                       SplittingMode::explicit_scheme, DiffusionRule::offdiagonal);
        const auto report = certify_monotonicity(b.ops, dx);
        CHECK(report.admissible());
        CHECK(report.max_stable_h == doctest::Approx(dx));
        CHECK(report.describe_failure().empty());
        const auto too_big = certify_monotonicity(b.ops, dx * 1.01);
        CHECK_FALSE(too_big.admissible());
        CHECK(too_big.describe_failure().find("step") != std::string::npos);
    }
    SUBCASE("nu = dx/4 leaves a positive off-diagonal") {
        auto b = build(build_interval_mesh(-1.0, 1.0, n), eikonal_problem(),
                       SplittingMode::explicit_scheme, DiffusionRule::offdiagonal, 0.5);
        const auto report = certify_monotonicity(b.ops, dx / 4);
        CHECK_FALSE(report.admissible());
        CHECK_FALSE(report.controls[0].explicit_offdiag_ok);
        CHECK(report.controls[0].bad_value == doctest::Approx(0.25 / dx));
        CHECK(report.controls[0].bad_row >= 0);
        CHECK(report.controls[0].bad_column != report.controls[0].bad_row);
        CHECK_FALSE(report.describe_failure().empty());
    }
    SUBCASE("fully implicit has no step restriction") {
        auto b = build(build_interval_mesh(-1.0, 1.0, n), eikonal_problem(),
                       SplittingMode::implicit_scheme, DiffusionRule::offdiagonal);
        for (double h : {1e-3, 0.1, 1.0, 100.0}) {
            const auto report = certify_monotonicity(b.ops, h);
            CHECK(report.admissible());
            CHECK(std::isinf(report.max_stable_h));
            CHECK(report.controls[1].mmatrix_ok);
            CHECK(report.controls[1].lmp_ok);
        }
    }
}

TEST_CASE("randomized problems satisfy the matrix criteria") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 8; ++trial) {
        const double bx = u(rng), by = u(rng), c = std::abs(u(rng)), a = 0.01 * std::abs(u(rng));
        ControlProblem p = single(2, control(a, Point(bx, by), c, 1.0));
        p.controls.push_back(control(a / 2, Point(-by, bx), c / 3, 0.5));
        p.controls[1].drift = VectorField([=](const Point &x) { return Point(-by * x.y(), bx + x.x()); });
        const auto mode = trial % 3 == 0 ? SplittingMode::explicit_scheme
                          : trial % 3 == 1 ? SplittingMode::implicit_scheme
                                           : SplittingMode::semi_implicit;
        auto b = build(build_patterned_rectangle_mesh(Rectangle{}, 6, 7, MeshPattern::equilateral), p, mode);
        const auto probe = certify_monotonicity(b.ops, 1.0);
        const double h = std::isfinite(probe.max_stable_h) ? probe.max_stable_h : 0.5;
        const auto report = certify_monotonicity(b.ops, h);
        CHECK(report.admissible());

        const Index N = b.mesh.interior_count();
        for (Index k = 0; k < b.ops.control_count(); ++k) {
            const Eigen::MatrixXd E = dense(b.ops.controls[k].explicit_part);
            const Eigen::MatrixXd I = dense(b.ops.controls[k].implicit_part);
            for (Index l = 0; l < N; ++l) {
                const double scale = 1.0 + E.row(l).cwiseAbs().maxCoeff() + I.row(l).cwiseAbs().maxCoeff();
                for (Index j = 0; j < E.cols(); ++j)
                    if (j != l) {
                        CHECK(E(l, j) <= 1e-12 * scale);
                        CHECK(I(l, j) <= 1e-12 * scale);
                    }
                CHECK(I.row(l).sum() >= -1e-12 * scale);
                // h E - Id is entrywise non-positive.
                CHECK(h * E(l, l) - 1.0 <= 1e-12);
            }
            // Weak discrete maximum principle for the implicit solve:
            // non-negative data gives a non-negative solution.
            const Eigen::MatrixXd M = h * I.leftCols(N) + Eigen::MatrixXd::Identity(N, N);
            Eigen::VectorXd f(N);
            for (Index i = 0; i < N; ++i)
                f[i] = std::abs(u(rng));
            const Eigen::VectorXd w = M.partialPivLu().solve(f);
            CHECK(w.minCoeff() >= -1e-12);
        }
    }
}

TEST_CASE("assembly rejects a budget from another mesh") {
    const Mesh a = build_interval_mesh(-1.0, 1.0, 8);
    const Mesh other = build_interval_mesh(-1.0, 1.0, 8);
    const auto split = make_splitting(eikonal_problem(), a, SplittingMode::explicit_scheme);
    const auto budget = compute_diffusion_budget(a, split, acuteness_certificate(a));
    CHECK_NOTHROW(assemble(a, split, budget));
    CHECK_THROWS_AS(assemble(other, split, budget), ConfigurationError);
}

TEST_CASE("interior block and COO output") {
    auto b = build(build_interval_mesh(0.0, 1.0, 5),
                   single(1, control(1.0, Point::Zero(), 0.0, 1.0)), SplittingMode::implicit_scheme);
    const SparseMatrix &m = b.ops.controls[0].implicit_part;
    const SparseMatrix block = interior_block(m, b.ops.interior_count);
    CHECK(block.rows() == 4);
    CHECK(block.cols() == 4);
    CHECK((dense(block) - dense(m).leftCols(4)).norm() == 0.0);

    std::ostringstream out;
    write_matrix_coo(out, m);
    std::istringstream in(out.str());
    Eigen::MatrixXd back = Eigen::MatrixXd::Zero(m.rows(), m.cols());
    Index r, c;
    double v;
    int count = 0;
    while (in >> r >> c >> v) {
        back(r, c) = v;
        ++count;
    }
    CHECK(count == m.nonZeros());
    CHECK((back - dense(m)).cwiseAbs().maxCoeff() == 0.0);
}
