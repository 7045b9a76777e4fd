#include "hjbfem/control_problem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hjbfem/errors.hpp"
#include "local_matrices.hpp"

namespace hjbfem {

ScalarField ScalarField::constant(double value) {
    ScalarField f(Function{});
    f.constant_ = value;
    return f;
}

ScalarField ScalarField::scaled(double factor) const {
    if (constant_)
        return constant(*constant_ * factor);
    if (factor == 0.0)
        return constant(0.0);
    return ScalarField([f = f_, factor](const Point &p) { return factor * f(p); });
}

VectorField VectorField::constant(const Point &value) {
    VectorField f(Function{});
    f.constant_ = value;
    return f;
}

VectorField VectorField::scaled(double factor) const {
    if (constant_)
        return constant(*constant_ * factor);
    if (factor == 0.0)
        return constant(Point::Zero());
    return VectorField([f = f_, factor](const Point &p) -> Point { return factor * f(p); });
}

ScalarField nodal_field(std::shared_ptr<const Mesh> mesh, Eigen::VectorXd values) {
    if (values.size() != mesh->node_count())
        throw ConfigurationError("nodal table needs one value per mesh node");
    auto locator = std::make_shared<const PointLocator>(*mesh);
    return ScalarField([mesh, locator, values = std::move(values)](const Point &p) {
        const auto hit = locator->locate(p);
        if (!hit)
            throw QueryError("tabulated field evaluated outside of its mesh");
        double v = 0.0;
        for (int k = 0; k < mesh->vertices_per_element(); ++k)
            v += hit->weights[k] * values[mesh->element(hit->element).vertices[k]];
        return v;
    });
}

namespace {

template <class Visit>
void for_each_sample(const Mesh &mesh, Visit &&visit) {
    for (const Point &p : mesh.nodes())
        visit(p);
    for (const Element &el : mesh.elements())
        visit(el.centroid);
}

} // namespace

void ControlProblem::validate(const Mesh &mesh) const {
    if (controls.empty())
        throw ConfigurationError("control problem has no controls");
    if (mesh.dimension() != dimension)
        throw ConfigurationError("problem and mesh dimensions differ");
    if (!(horizon > 0.0))
        throw ConfigurationError("horizon must be positive");
    for (const auto &ctrl : controls) {
        for_each_sample(mesh, [&](const Point &p) {
            if (ctrl.diffusion(p) < 0.0)
                throw ConfigurationError("control " + ctrl.label + ": negative diffusion");
            if (ctrl.reaction(p) < 0.0)
                throw ConfigurationError("control " + ctrl.label + ": negative reaction");
            if (ctrl.cost(p) < 0.0)
                throw ConfigurationError("control " + ctrl.label + ": negative running cost");
        });
    }
    for_each_sample(mesh, [&](const Point &p) {
        if (final_data(p) < -1e-12)
            throw ConfigurationError("final data must be non-negative");
    });
    for (Index i = mesh.interior_count(); i < mesh.node_count(); ++i)
        if (std::abs(final_data(mesh.node(i))) > 1e-12)
            throw ConfigurationError("final data must vanish on the boundary");
}

ControlProblem eikonal_problem() {
    ControlProblem p;
    p.dimension = 1;
    p.horizon = 1.0;
    p.final_data = ScalarField::constant(0.0);
    for (double alpha : {1.0, -1.0}) {
        ControlCoefficients c;
        c.label = alpha > 0 ? "+1" : "-1";
        c.diffusion = ScalarField::constant(0.0);
        c.drift = VectorField::constant(Point(alpha, 0.0));
        c.reaction = ScalarField::constant(0.0);
        c.cost = ScalarField::constant(1.0);
        p.controls.push_back(std::move(c));
    }
    return p;
}

double eikonal_solution(double t, const Point &x) {
    return std::min(1.0 - t, 1.0 - std::abs(x.x()));
}

Point eikonal_gradient(double t, const Point &x) {
    if (std::abs(x.x()) > t)
        return Point(x.x() > 0 ? -1.0 : 1.0, 0.0);
    return Point::Zero();
}

ControlProblem diffusion_control_problem(int control_count) {
    if (control_count < 1)
        throw ConfigurationError("need at least one control");
    ControlProblem p;
    p.dimension = 2;
    p.horizon = 0.25;
    p.final_data = ScalarField::constant(0.0);
    const double span = std::max(control_count - 1, 1);
    for (int k = 0; k < control_count; ++k) {
        const double s = control_count == 1 ? 0.5 : k / span;
        const double angle = 2.0 * std::numbers::pi * k / control_count;
        ControlCoefficients c;
        c.label = "k" + std::to_string(k);
        c.diffusion = ScalarField::constant(0.05 + 0.15 * s);
        c.drift = VectorField::constant(0.5 * Point(std::cos(angle), std::sin(angle)));
        c.reaction = ScalarField::constant(0.5 * s);
        c.cost = ScalarField([s](const Point &x) { return 1.0 + s * x.x() * x.x(); });
        p.controls.push_back(std::move(c));
    }
    return p;
}

std::optional<SplittingMode> parse_splitting_mode(const std::string &name) {
    if (name == "explicit")
        return SplittingMode::explicit_scheme;
    if (name == "implicit")
        return SplittingMode::implicit_scheme;
    if (name == "semi-implicit" || name == "semi_implicit")
        return SplittingMode::semi_implicit;
    return std::nullopt;
}

std::string to_string(SplittingMode mode) {
    switch (mode) {
    case SplittingMode::explicit_scheme:
        return "explicit";
    case SplittingMode::implicit_scheme:
        return "implicit";
    case SplittingMode::semi_implicit:
        return "semi-implicit";
    }
    return "unknown";
}

OperatorSplitting make_splitting(const ControlProblem &problem, const Mesh &mesh,
                                 SplittingMode mode, ImplicitShares shares,
                                 std::optional<double> reaction_bound) {
    problem.validate(mesh);
    if (mode == SplittingMode::explicit_scheme)
        shares = {0.0, 0.0, 0.0};
    else if (mode == SplittingMode::implicit_scheme)
        shares = {1.0, 1.0, 1.0};
    for (double s : {shares.diffusion, shares.drift, shares.reaction})
        if (!(s >= 0.0 && s <= 1.0))
            throw ConfigurationError("implicit shares must lie in [0, 1]");

    OperatorSplitting out;
    out.mode = mode;
    double gamma = 0.0;
    for (const auto &ctrl : problem.controls) {
        SplitCoefficients s;
        s.diffusion_explicit = ctrl.diffusion.scaled(1.0 - shares.diffusion);
        s.diffusion_implicit = ctrl.diffusion.scaled(shares.diffusion);
        s.drift_explicit = ctrl.drift.scaled(1.0 - shares.drift);
        s.drift_implicit = ctrl.drift.scaled(shares.drift);
        s.reaction_explicit = ctrl.reaction.scaled(1.0 - shares.reaction);
        s.reaction_implicit = ctrl.reaction.scaled(shares.reaction);
        s.cost = ctrl.cost;
        double sup_explicit = 0.0, sup_implicit = 0.0;
        for_each_sample(mesh, [&](const Point &p) {
            sup_explicit = std::max(sup_explicit, s.reaction_explicit(p));
            sup_implicit = std::max(sup_implicit, s.reaction_implicit(p));
        });
        gamma = std::max(gamma, sup_explicit + sup_implicit);
        out.controls.push_back(std::move(s));
        out.labels.push_back(ctrl.label);
    }
    if (reaction_bound) {
        if (*reaction_bound < gamma)
            throw ConfigurationError("reaction bound override is below the sampled reaction sup");
        gamma = *reaction_bound;
    }
    out.reaction_bound = gamma;
    return out;
}

std::optional<DiffusionRule> parse_diffusion_rule(const std::string &name) {
    if (name == "patch_bound" || name == "patch-bound")
        return DiffusionRule::patch_bound;
    if (name == "offdiagonal")
        return DiffusionRule::offdiagonal;
    return std::nullopt;
}

std::string to_string(DiffusionRule rule) {
    return rule == DiffusionRule::patch_bound ? "patch_bound" : "offdiagonal";
}

double lower_order_size(const Mesh &mesh, Index element, const VectorField &drift,
                        const ScalarField &reaction) {
    std::array<Point, 4> pts;
    const int n = detail::sample_points(mesh, element, pts);
    double bx = 0.0, by = 0.0, c = 0.0;
    for (int k = 0; k < n; ++k) {
        if (!drift.is_zero()) {
            const Point b = drift(pts[k]);
            bx = std::max(bx, std::abs(b.x()));
            if (mesh.dimension() == 2)
                by = std::max(by, std::abs(b.y()));
        }
        if (!reaction.is_zero())
            c = std::max(c, std::abs(reaction(pts[k])));
    }
    return std::hypot(bx, by) + mesh.element(element).diameter * c;
}

double diffusion_capacity(const Mesh &mesh, Index element, Index node, double sin_theta) {
    const int k = mesh.local_index(element, node);
    if (k < 0)
        throw ConfigurationError("node is not a vertex of the element");
    const Element &el = mesh.element(element);
    return sin_theta * el.gradients[k].norm() / mesh.hat_l1_norm(node) * el.volume;
}

namespace {

bool has_lower_order(const OperatorSplitting &splitting) {
    for (const auto &c : splitting.controls)
        if (!c.drift_explicit.is_zero() || !c.drift_implicit.is_zero() ||
            !c.reaction_explicit.is_zero() || !c.reaction_implicit.is_zero())
            return true;
    return false;
}

double patch_bound_nu(const Mesh &mesh, Index node, const VectorField &drift,
                      const ScalarField &reaction, double sin_theta) {
    if (drift.is_zero() && reaction.is_zero())
        return 0.0;
    double nu = 0.0;
    for (Index e : mesh.patch(node)) {
        const double need = lower_order_size(mesh, e, drift, reaction);
        if (need > 0.0)
            nu = std::max(nu, need / diffusion_capacity(mesh, e, node, sin_theta));
    }
    return nu;
}

double offdiagonal_nu(const Mesh &mesh, Index node, const VectorField &drift,
                      const ScalarField &reaction) {
    if (drift.is_zero() && reaction.is_zero())
        return 0.0;
    struct Entry {
        Index column;
        double stiffness;
        double lower;
    };
    std::vector<Entry> row;
    for (Index e : mesh.patch(node)) {
        const int a = mesh.local_index(e, node);
        const auto k = detail::stiffness_local(mesh, e);
        const auto m = detail::lower_order_local(mesh, e, drift, reaction);
        for (int j = 0; j < mesh.vertices_per_element(); ++j) {
            if (j == a)
                continue;
            const Index col = mesh.element(e).vertices[j];
            auto it = std::find_if(row.begin(), row.end(),
                                   [col](const Entry &x) { return x.column == col; });
            if (it == row.end())
                row.push_back({col, k[a][j], m[a][j]});
            else {
                it->stiffness += k[a][j];
                it->lower += m[a][j];
            }
        }
    }
    double nu = 0.0;
    for (const auto &entry : row) {
        if (entry.lower <= 0.0)
            continue;
        if (!(entry.stiffness < 0.0)) {
            std::ostringstream msg;
            msg << "no artificial diffusion removes the positive coupling between nodes "
                << node << " and " << entry.column;
            throw MonotonicityError(msg.str());
        }
        nu = std::max(nu, entry.lower / -entry.stiffness);
    }
    return nu;
}

void apply_max_rule(ControlDiffusion &d) {
    d.diffusion_explicit = d.seed_explicit.cwiseMax(d.nu_explicit);
    d.diffusion_implicit = d.seed_implicit.cwiseMax(d.nu_implicit);
}

ControlDiffusion seeds(const Mesh &mesh, const SplitCoefficients &split) {
    const Index n = mesh.interior_count();
    ControlDiffusion d;
    d.seed_explicit.resize(n);
    d.seed_implicit.resize(n);
    for (Index i = 0; i < n; ++i) {
        d.seed_explicit[i] = split.diffusion_explicit(mesh.node(i));
        d.seed_implicit[i] = split.diffusion_implicit(mesh.node(i));
    }
    d.nu_explicit = Eigen::VectorXd::Zero(n);
    d.nu_implicit = Eigen::VectorXd::Zero(n);
    return d;
}

} // namespace

DiffusionBudget compute_diffusion_budget(const Mesh &mesh, const OperatorSplitting &splitting,
                                         const AcutenessCertificate &certificate,
                                         DiffusionRule rule) {
    const bool needs_stabilization = has_lower_order(splitting);
    if (needs_stabilization && !certificate.strictly_acute) {
        std::ostringstream msg;
        msg << "mesh is not strictly acute (sin_theta = " << certificate.sin_theta
            << " at element " << certificate.worst_element << ", nodes "
            << certificate.worst_node_a << " and " << certificate.worst_node_b
            << "); artificial diffusion cannot make the scheme monotone";
        throw MonotonicityError(msg.str());
    }

    DiffusionBudget budget;
    budget.mesh_id = mesh.id();
    budget.interior_count = mesh.interior_count();
    budget.rule = rule;
    budget.sin_theta = certificate.sin_theta;
    for (const auto &split : splitting.controls) {
        ControlDiffusion d = seeds(mesh, split);
        for (Index i = 0; i < mesh.interior_count(); ++i) {
            if (rule == DiffusionRule::patch_bound) {
                d.nu_explicit[i] = patch_bound_nu(mesh, i, split.drift_explicit,
                                                  split.reaction_explicit, certificate.sin_theta);
                d.nu_implicit[i] = patch_bound_nu(mesh, i, split.drift_implicit,
                                                  split.reaction_implicit, certificate.sin_theta);
            } else {
                d.nu_explicit[i] = offdiagonal_nu(mesh, i, split.drift_explicit, split.reaction_explicit);
                d.nu_implicit[i] = offdiagonal_nu(mesh, i, split.drift_implicit, split.reaction_implicit);
            }
        }
        apply_max_rule(d);
        budget.controls.push_back(std::move(d));
    }
    return budget;
}

DiffusionBudget uniform_diffusion_budget(const Mesh &mesh, const OperatorSplitting &splitting,
                                         double nu_explicit, double nu_implicit) {
    if (nu_explicit < 0.0 || nu_implicit < 0.0)
        throw ConfigurationError("artificial diffusion must be non-negative");
    DiffusionBudget budget;
    budget.mesh_id = mesh.id();
    budget.interior_count = mesh.interior_count();
    budget.sin_theta = acuteness_certificate(mesh).sin_theta;
    for (const auto &split : splitting.controls) {
        ControlDiffusion d = seeds(mesh, split);
        d.nu_explicit.setConstant(nu_explicit);
        d.nu_implicit.setConstant(nu_implicit);
        apply_max_rule(d);
        budget.controls.push_back(std::move(d));
    }
    return budget;
}

DiffusionBudget scale_diffusion_budget(DiffusionBudget budget, double factor) {
    if (factor < 0.0)
        throw ConfigurationError("diffusion scale must be non-negative");
    for (auto &d : budget.controls) {
        d.nu_explicit *= factor;
        d.nu_implicit *= factor;
        apply_max_rule(d);
    }
    return budget;
}

double splitting_consistency_residual(const Mesh &mesh, const ControlProblem &problem,
                                      const OperatorSplitting &splitting,
                                      const DiffusionBudget &budget) {
    if (budget.mesh_id != mesh.id())
        throw ConfigurationError("diffusion budget was computed on a different mesh");
    if (problem.controls.size() != splitting.controls.size() ||
        splitting.controls.size() != budget.controls.size())
        throw ConfigurationError("problem, splitting and budget disagree on the control count");

    double worst = 0.0;
    std::array<Point, 4> pts;
    for (std::size_t k = 0; k < problem.controls.size(); ++k) {
        const auto &ctrl = problem.controls[k];
        const auto &split = splitting.controls[k];
        const auto &diff = budget.controls[k];
        for (Index i = 0; i < mesh.interior_count(); ++i) {
            const double nodal = diff.diffusion_explicit[i] + diff.diffusion_implicit[i];
            double da = 0.0, db = 0.0, dc = 0.0, dd = 0.0;
            for (Index e : mesh.patch(i)) {
                const int n = detail::sample_points(mesh, e, pts);
                for (int s = 0; s < n; ++s) {
                    const Point &p = pts[s];
                    da = std::max(da, std::abs(ctrl.diffusion(p) - nodal));
                    Point bdiff = ctrl.drift(p) - split.drift_explicit(p) - split.drift_implicit(p);
                    if (mesh.dimension() == 1)
                        bdiff.y() = 0.0;
                    db = std::max(db, bdiff.norm());
                    dc = std::max(dc, std::abs(ctrl.reaction(p) - split.reaction_explicit(p) -
                                               split.reaction_implicit(p)));
                    dd = std::max(dd, std::abs(ctrl.cost(p) - split.cost(p)));
                }
            }
            worst = std::max(worst, da + db + dc + dd);
        }
    }
    return worst;
}

} // namespace hjbfem
