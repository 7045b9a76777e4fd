#ifndef HJBFEM_CONTROL_PROBLEM_HPP
#define HJBFEM_CONTROL_PROBLEM_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hjbfem/mesh.hpp"

namespace hjbfem {

/// Scalar coefficient field on the closed domain.
class ScalarField {
public:
    using Function = std::function<double(const Point &)>;

    ScalarField() : ScalarField(constant(0.0)) {}
    explicit ScalarField(Function f) : f_(std::move(f)) {}

    static ScalarField constant(double value);

    double operator()(const Point &p) const { return constant_ ? *constant_ : f_(p); }

    std::optional<double> constant_value() const { return constant_; }
    bool is_zero() const { return constant_ && *constant_ == 0.0; }

    ScalarField scaled(double factor) const;

private:
    Function f_;
    std::optional<double> constant_;
};

/// Vector coefficient field (second component ignored in one dimension).
class VectorField {
public:
    using Function = std::function<Point(const Point &)>;

    VectorField() : VectorField(constant(Point::Zero())) {}
    explicit VectorField(Function f) : f_(std::move(f)) {}

    static VectorField constant(const Point &value);

    Point operator()(const Point &p) const { return constant_ ? *constant_ : f_(p); }

    bool is_zero() const { return constant_ && constant_->isZero(0.0); }

    VectorField scaled(double factor) const;

private:
    Function f_;
    std::optional<Point> constant_;
};

/// P1 interpolant of per-node data on `mesh`; evaluation outside the mesh
/// throws QueryError.
ScalarField nodal_field(std::shared_ptr<const Mesh> mesh, Eigen::VectorXd values);

/// Coefficients of L w = -a lap(w) + b.grad(w) + c w and the running cost d
/// for one control.
struct ControlCoefficients {
    std::string label;
    ScalarField diffusion; // a >= 0
    VectorField drift;     // b
    ScalarField reaction;  // c >= 0
    ScalarField cost;      // d >= 0
};

/// -v_t + max_k (L_k v - d_k) = 0 with v = 0 on the lateral boundary and
/// v(T) = final_data, over a finite list of controls.
struct ControlProblem {
    int dimension = 1;
    std::vector<ControlCoefficients> controls;
    ScalarField final_data;
    double horizon = 1.0;

    /// Samples coefficient signs at nodes and centroids and checks that the
    /// final data is non-negative and vanishes on boundary nodes. Throws
    /// ConfigurationError.
    void validate(const Mesh &mesh) const;
};

/// -v_t + |v_x| = 1 on (0,1) x (-1,1), v = 0 on the boundary and at t = 1,
/// written with the two controls b = +1 and b = -1. Use on [-1, 1].
ControlProblem eikonal_problem();

/// Viscosity solution min(1 - t, 1 - |x|) of the eikonal problem.
double eikonal_solution(double t, const Point &x);

/// Spatial gradient of eikonal_solution (one-sided on the kink).
Point eikonal_gradient(double t, const Point &x);

/// Two-dimensional demo with `control_count` controls that trade diffusion,
/// drift direction and discounting against a running cost. v_T = 0, T = 1/4.
ControlProblem diffusion_control_problem(int control_count);

enum class SplittingMode { explicit_scheme, implicit_scheme, semi_implicit };

std::optional<SplittingMode> parse_splitting_mode(const std::string &name);
std::string to_string(SplittingMode mode);

/// Fractions of diffusion, drift and reaction placed in the implicit part
/// for semi-implicit splittings.
struct ImplicitShares {
    double diffusion = 0.5;
    double drift = 0.5;
    double reaction = 0.5;
};

/// Explicit/implicit split of one control. The diffusion entries are seeds:
/// the assembled nodal diffusion is max(seed, artificial diffusion).
struct SplitCoefficients {
    ScalarField diffusion_explicit;
    ScalarField diffusion_implicit;
    VectorField drift_explicit;
    VectorField drift_implicit;
    ScalarField reaction_explicit;
    ScalarField reaction_implicit;
    ScalarField cost;
};

struct OperatorSplitting {
    SplittingMode mode = SplittingMode::implicit_scheme;
    std::vector<SplitCoefficients> controls;
    std::vector<std::string> labels;
    /// Bound on sup of explicit plus implicit reaction over all controls.
    double reaction_bound = 0.0;
};

/// Splits each control's coefficients. `explicit_scheme` puts everything in
/// the explicit part, `implicit_scheme` everything in the implicit part and
/// `semi_implicit` uses `shares`. A reaction-bound override smaller than the
/// sampled bound is rejected with ConfigurationError.
OperatorSplitting make_splitting(const ControlProblem &problem, const Mesh &mesh,
                                 SplittingMode mode, ImplicitShares shares = {},
                                 std::optional<double> reaction_bound = std::nullopt);

/// How the artificial diffusion is sized.
///
/// `patch_bound`: the smallest value satisfying, on every element T of the
/// node's patch, (|b|_T + diam(T) |c|_T) <= nu sin(theta) |grad phi_hat|_T vol(T).
/// `offdiagonal`: the smallest value that makes every off-diagonal entry of
/// the assembled row non-positive.
enum class DiffusionRule { patch_bound, offdiagonal };

std::optional<DiffusionRule> parse_diffusion_rule(const std::string &name);
std::string to_string(DiffusionRule rule);

/// Per-control nodal artificial diffusion on the interior nodes.
struct ControlDiffusion {
    Eigen::VectorXd nu_explicit;
    Eigen::VectorXd nu_implicit;
    Eigen::VectorXd seed_explicit;
    Eigen::VectorXd seed_implicit;
    /// max(seed, nu): the diffusion actually assembled at each interior node.
    Eigen::VectorXd diffusion_explicit;
    Eigen::VectorXd diffusion_implicit;
};

struct DiffusionBudget {
    std::uint64_t mesh_id = 0;
    Index interior_count = 0;
    DiffusionRule rule = DiffusionRule::patch_bound;
    double sin_theta = 1.0;
    std::vector<ControlDiffusion> controls;
};

/// Throws MonotonicityError when the mesh is not strictly acute and some
/// control has non-vanishing lower-order terms.
DiffusionBudget compute_diffusion_budget(const Mesh &mesh, const OperatorSplitting &splitting,
                                         const AcutenessCertificate &certificate,
                                         DiffusionRule rule = DiffusionRule::patch_bound);

/// Same nu at every interior node of every control.
DiffusionBudget uniform_diffusion_budget(const Mesh &mesh, const OperatorSplitting &splitting,
                                         double nu_explicit, double nu_implicit);

/// Multiplies every nu by `factor` and re-applies the max rule.
DiffusionBudget scale_diffusion_budget(DiffusionBudget budget, double factor);

/// Left-hand side |b|_T + diam(T) |c|_T of the patch bound, with sup norms
/// sampled at the vertices and the centroid of T.
double lower_order_size(const Mesh &mesh, Index element, const VectorField &drift,
                        const ScalarField &reaction);

/// sin(theta) |grad phi_hat_node|_T vol(T), the factor multiplying nu.
double diffusion_capacity(const Mesh &mesh, Index element, Index node, double sin_theta);

/// Sampled sup over controls and interior nodes of the splitting defect
/// |a - (a_expl(y) + a_impl(y))| + |b - (b_expl + b_impl)| + |c - (c_expl + c_impl)| + |d - d_h|.
double splitting_consistency_residual(const Mesh &mesh, const ControlProblem &problem,
                                      const OperatorSplitting &splitting,
                                      const DiffusionBudget &budget);

} // namespace hjbfem

#endif
