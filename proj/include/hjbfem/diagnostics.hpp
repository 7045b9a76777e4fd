#ifndef HJBFEM_DIAGNOSTICS_HPP
#define HJBFEM_DIAGNOSTICS_HPP

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hjbfem/assembly.hpp"
#include "hjbfem/mesh.hpp"
#include "hjbfem/solver.hpp"

namespace hjbfem {

using SpaceTimeField = std::function<double(double, const Point &)>;
using SpaceTimeGradient = std::function<Point(double, const Point &)>;

/// Max over levels and nodes of |v(s^k, y) - exact(s^k, y)|.
double linf_error(const DiscreteSolution &solution, const SpaceTimeField &exact);

/// sqrt of the space-time integral of |grad v - grad exact|^2, with v affine
/// in time. Two Gauss points per time interval, three per interval in 1D and
/// 3x3 collapsed Gauss points per triangle; no point lies on an element edge.
double l2h1_error(const DiscreteSolution &solution, const SpaceTimeGradient &exact_gradient);

/// Same seminorm for the difference of two solutions, integrated on the
/// elements and time intervals of `fine`. Exact when the meshes and time
/// grids are nested.
double l2h1_difference(const DiscreteSolution &coarse, const DiscreteSolution &fine);

struct ErrorReport {
    double linf_error = 0.0;
    double l2h1_error = 0.0;
    double mesh_size = 0.0;
    double h = 0.0;
    std::string tag;
};

/// Smooth field with the derivatives needed by the consistency probes.
struct SmoothField {
    std::function<double(const Point &)> value;
    std::function<Point(const Point &)> gradient;
    std::function<double(const Point &)> laplacian;
};

/// sin(pi x) sin(pi y).
SmoothField sine_product_field();

/// c + g.x
SmoothField affine_field(double c, const Point &g);

/// Stiffness rows of the interior nodes (all columns), unnormalized.
SparseMatrix stiffness_matrix(const Mesh &mesh);

struct EllipticProjection {
    /// Coefficients of P w; boundary entries are w at the boundary nodes.
    Eigen::VectorXd values;
    /// Max over interior nodes of |<grad(P w - w), grad phi_l>|.
    double residual = 0.0;
};

/// Solves <grad P w, grad phi_l> = <grad w, grad phi_l> for interior l, with
/// the right-hand side integrated by a 12x12 collapsed Gauss rule.
EllipticProjection elliptic_projection(const Mesh &mesh, const SmoothField &w);

/// <grad u, grad phi_hat_node> for the P1 function with coefficients `u`.
double stiffness_action(const Mesh &mesh, const Eigen::VectorXd &u, Index node);

/// <-lap w, phi_hat_node> by high-order quadrature. Equals
/// <grad w, grad phi_hat_node> because the hat vanishes on its patch boundary.
double laplacian_action(const Mesh &mesh, const SmoothField &w, Index node);

struct ConsistencyProbe {
    MeshPattern pattern = MeshPattern::consistent;
    double spacing = 0.0;
    Index node = -1;
    Point probe = Point::Zero();
    /// <grad I w, grad phi_hat> with the nodal interpolant I w.
    double interpolant_action = 0.0;
    /// <grad P w, grad phi_hat> with the elliptic projection P w.
    double projection_action = 0.0;
    /// <grad w, grad phi_hat>, integrated independently as <-lap w, phi_hat>.
    double exact_action = 0.0;
    /// -lap w at the probe point.
    double laplacian_reference = 0.0;

    double interpolant_ratio() const { return interpolant_action / laplacian_reference; }
    double projection_ratio() const { return projection_action / exact_action; }
    double projection_pointwise_ratio() const { return projection_action / laplacian_reference; }
};

/// Probes the unit square meshed with `pattern` at each spacing. The probe
/// point must be a mesh node at every level (ConfigurationError otherwise).
std::vector<ConsistencyProbe> consistency_experiment(MeshPattern pattern, const SmoothField &w,
                                                     const Point &probe,
                                                     const std::vector<double> &spacings);

struct ConvergenceRow {
    double mesh_size = 0.0;
    double h = 0.0;
    double linf_error = 0.0;
    double l2h1_error = 0.0;
    /// Error of the previous row divided by this one; NaN on the first row.
    double linf_reduction = 0.0;
    double l2h1_reduction = 0.0;
};

/// One row per solution, ordered as given.
std::vector<ConvergenceRow> convergence_study(const std::vector<DiscreteSolution> &solutions,
                                              const SpaceTimeField &exact,
                                              const SpaceTimeGradient &exact_gradient);

bool linf_non_increasing(const std::vector<ConvergenceRow> &rows);

/// Eikonal problem on [-1, 1] with n elements per level (node spacing 2/n),
/// artificial diffusion from the off-diagonal rule and h = cfl * max_stable_h
/// (h = spacing when no explicit restriction exists).
std::vector<ConvergenceRow> eikonal_benchmark(SplittingMode mode,
                                              const std::vector<Index> &element_counts,
                                              double cfl = 1.0, const SolverOptions &options = {});

/// <<E w, u>> = sum_l u_l ||phi_l||_1 (E w)_l over interior nodes.
double pivot_form(const Mesh &mesh, const Eigen::VectorXd &operator_rows, const Eigen::VectorXd &u);

/// Minimum over trials of the coercivity right-hand side divided by
/// |w|^2_{L2(H1)}. Each trial holds one row per time level, one column per
/// node; trials with vanishing seminorm are skipped (nullopt if all are).
/// Trials must be non-negative and vanish on the boundary.
std::optional<double> coercivity_probe(const DiscreteOperatorSet &ops, const Mesh &mesh,
                                       const TimeGrid &grid, Index control,
                                       const std::vector<Eigen::MatrixXd> &trials);

// CSV tables with a header row, 17 significant digits.
void write_convergence_csv(std::ostream &out, const std::vector<ConvergenceRow> &rows);
void write_consistency_csv(std::ostream &out, const std::vector<ConsistencyProbe> &probes);

} // namespace hjbfem

#endif
