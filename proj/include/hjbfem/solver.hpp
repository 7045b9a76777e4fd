#ifndef HJBFEM_SOLVER_HPP
#define HJBFEM_SOLVER_HPP

#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "hjbfem/assembly.hpp"
#include "hjbfem/control_problem.hpp"
#include "hjbfem/mesh.hpp"

namespace hjbfem {

/// Uniform time levels s^k = k h, k = 0..steps, with h = horizon / steps.
struct TimeGrid {
    double horizon = 1.0;
    Index steps = 1;

    double step() const { return horizon / static_cast<double>(steps); }
    double level(Index k) const { return static_cast<double>(k) * step(); }

    static TimeGrid from_steps(double horizon, Index steps);
    /// Requires horizon / h to be an integer up to a relative 1e-9.
    static TimeGrid from_step(double horizon, double h);
    /// Largest h <= cfl * max_stable_h that divides the horizon. `adjusted`
    /// reports whether h had to be rounded down.
    static TimeGrid from_cfl(double horizon, double max_stable_h, double cfl,
                             bool *adjusted = nullptr);
};

/// Nodal values at every time level, affine in time between levels and P1
/// in space.
class DiscreteSolution {
public:
    DiscreteSolution(std::shared_ptr<const Mesh> mesh, TimeGrid grid, Eigen::MatrixXd values);

    const Mesh &mesh() const { return *mesh_; }
    const std::shared_ptr<const Mesh> &mesh_ptr() const { return mesh_; }
    const TimeGrid &grid() const { return grid_; }
    /// Row k holds the node values at s^k.
    const Eigen::MatrixXd &values() const { return values_; }
    Eigen::VectorXd level_values(Index k) const { return values_.row(k).transpose(); }

    /// Throws QueryError for t outside [0, T] or x outside the mesh.
    double evaluate(double t, const Point &x) const;
    Point gradient(double t, const Point &x) const;

    double min_value() const { return values_.minCoeff(); }

private:
    std::shared_ptr<const Mesh> mesh_;
    std::shared_ptr<const PointLocator> locator_;
    TimeGrid grid_;
    Eigen::MatrixXd values_;
};

struct LevelReport {
    Index level = 0;
    Index iterations = 0;
    /// Sup norm of the time-level residual after each iteration.
    std::vector<double> residuals;
    /// Control index selected at each interior node.
    std::vector<Index> policy;
};

struct PolicyIterationReport {
    /// In order of computation, i.e. from k = steps-1 down to 0.
    std::vector<LevelReport> levels;

    Index total_iterations() const;
    Index max_iterations() const;
};

struct SolverOptions {
    /// Residual tolerance; default 1e-10 (1 + max |C|).
    std::optional<double> tol;
    Index max_iter = 50;
    /// Refuse to run when certify_monotonicity rejects the time step.
    bool require_certification = true;
};

double default_tolerance(const DiscreteOperatorSet &ops);

/// Controls and row-assembled operators selected at each interior node.
struct PolicySelection {
    std::vector<Index> policy;
    SparseMatrix explicit_part;
    SparseMatrix implicit_part;
    Eigen::VectorXd source;
};

/// Maximizes (E v_next + I v_curr - C)_l over the controls at each interior
/// node; ties go to the lowest control index.
PolicySelection select_policy(const DiscreteOperatorSet &ops, const Eigen::VectorXd &v_next,
                              const Eigen::VectorXd &v_curr);

/// Interior residual of -(v_next - v_curr)/h + max_a (E v_next + I v_curr - C).
Eigen::VectorXd scheme_residual(const DiscreteOperatorSet &ops, const Eigen::VectorXd &v_next,
                                const Eigen::VectorXd &v_curr, double h);

struct StepResult {
    Eigen::VectorXd values;
    LevelReport report;
};

/// One backward step by policy iteration (a single explicit sweep when every
/// implicit part vanishes). Throws NonConvergenceError or MMatrixError.
StepResult howard_solve_step(const DiscreteOperatorSet &ops, const Eigen::VectorXd &v_next,
                             double h, double tol, Index max_iter);

/// Solves M x = rhs with ||M x - rhs||_inf <= tol (1 + ||rhs||_inf). Sparse
/// LU up to 2e4 unknowns, BiCGSTAB beyond. Throws MMatrixError on a singular
/// factorization and LinearSolverError when the residual bound fails.
Eigen::VectorXd solve_mmatrix_system(const SparseMatrix &m, const Eigen::VectorXd &rhs,
                                     double tol = 1e-12);

struct SolveResult {
    DiscreteSolution solution;
    PolicyIterationReport report;
    MonotonicityReport certification;
};

/// Marches from the final values down to s^0. Final values are taken as
/// given on the interior and set to zero on the boundary. Throws
/// CertificationError when certification is required and fails.
SolveResult backward_solve(const DiscreteOperatorSet &ops, std::shared_ptr<const Mesh> mesh,
                           const TimeGrid &grid, const Eigen::VectorXd &final_values,
                           const SolverOptions &options = {});

/// Assembles with the given budget and starts from the interpolant of v_T.
SolveResult backward_solve(const ControlProblem &problem, std::shared_ptr<const Mesh> mesh,
                           const OperatorSplitting &splitting, const DiffusionBudget &budget,
                           const TimeGrid &grid, const SolverOptions &options = {});

/// Same, with the patch-bound diffusion budget.
SolveResult backward_solve(const ControlProblem &problem, std::shared_ptr<const Mesh> mesh,
                           const OperatorSplitting &splitting, const TimeGrid &grid,
                           const SolverOptions &options = {});

/// Linear evolution (h I + Id) v^k = -(h E - Id) v^{k+1} + h C for one
/// control, with the implicit matrix factorized once.
DiscreteSolution fixed_control_solve(const DiscreteOperatorSet &ops,
                                     std::shared_ptr<const Mesh> mesh, const TimeGrid &grid,
                                     const Eigen::VectorXd &final_values, Index control,
                                     const SolverOptions &options = {});

DiscreteSolution fixed_control_solve(const ControlProblem &problem,
                                     std::shared_ptr<const Mesh> mesh,
                                     const OperatorSplitting &splitting,
                                     const DiffusionBudget &budget, const TimeGrid &grid,
                                     Index control, const SolverOptions &options = {});

// CSV dumps, 17 significant digits.
void write_solution_csv(std::ostream &out, const DiscreteSolution &solution);
void write_policy_csv(std::ostream &out, const PolicyIterationReport &report);
void write_report_csv(std::ostream &out, const PolicyIterationReport &report);

} // namespace hjbfem

#endif
