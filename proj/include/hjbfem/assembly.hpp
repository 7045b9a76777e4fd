#ifndef HJBFEM_ASSEMBLY_HPP
#define HJBFEM_ASSEMBLY_HPP

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "hjbfem/control_problem.hpp"
#include "hjbfem/mesh.hpp"

namespace hjbfem {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, Index>;

/// Discrete operators of one control. Rows are interior nodes; columns run
/// over all nodes, boundary columns last. Row l is tested against the
/// L1-normalized hat function of node l.
struct ControlOperators {
    SparseMatrix explicit_part;
    SparseMatrix implicit_part;
    Eigen::VectorXd source;
};

struct DiscreteOperatorSet {
    std::uint64_t mesh_id = 0;
    Index interior_count = 0;
    Index node_count = 0;
    std::vector<std::string> labels;
    std::vector<ControlOperators> controls;

    Index control_count() const { return static_cast<Index>(controls.size()); }
    /// True when every implicit part is identically zero.
    bool is_explicit() const;
};

enum class OperatorPart { explicit_part, implicit_part };

/// Row l of the explicit part realizes
///   a_expl(y_l) <grad w, grad phi_hat_l> + <b_expl.grad w + c_expl w, phi_hat_l>,
/// and analogously for the implicit part; source_l = <d, phi_hat_l>.
/// Stiffness integrals are exact; b, c and d enter through their P1
/// interpolants on each element, integrated exactly.
DiscreteOperatorSet assemble(const Mesh &mesh, const OperatorSplitting &splitting,
                             const DiffusionBudget &budget);

/// Interior-row product of the selected part with a full nodal vector.
Eigen::VectorXd apply(const DiscreteOperatorSet &ops, Index control, OperatorPart part,
                      const Eigen::VectorXd &w);

struct ControlMonotonicity {
    bool explicit_offdiag_ok = true;
    bool lmp_ok = true;
    bool mmatrix_ok = true;
    /// Largest h with h E - Id entrywise non-positive (infinity if E has no
    /// positive diagonal).
    double max_stable_h = std::numeric_limits<double>::infinity();
    /// First offending (row, column) for diagnostics, -1 when none.
    Index bad_row = -1;
    Index bad_column = -1;
    double bad_value = 0.0;
};

struct MonotonicityReport {
    double h = 0.0;
    std::vector<ControlMonotonicity> controls;
    std::vector<std::string> labels;
    double max_stable_h = std::numeric_limits<double>::infinity();

    /// All controls certified and h within the explicit step restriction.
    bool admissible() const;
    /// Human-readable reason for the first failure, empty when admissible.
    std::string describe_failure() const;
};

/// Checks the sufficient matrix criteria: non-positive off-diagonals of E;
/// non-positive off-diagonals and non-negative row sums of I (local
/// monotonicity); strict diagonal dominance of h I + Id on the interior
/// block; and the step restriction for h E - Id. Entries are compared with a
/// relative tolerance of 1e-12 of the row scale.
MonotonicityReport certify_monotonicity(const DiscreteOperatorSet &ops, double h);

/// Interior-column block (N x N) of a part.
SparseMatrix interior_block(const SparseMatrix &m, Index interior_count);

/// One line per stored entry: "row col value", 0-based, 17 significant digits.
void write_matrix_coo(std::ostream &out, const SparseMatrix &m);

} // namespace hjbfem

#endif
