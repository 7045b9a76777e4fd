#include "hjbfem/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "hjbfem/errors.hpp"
#include "local_matrices.hpp"

namespace hjbfem {

namespace {

using Triplet = Eigen::Triplet<double, Index>;

constexpr double kRelativeTolerance = 1e-12;

struct PartFields {
    const Eigen::VectorXd &diffusion;
    const VectorField &drift;
    const ScalarField &reaction;

    bool vanishes() const {
        return drift.is_zero() && reaction.is_zero() && diffusion.isZero(0.0);
    }
};

SparseMatrix assemble_part(const Mesh &mesh, const PartFields &part) {
    const Index n = mesh.interior_count();
    SparseMatrix m(n, mesh.node_count());
    if (part.vanishes())
        return m;
    std::vector<Triplet> triplets;
    for (Index row = 0; row < n; ++row) {
        const double scale = 1.0 / mesh.hat_l1_norm(row);
        const double a = part.diffusion[row];
        for (Index e : mesh.patch(row)) {
            const int local = mesh.local_index(e, row);
            const auto lower = detail::lower_order_local(mesh, e, part.drift, part.reaction);
            const auto stiff = detail::stiffness_local(mesh, e);
            for (int j = 0; j < mesh.vertices_per_element(); ++j) {
                const double value = a * stiff[local][j] + lower[local][j];
                if (value != 0.0)
                    triplets.emplace_back(row, mesh.element(e).vertices[j], value * scale);
            }
        }
    }
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

} // namespace

bool DiscreteOperatorSet::is_explicit() const {
    return std::all_of(controls.begin(), controls.end(),
                       [](const ControlOperators &c) { return c.implicit_part.nonZeros() == 0; });
}

DiscreteOperatorSet assemble(const Mesh &mesh, const OperatorSplitting &splitting,
                             const DiffusionBudget &budget) {
    if (budget.mesh_id != mesh.id() || budget.interior_count != mesh.interior_count())
        throw ConfigurationError("diffusion budget does not belong to this mesh");
    if (budget.controls.size() != splitting.controls.size())
        throw ConfigurationError("diffusion budget and splitting disagree on the control count");

    DiscreteOperatorSet ops;
    ops.mesh_id = mesh.id();
    ops.interior_count = mesh.interior_count();
    ops.node_count = mesh.node_count();
    ops.labels = splitting.labels;
    for (std::size_t k = 0; k < splitting.controls.size(); ++k) {
        const auto &split = splitting.controls[k];
        const auto &diff = budget.controls[k];
        ControlOperators c;
        c.explicit_part = assemble_part(
            mesh, {diff.diffusion_explicit, split.drift_explicit, split.reaction_explicit});
        c.implicit_part = assemble_part(
            mesh, {diff.diffusion_implicit, split.drift_implicit, split.reaction_implicit});
        c.source = Eigen::VectorXd::Zero(mesh.interior_count());
        for (Index row = 0; row < mesh.interior_count(); ++row) {
            double value = 0.0;
            for (Index e : mesh.patch(row))
                value += detail::load_local(mesh, e, split.cost)[mesh.local_index(e, row)];
            c.source[row] = value / mesh.hat_l1_norm(row);
        }
        ops.controls.push_back(std::move(c));
    }
    return ops;
}

Eigen::VectorXd apply(const DiscreteOperatorSet &ops, Index control, OperatorPart part,
                      const Eigen::VectorXd &w) {
    if (control < 0 || control >= ops.control_count())
        throw ConfigurationError("control index out of range");
    if (w.size() != ops.node_count)
        throw ConfigurationError("vector length does not match the node count");
    const auto &c = ops.controls[static_cast<std::size_t>(control)];
    return (part == OperatorPart::explicit_part ? c.explicit_part : c.implicit_part) * w;
}

SparseMatrix interior_block(const SparseMatrix &m, Index interior_count) {
    return m.leftCols(interior_count);
}

bool MonotonicityReport::admissible() const {
    for (const auto &c : controls)
        if (!c.explicit_offdiag_ok || !c.lmp_ok || !c.mmatrix_ok)
            return false;
    return h <= max_stable_h * (1.0 + kRelativeTolerance);
}

std::string MonotonicityReport::describe_failure() const {
    std::ostringstream msg;
    msg.precision(17);
    for (std::size_t k = 0; k < controls.size(); ++k) {
        const auto &c = controls[k];
        const std::string name = k < labels.size() ? labels[k] : std::to_string(k);
        if (!c.explicit_offdiag_ok)
            msg << "control " << name << ": explicit operator has positive off-diagonal entry "
                << c.bad_value << " at row " << c.bad_row << ", column " << c.bad_column;
        else if (!c.lmp_ok)
            msg << "control " << name << ": implicit operator violates the local monotonicity "
                << "criterion at row " << c.bad_row << " (column " << c.bad_column
                << ", value " << c.bad_value << ")";
        else if (!c.mmatrix_ok)
            msg << "control " << name << ": h I + Id is not a strictly diagonally dominant "
                << "M-matrix at row " << c.bad_row;
        else
            continue;
        return msg.str();
    }
    if (!(h <= max_stable_h * (1.0 + kRelativeTolerance))) {
        msg << "time step " << h << " exceeds the explicit step restriction " << max_stable_h;
        return msg.str();
    }
    return {};
}

MonotonicityReport certify_monotonicity(const DiscreteOperatorSet &ops, double h) {
    if (!(h > 0.0))
        throw ConfigurationError("time step must be positive");
    MonotonicityReport report;
    report.h = h;
    report.labels = ops.labels;
    const Index n = ops.interior_count;
    for (const auto &c : ops.controls) {
        ControlMonotonicity cm;
        auto flag = [&cm](Index row, Index col, double value) {
            if (cm.bad_row < 0) {
                cm.bad_row = row;
                cm.bad_column = col;
                cm.bad_value = value;
            }
        };

        const SparseMatrix &e = c.explicit_part;
        for (Index row = 0; row < n; ++row) {
            double scale = 0.0, diag = 0.0;
            for (SparseMatrix::InnerIterator it(e, row); it; ++it)
                scale = std::max(scale, std::abs(it.value()));
            const double tol = kRelativeTolerance * scale;
            for (SparseMatrix::InnerIterator it(e, row); it; ++it) {
                if (it.col() == row)
                    diag = it.value();
                else if (it.value() > tol) {
                    cm.explicit_offdiag_ok = false;
                    flag(row, it.col(), it.value());
                }
            }
            if (diag > tol)
                cm.max_stable_h = std::min(cm.max_stable_h, 1.0 / diag);
        }

        const SparseMatrix &im = c.implicit_part;
        for (Index row = 0; row < n; ++row) {
            double scale = 0.0, row_sum = 0.0, diag = 0.0, off_interior = 0.0;
            for (SparseMatrix::InnerIterator it(im, row); it; ++it)
                scale = std::max(scale, std::abs(it.value()));
            const double tol = kRelativeTolerance * scale;
            for (SparseMatrix::InnerIterator it(im, row); it; ++it) {
                row_sum += it.value();
                if (it.col() == row) {
                    diag = it.value();
                    continue;
                }
                if (it.value() > tol) {
                    cm.lmp_ok = false;
                    flag(row, it.col(), it.value());
                }
                if (it.col() < n)
                    off_interior += std::abs(it.value());
            }
            if (row_sum < -tol) {
                cm.lmp_ok = false;
                flag(row, row, row_sum);
            }
            // Row of h I + Id restricted to interior columns.
            if (!(1.0 + h * diag - h * off_interior > 0.0)) {
                cm.mmatrix_ok = false;
                flag(row, row, 1.0 + h * diag - h * off_interior);
            }
        }
        if (!cm.lmp_ok)
            cm.mmatrix_ok = false;
        report.max_stable_h = std::min(report.max_stable_h, cm.max_stable_h);
        report.controls.push_back(cm);
    }
    return report;
}

void write_matrix_coo(std::ostream &out, const SparseMatrix &m) {
    const auto old = out.precision(17);
    for (Index row = 0; row < m.outerSize(); ++row)
        for (SparseMatrix::InnerIterator it(m, row); it; ++it)
            out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    out.precision(old);
}

} // namespace hjbfem
