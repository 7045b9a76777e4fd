#ifndef HJBFEM_LOCAL_MATRICES_HPP
#define HJBFEM_LOCAL_MATRICES_HPP

// Element kernels shared by the diffusion budget and the assembly. Rows are
// test functions, columns trial functions; nothing here is normalized.

#include <array>

#include "hjbfem/control_problem.hpp"
#include "hjbfem/mesh.hpp"

namespace hjbfem::detail {

using Local = std::array<std::array<double, 3>, 3>;

/// Integral of lambda_a lambda_b over a simplex of unit volume.
inline double pair_mass(int dim, int a, int b) {
    return (a == b ? 2.0 : 1.0) / ((dim + 1) * (dim + 2));
}

/// Integral of lambda_k lambda_a lambda_b over a simplex of unit volume:
/// d! (product of multiplicity factorials) / (d + 3)!.
inline double triple_mass(int dim, int k, int a, int b) {
    double multiplicity = 1.0;
    if (k == a && a == b)
        multiplicity = 6.0;
    else if (k == a || a == b || k == b)
        multiplicity = 2.0;
    const double dfact = dim == 1 ? 1.0 : 2.0;
    const double denom = dim == 1 ? 24.0 : 120.0;
    return dfact * multiplicity / denom;
}

inline Local stiffness_local(const Mesh &mesh, Index e) {
    const Element &el = mesh.element(e);
    const int nv = mesh.vertices_per_element();
    Local k{};
    for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b)
            k[a][b] = el.volume * el.gradients[b].dot(el.gradients[a]);
    return k;
}

/// Convection and reaction with coefficients replaced by their P1
/// interpolants on the element, integrated exactly.
inline Local lower_order_local(const Mesh &mesh, Index e, const VectorField &drift,
                               const ScalarField &reaction) {
    const Element &el = mesh.element(e);
    const int nv = mesh.vertices_per_element();
    const int dim = mesh.dimension();
    Local m{};
    const bool has_drift = !drift.is_zero();
    const bool has_reaction = !reaction.is_zero();
    if (!has_drift && !has_reaction)
        return m;
    std::array<Point, 3> b{};
    std::array<double, 3> c{};
    for (int k = 0; k < nv; ++k) {
        const Point &y = mesh.node(el.vertices[k]);
        b[k] = has_drift ? drift(y) : Point::Zero();
        if (dim == 1)
            b[k].y() = 0.0;
        c[k] = has_reaction ? reaction(y) : 0.0;
    }
    for (int a = 0; a < nv; ++a)
        for (int j = 0; j < nv; ++j) {
            double value = 0.0;
            for (int k = 0; k < nv; ++k) {
                value += b[k].dot(el.gradients[j]) * pair_mass(dim, k, a);
                value += c[k] * triple_mass(dim, k, a, j);
            }
            m[a][j] = value * el.volume;
        }
    return m;
}

/// Integral of the P1 interpolant of `f` times lambda_a.
inline std::array<double, 3> load_local(const Mesh &mesh, Index e, const ScalarField &f) {
    const Element &el = mesh.element(e);
    const int nv = mesh.vertices_per_element();
    std::array<double, 3> out{0.0, 0.0, 0.0};
    if (f.is_zero())
        return out;
    std::array<double, 3> values{};
    for (int k = 0; k < nv; ++k)
        values[k] = f(mesh.node(el.vertices[k]));
    for (int a = 0; a < nv; ++a)
        for (int k = 0; k < nv; ++k)
            out[a] += values[k] * pair_mass(mesh.dimension(), k, a) * el.volume;
    return out;
}

/// Vertices followed by the centroid.
inline int sample_points(const Mesh &mesh, Index e, std::array<Point, 4> &points) {
    const Element &el = mesh.element(e);
    const int nv = mesh.vertices_per_element();
    for (int k = 0; k < nv; ++k)
        points[k] = mesh.node(el.vertices[k]);
    points[nv] = el.centroid;
    return nv + 1;
}

} // namespace hjbfem::detail

#endif
