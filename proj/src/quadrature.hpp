#ifndef HJBFEM_QUADRATURE_HPP
#define HJBFEM_QUADRATURE_HPP

// Gauss rules on intervals and collapsed (Duffy) Gauss rules on triangles.

#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "hjbfem/mesh.hpp"

namespace hjbfem::detail {

struct QuadraturePoint {
    Point x;
    double weight;
};

/// N-point Gauss-Legendre nodes and weights on [0, 1].
template <unsigned N>
std::vector<std::pair<double, double>> gauss_unit() {
    using Rule = boost::math::quadrature::gauss<double, N>;
    const auto &abscissa = Rule::abscissa();
    const auto &weights = Rule::weights();
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
        const double a = abscissa[i];
        const double w = weights[i];
        if (a == 0.0) {
            out.emplace_back(0.5, 0.5 * w);
        } else {
            out.emplace_back(0.5 * (1.0 - a), 0.5 * w);
            out.emplace_back(0.5 * (1.0 + a), 0.5 * w);
        }
    }
    return out;
}

/// Quadrature on element e: N Gauss points on intervals, N x N collapsed
/// Gauss points on triangles (exact for polynomials of degree 2N - 2).
/// All points lie strictly inside the element.
template <unsigned N>
std::vector<QuadraturePoint> element_rule(const Mesh &mesh, Index e) {
    const Element &el = mesh.element(e);
    const Point &p0 = mesh.node(el.vertices[0]);
    const Point &p1 = mesh.node(el.vertices[1]);
    const auto g = gauss_unit<N>();
    std::vector<QuadraturePoint> out;
    if (mesh.dimension() == 1) {
        for (const auto &[s, w] : g)
            out.push_back({p0 + s * (p1 - p0), w * el.volume});
        return out;
    }
    const Point &p2 = mesh.node(el.vertices[2]);
    for (const auto &[xi, wx] : g)
        for (const auto &[eta, wy] : g) {
            const double l1 = xi * (1.0 - eta);
            const double l2 = xi * eta;
            out.push_back({p0 + l1 * (p1 - p0) + l2 * (p2 - p0), 2.0 * el.volume * wx * wy * xi});
        }
    return out;
}

} // namespace hjbfem::detail

#endif
