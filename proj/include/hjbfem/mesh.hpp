#ifndef HJBFEM_MESH_HPP
#define HJBFEM_MESH_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hjbfem {

using Index = Eigen::Index;

/// Spatial point. One-dimensional meshes keep the second coordinate at zero,
/// so gradients and coordinates share one representation in both dimensions.
using Point = Eigen::Vector2d;

/// A simplex (interval or triangle) with its P1 geometry precomputed.
struct Element {
    std::array<Index, 3> vertices{};
    /// Constant gradient of the hat function of each vertex on this element.
    std::array<Point, 3> gradients{};
    Point centroid = Point::Zero();
    double volume = 0.0;
    double diameter = 0.0;
};

/**
 * Immutable simplicial mesh in one or two space dimensions.
 *
 * Nodes are ordered interior first: indices [0, interior_count()) are the
 * nodes strictly inside the domain, the remaining ones lie on the boundary.
 * A node is a boundary node iff it belongs to a facet that is shared by
 * exactly one element.
 */
class Mesh {
public:
    /// Builds a mesh from raw simplices. Nodes are renumbered interior-first;
    /// the relative order inside each group is preserved.
    static Mesh from_simplices(int dimension, std::vector<Point> nodes,
                               const std::vector<std::array<Index, 3>> &simplices);

    int dimension() const { return dimension_; }
    int vertices_per_element() const { return dimension_ + 1; }

    Index node_count() const { return static_cast<Index>(nodes_.size()); }
    Index interior_count() const { return interior_count_; }
    Index element_count() const { return static_cast<Index>(elements_.size()); }

    bool is_interior(Index node) const { return node < interior_count_; }

    const Point &node(Index i) const { return nodes_[static_cast<std::size_t>(i)]; }
    std::span<const Point> nodes() const { return nodes_; }

    const Element &element(Index e) const { return elements_[static_cast<std::size_t>(e)]; }
    std::span<const Element> elements() const { return elements_; }

    /// Elements containing the node.
    std::span<const Index> patch(Index node) const;

    /// Local vertex slot (0..d) of `node` inside element `e`, or -1.
    int local_index(Index e, Index node) const;

    /// Exact L1 norm of the hat function of `node`.
    double hat_l1_norm(Index node) const { return hat_norms_[static_cast<std::size_t>(node)]; }

    /// Largest element diameter.
    double mesh_size() const { return mesh_size_; }

    /// Identifier shared by copies of the same mesh; distinct meshes differ.
    std::uint64_t id() const { return id_; }

private:
    Mesh() = default;

    int dimension_ = 1;
    Index interior_count_ = 0;
    std::vector<Point> nodes_;
    std::vector<Element> elements_;
    std::vector<Index> patch_offsets_;
    std::vector<Index> patch_elements_;
    std::vector<double> hat_norms_;
    double mesh_size_ = 0.0;
    std::uint64_t id_ = 0;
};

struct Rectangle {
    double x0 = 0.0;
    double x1 = 1.0;
    double y0 = 0.0;
    double y1 = 1.0;
};

/// Local connectivity patterns for structured two-dimensional meshes.
///
/// `consistent`: every square cut along the same diagonal; the stiffness
/// matrix reproduces the 5-point stencil.
/// `inconsistent`: criss-cross pattern in which nodes with even i+j have four
/// axis neighbours only (diamond patch of four right triangles).
/// `equilateral`: rows of congruent equilateral triangles, odd rows shifted
/// by half a side; partial triangles at the row ends are dropped.
enum class MeshPattern { consistent, inconsistent, equilateral };

std::optional<MeshPattern> parse_mesh_pattern(const std::string &name);
std::string to_string(MeshPattern pattern);

/// Uniform partition of [a, b] into n_elements intervals.
Mesh build_interval_mesh(double a, double b, Index n_elements);

/// Structured triangulation of `rect`. For the square patterns the rectangle
/// is cut into nx by ny cells. For `equilateral` the side is
/// (rect.x1 - rect.x0) / nx and ny rows of height side*sqrt(3)/2 are stacked
/// from rect.y0; rows leaving the rectangle are discarded.
Mesh build_patterned_rectangle_mesh(const Rectangle &rect, Index nx, Index ny,
                                    MeshPattern pattern);

/// Strict acuteness measure: the minimum over elements and distinct vertex
/// pairs (l, m) of -grad(phi_l).grad(phi_m) / (|grad phi_l| |grad phi_m|).
struct AcutenessCertificate {
    double sin_theta = 1.0;
    bool strictly_acute = true;
    Index worst_element = -1;
    Index worst_node_a = -1;
    Index worst_node_b = -1;
};

AcutenessCertificate acuteness_certificate(const Mesh &mesh);

/// Sum over the patch of vol(T)/(d+1).
double hat_l1_norm(const Mesh &mesh, Index node);

double mesh_size(const Mesh &mesh);

/// Nodal values of a function evaluated at every node.
template <class F>
Eigen::VectorXd interpolate(const Mesh &mesh, F &&f) {
    Eigen::VectorXd values(mesh.node_count());
    for (Index i = 0; i < mesh.node_count(); ++i)
        values[i] = f(mesh.node(i));
    return values;
}

/// Barycentric coordinates of x with respect to element e (entries beyond
/// d are zero).
std::array<double, 3> barycentric(const Mesh &mesh, Index e, const Point &x);

/// Bucketed point location for P1 evaluation.
class PointLocator {
public:
    explicit PointLocator(const Mesh &mesh);

    struct Hit {
        Index element;
        std::array<double, 3> weights;
    };

    /// Element containing x (closed, with a small relative tolerance).
    std::optional<Hit> locate(const Point &x) const;

private:
    const Mesh *mesh_;
    Point lower_;
    Point cell_;
    Index nx_ = 1;
    Index ny_ = 1;
    std::vector<Index> offsets_;
    std::vector<Index> items_;
};

// Plain-text mesh format:
//   dim n_nodes n_elements
//   x [y] boundary_flag        (one line per node)
//   i j [k]                    (one line per element, 1-based)
void write_mesh(std::ostream &out, const Mesh &mesh);
void write_mesh(const std::string &path, const Mesh &mesh);
Mesh read_mesh(std::istream &in);
Mesh read_mesh(const std::string &path);

} // namespace hjbfem

#endif
