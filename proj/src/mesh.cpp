#include "hjbfem/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "hjbfem/errors.hpp"

namespace hjbfem {

namespace {

std::uint64_t next_mesh_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

Element make_element(int dimension, const std::vector<Point> &nodes,
                     const std::array<Index, 3> &v) {
    Element el;
    el.vertices = v;
    const int nv = dimension + 1;
    el.centroid.setZero();
    for (int k = 0; k < nv; ++k)
        el.centroid += nodes[static_cast<std::size_t>(v[k])];
    el.centroid /= nv;
    for (int a = 0; a < nv; ++a)
        for (int b = a + 1; b < nv; ++b)
            el.diameter = std::max(
                el.diameter, (nodes[static_cast<std::size_t>(v[a])] -
                              nodes[static_cast<std::size_t>(v[b])]).norm());

    if (dimension == 1) {
        const double length = nodes[static_cast<std::size_t>(v[1])].x() -
                              nodes[static_cast<std::size_t>(v[0])].x();
        el.volume = std::abs(length);
        if (!(el.volume > 0.0))
            throw ConfigurationError("degenerate interval element");
        el.gradients[0] = Point(-1.0 / length, 0.0);
        el.gradients[1] = Point(1.0 / length, 0.0);
        el.gradients[2] = Point::Zero();
        return el;
    }

    const Point &p0 = nodes[static_cast<std::size_t>(v[0])];
    const Point e1 = nodes[static_cast<std::size_t>(v[1])] - p0;
    const Point e2 = nodes[static_cast<std::size_t>(v[2])] - p0;
    const double det = e1.x() * e2.y() - e1.y() * e2.x();
    el.volume = 0.5 * std::abs(det);
    if (!(el.volume > 1e-14 * el.diameter * el.diameter))
        throw ConfigurationError("degenerate triangle element");
    // Rows of the inverse Jacobian are the gradients of the barycentric
    // coordinates of vertices 1 and 2.
    el.gradients[1] = Point(e2.y(), -e2.x()) / det;
    el.gradients[2] = Point(-e1.y(), e1.x()) / det;
    el.gradients[0] = -(el.gradients[1] + el.gradients[2]);
    return el;
}

} // namespace

Mesh Mesh::from_simplices(int dimension, std::vector<Point> nodes,
                          const std::vector<std::array<Index, 3>> &simplices) {
    if (dimension != 1 && dimension != 2)
        throw ConfigurationError("mesh dimension must be 1 or 2");
    if (simplices.empty())
        throw ConfigurationError("mesh has no elements");
    const Index n = static_cast<Index>(nodes.size());
    const int nv = dimension + 1;

    std::vector<int> use_count(nodes.size(), 0);
    for (const auto &s : simplices) {
        for (int k = 0; k < nv; ++k) {
            if (s[k] < 0 || s[k] >= n)
                throw ConfigurationError("element references a node out of range");
            ++use_count[static_cast<std::size_t>(s[k])];
        }
        for (int a = 0; a < nv; ++a)
            for (int b = a + 1; b < nv; ++b)
                if (s[a] == s[b])
                    throw ConfigurationError("element repeats a vertex");
    }
    if (std::find(use_count.begin(), use_count.end(), 0) != use_count.end())
        throw ConfigurationError("mesh contains a node that belongs to no element");

    // Boundary facets: vertices (1D) or edges (2D) owned by a single element.
    std::vector<char> on_boundary(nodes.size(), 0);
    if (dimension == 1) {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            on_boundary[i] = use_count[i] == 1;
    } else {
        std::map<std::pair<Index, Index>, int> edges;
        for (const auto &s : simplices)
            for (int a = 0; a < 3; ++a) {
                Index i = s[a], j = s[(a + 1) % 3];
                if (i > j)
                    std::swap(i, j);
                ++edges[{i, j}];
            }
        for (const auto &[edge, count] : edges)
            if (count == 1) {
                on_boundary[static_cast<std::size_t>(edge.first)] = 1;
                on_boundary[static_cast<std::size_t>(edge.second)] = 1;
            }
    }

    std::vector<Index> new_index(nodes.size());
    Index next = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (!on_boundary[i])
            new_index[i] = next++;
    const Index interior = next;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (on_boundary[i])
            new_index[i] = next++;

    Mesh mesh;
    mesh.dimension_ = dimension;
    mesh.interior_count_ = interior;
    mesh.nodes_.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        Point p = nodes[i];
        if (dimension == 1)
            p.y() = 0.0;
        mesh.nodes_[static_cast<std::size_t>(new_index[i])] = p;
    }

    mesh.elements_.reserve(simplices.size());
    for (const auto &s : simplices) {
        std::array<Index, 3> v{0, 0, 0};
        for (int k = 0; k < nv; ++k)
            v[k] = new_index[static_cast<std::size_t>(s[k])];
        mesh.elements_.push_back(make_element(dimension, mesh.nodes_, v));
        mesh.mesh_size_ = std::max(mesh.mesh_size_, mesh.elements_.back().diameter);
    }

    mesh.patch_offsets_.assign(nodes.size() + 1, 0);
    for (const auto &el : mesh.elements_)
        for (int k = 0; k < nv; ++k)
            ++mesh.patch_offsets_[static_cast<std::size_t>(el.vertices[k]) + 1];
    for (std::size_t i = 0; i < nodes.size(); ++i)
        mesh.patch_offsets_[i + 1] += mesh.patch_offsets_[i];
    mesh.patch_elements_.resize(static_cast<std::size_t>(mesh.patch_offsets_.back()));
    std::vector<Index> fill(mesh.patch_offsets_.begin(), mesh.patch_offsets_.end() - 1);
    for (Index e = 0; e < mesh.element_count(); ++e)
        for (int k = 0; k < nv; ++k) {
            const auto node = static_cast<std::size_t>(mesh.elements_[static_cast<std::size_t>(e)].vertices[k]);
            mesh.patch_elements_[static_cast<std::size_t>(fill[node]++)] = e;
        }

    mesh.hat_norms_.assign(nodes.size(), 0.0);
    for (const auto &el : mesh.elements_)
        for (int k = 0; k < nv; ++k)
            mesh.hat_norms_[static_cast<std::size_t>(el.vertices[k])] += el.volume / nv;

    mesh.id_ = next_mesh_id();
    return mesh;
}

std::span<const Index> Mesh::patch(Index node) const {
    const auto b = static_cast<std::size_t>(patch_offsets_[static_cast<std::size_t>(node)]);
    const auto e = static_cast<std::size_t>(patch_offsets_[static_cast<std::size_t>(node) + 1]);
    return std::span<const Index>(patch_elements_).subspan(b, e - b);
}

int Mesh::local_index(Index e, Index node) const {
    const Element &el = element(e);
    for (int k = 0; k < vertices_per_element(); ++k)
        if (el.vertices[k] == node)
            return k;
    return -1;
}

std::optional<MeshPattern> parse_mesh_pattern(const std::string &name) {
    if (name == "consistent")
        return MeshPattern::consistent;
    if (name == "inconsistent")
        return MeshPattern::inconsistent;
    if (name == "equilateral")
        return MeshPattern::equilateral;
    return std::nullopt;
}

std::string to_string(MeshPattern pattern) {
    switch (pattern) {
    case MeshPattern::consistent:
        return "consistent";
    case MeshPattern::inconsistent:
        return "inconsistent";
    case MeshPattern::equilateral:
        return "equilateral";
    }
    return "unknown";
}

Mesh build_interval_mesh(double a, double b, Index n_elements) {
    if (!(a < b))
        throw ConfigurationError("interval mesh needs a < b");
    if (n_elements < 2)
        throw ConfigurationError("interval mesh needs at least two elements");
    std::vector<Point> nodes;
    nodes.reserve(static_cast<std::size_t>(n_elements + 1));
    const double dx = (b - a) / static_cast<double>(n_elements);
    for (Index i = 0; i <= n_elements; ++i)
        nodes.emplace_back(i == n_elements ? b : a + static_cast<double>(i) * dx, 0.0);
    std::vector<std::array<Index, 3>> elements;
    for (Index i = 0; i < n_elements; ++i)
        elements.push_back({i, i + 1, 0});
    return Mesh::from_simplices(1, std::move(nodes), elements);
}

namespace {

Mesh build_square_pattern(const Rectangle &rect, Index nx, Index ny, bool criss_cross) {
    const double hx = (rect.x1 - rect.x0) / static_cast<double>(nx);
    const double hy = (rect.y1 - rect.y0) / static_cast<double>(ny);
    std::vector<Point> nodes;
    for (Index j = 0; j <= ny; ++j)
        for (Index i = 0; i <= nx; ++i)
            nodes.emplace_back(rect.x0 + static_cast<double>(i) * hx,
                               rect.y0 + static_cast<double>(j) * hy);
    auto id = [nx](Index i, Index j) { return j * (nx + 1) + i; };
    std::vector<std::array<Index, 3>> elements;
    for (Index j = 0; j < ny; ++j)
        for (Index i = 0; i < nx; ++i) {
            const Index p00 = id(i, j), p10 = id(i + 1, j), p01 = id(i, j + 1),
                        p11 = id(i + 1, j + 1);
            // Cells with even i+j take the anti-diagonal in the criss-cross
            // pattern, which leaves nodes with even i+j free of diagonals.
            if (criss_cross && (i + j) % 2 == 0) {
                elements.push_back({p00, p10, p01});
                elements.push_back({p10, p11, p01});
            } else {
                elements.push_back({p00, p10, p11});
                elements.push_back({p00, p11, p01});
            }
        }
    return Mesh::from_simplices(2, std::move(nodes), elements);
}

Mesh build_equilateral(const Rectangle &rect, Index nx, Index ny) {
    const double side = (rect.x1 - rect.x0) / static_cast<double>(nx);
    const double height = side * std::sqrt(3.0) / 2.0;
    const double slack = 1e-12 * (rect.y1 - rect.y0);
    Index strips = 0;
    while (strips < ny && rect.y0 + static_cast<double>(strips + 1) * height <= rect.y1 + slack)
        ++strips;
    if (strips < 1)
        throw ConfigurationError("rectangle too low for a single row of equilateral triangles");

    std::vector<Point> nodes;
    std::vector<Index> row_start;
    for (Index j = 0; j <= strips; ++j) {
        row_start.push_back(static_cast<Index>(nodes.size()));
        const bool odd = j % 2 == 1;
        const Index count = odd ? nx : nx + 1;
        for (Index i = 0; i < count; ++i)
            nodes.emplace_back(rect.x0 + (static_cast<double>(i) + (odd ? 0.5 : 0.0)) * side,
                               rect.y0 + static_cast<double>(j) * height);
    }
    std::vector<std::array<Index, 3>> elements;
    for (Index j = 0; j < strips; ++j) {
        const Index lo = row_start[static_cast<std::size_t>(j)];
        const Index hi = row_start[static_cast<std::size_t>(j + 1)];
        if (j % 2 == 0) {
            for (Index i = 0; i < nx; ++i)
                elements.push_back({lo + i, lo + i + 1, hi + i});
            for (Index i = 0; i + 1 < nx; ++i)
                elements.push_back({hi + i, lo + i + 1, hi + i + 1});
        } else {
            for (Index i = 0; i < nx; ++i)
                elements.push_back({hi + i, lo + i, hi + i + 1});
            for (Index i = 0; i + 1 < nx; ++i)
                elements.push_back({lo + i, lo + i + 1, hi + i + 1});
        }
    }
    return Mesh::from_simplices(2, std::move(nodes), elements);
}

} // namespace

Mesh build_patterned_rectangle_mesh(const Rectangle &rect, Index nx, Index ny,
                                    MeshPattern pattern) {
    if (!(rect.x0 < rect.x1) || !(rect.y0 < rect.y1))
        throw ConfigurationError("invalid rectangle");
    if (nx < 2 || ny < 2)
        throw ConfigurationError("rectangle mesh needs nx, ny >= 2");
    switch (pattern) {
    case MeshPattern::consistent:
        return build_square_pattern(rect, nx, ny, false);
    case MeshPattern::inconsistent:
        return build_square_pattern(rect, nx, ny, true);
    case MeshPattern::equilateral:
        return build_equilateral(rect, nx, ny);
    }
    throw ConfigurationError("unsupported mesh pattern");
}

AcutenessCertificate acuteness_certificate(const Mesh &mesh) {
    AcutenessCertificate cert;
    cert.sin_theta = std::numeric_limits<double>::infinity();
    const int nv = mesh.vertices_per_element();
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Element &el = mesh.element(e);
        for (int a = 0; a < nv; ++a)
            for (int b = a + 1; b < nv; ++b) {
                const Point &ga = el.gradients[a];
                const Point &gb = el.gradients[b];
                const double s = -ga.dot(gb) / (ga.norm() * gb.norm());
                if (s < cert.sin_theta) {
                    cert.sin_theta = s;
                    cert.worst_element = e;
                    cert.worst_node_a = el.vertices[a];
                    cert.worst_node_b = el.vertices[b];
                }
            }
    }
    cert.sin_theta = std::clamp(cert.sin_theta, -1.0, 1.0);
    // Right angles come out as O(1e-17) noise; treat them as not acute.
    cert.strictly_acute = cert.sin_theta > 1e-12;
    return cert;
}

double hat_l1_norm(const Mesh &mesh, Index node) {
    if (node < 0 || node >= mesh.node_count())
        throw ConfigurationError("node index out of range");
    return mesh.hat_l1_norm(node);
}

double mesh_size(const Mesh &mesh) { return mesh.mesh_size(); }

std::array<double, 3> barycentric(const Mesh &mesh, Index e, const Point &x) {
    const Element &el = mesh.element(e);
    const int nv = mesh.vertices_per_element();
    std::array<double, 3> w{0.0, 0.0, 0.0};
    Point d = x - el.centroid;
    if (mesh.dimension() == 1)
        d.y() = 0.0;
    for (int k = 0; k < nv; ++k)
        w[k] = 1.0 / nv + el.gradients[k].dot(d);
    return w;
}

PointLocator::PointLocator(const Mesh &mesh) : mesh_(&mesh) {
    Point lo = mesh.node(0), hi = mesh.node(0);
    for (const Point &p : mesh.nodes()) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double pad = 1e-9 * std::max(1.0, (hi - lo).norm());
    lo.array() -= pad;
    hi.array() += pad;
    const auto cells = std::max<Index>(1, static_cast<Index>(std::sqrt(static_cast<double>(mesh.element_count()))));
    nx_ = mesh.dimension() == 1 ? mesh.element_count() : cells;
    ny_ = mesh.dimension() == 1 ? 1 : cells;
    lower_ = lo;
    cell_ = Point((hi.x() - lo.x()) / static_cast<double>(nx_),
                  std::max(hi.y() - lo.y(), pad) / static_cast<double>(ny_));

    auto cell_of = [this](const Point &p) {
        const auto i = std::clamp<Index>(static_cast<Index>((p.x() - lower_.x()) / cell_.x()), 0, nx_ - 1);
        const auto j = std::clamp<Index>(static_cast<Index>((p.y() - lower_.y()) / cell_.y()), 0, ny_ - 1);
        return std::pair<Index, Index>{i, j};
    };
    std::vector<std::vector<Index>> buckets(static_cast<std::size_t>(nx_ * ny_));
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Element &el = mesh.element(e);
        Point elo = mesh.node(el.vertices[0]), ehi = elo;
        for (int k = 1; k < mesh.vertices_per_element(); ++k) {
            elo = elo.cwiseMin(mesh.node(el.vertices[k]));
            ehi = ehi.cwiseMax(mesh.node(el.vertices[k]));
        }
        const auto [i0, j0] = cell_of(elo);
        const auto [i1, j1] = cell_of(ehi);
        for (Index j = j0; j <= j1; ++j)
            for (Index i = i0; i <= i1; ++i)
                buckets[static_cast<std::size_t>(j * nx_ + i)].push_back(e);
    }
    offsets_.assign(buckets.size() + 1, 0);
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        offsets_[b + 1] = offsets_[b] + static_cast<Index>(buckets[b].size());
        items_.insert(items_.end(), buckets[b].begin(), buckets[b].end());
    }
}

std::optional<PointLocator::Hit> PointLocator::locate(const Point &x) const {
    Point p = x;
    if (mesh_->dimension() == 1)
        p.y() = lower_.y() + 0.5 * cell_.y();
    const double fi = (p.x() - lower_.x()) / cell_.x();
    const double fj = (p.y() - lower_.y()) / cell_.y();
    if (fi < 0.0 || fj < 0.0 || fi > static_cast<double>(nx_) || fj > static_cast<double>(ny_))
        return std::nullopt;
    const auto i = std::min(static_cast<Index>(fi), nx_ - 1);
    const auto j = std::min(static_cast<Index>(fj), ny_ - 1);
    const auto bucket = static_cast<std::size_t>(j * nx_ + i);
    constexpr double tol = 1e-10;
    std::optional<Hit> best;
    double best_min = -std::numeric_limits<double>::infinity();
    for (Index k = offsets_[bucket]; k < offsets_[bucket + 1]; ++k) {
        const Index e = items_[static_cast<std::size_t>(k)];
        const auto w = barycentric(*mesh_, e, x);
        double wmin = w[0];
        for (int v = 1; v < mesh_->vertices_per_element(); ++v)
            wmin = std::min(wmin, w[v]);
        if (wmin >= -tol && wmin > best_min) {
            best_min = wmin;
            best = Hit{e, w};
        }
    }
    return best;
}

void write_mesh(std::ostream &out, const Mesh &mesh) {
    const auto old_precision = out.precision(17);
    out << mesh.dimension() << ' ' << mesh.node_count() << ' ' << mesh.element_count() << '\n';
    for (Index i = 0; i < mesh.node_count(); ++i) {
        out << mesh.node(i).x();
        if (mesh.dimension() == 2)
            out << ' ' << mesh.node(i).y();
        out << ' ' << (mesh.is_interior(i) ? 0 : 1) << '\n';
    }
    for (const Element &el : mesh.elements()) {
        for (int k = 0; k < mesh.vertices_per_element(); ++k)
            out << (k ? " " : "") << el.vertices[k] + 1;
        out << '\n';
    }
    out.precision(old_precision);
}

void write_mesh(const std::string &path, const Mesh &mesh) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open mesh file for writing: " + path);
    write_mesh(out, mesh);
    if (!out)
        throw IoError("failed writing mesh file: " + path);
}

Mesh read_mesh(std::istream &in) {
    int dimension = 0;
    Index n_nodes = 0, n_elements = 0;
    if (!(in >> dimension >> n_nodes >> n_elements))
        throw ParseError("mesh header must read 'dim n_nodes n_elements'");
    if ((dimension != 1 && dimension != 2) || n_nodes < 2 || n_elements < 1)
        throw ParseError("mesh header has invalid sizes");
    std::vector<Point> nodes(static_cast<std::size_t>(n_nodes), Point::Zero());
    for (auto &p : nodes) {
        int flag = 0;
        if (!(in >> p.x()))
            throw ParseError("truncated node list");
        if (dimension == 2 && !(in >> p.y()))
            throw ParseError("truncated node list");
        if (!(in >> flag) || (flag != 0 && flag != 1))
            throw ParseError("node boundary flag must be 0 or 1");
    }
    std::vector<std::array<Index, 3>> elements(static_cast<std::size_t>(n_elements), {0, 0, 0});
    for (auto &el : elements)
        for (int k = 0; k <= dimension; ++k) {
            if (!(in >> el[k]))
                throw ParseError("truncated element list");
            if (el[k] < 1 || el[k] > n_nodes)
                throw ParseError("element node index out of range");
            --el[k];
        }
    try {
        return Mesh::from_simplices(dimension, std::move(nodes), elements);
    } catch (const ConfigurationError &e) {
        throw ParseError(std::string("invalid mesh: ") + e.what());
    }
}

Mesh read_mesh(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open mesh file: " + path);
    return read_mesh(in);
}

} // namespace hjbfem
