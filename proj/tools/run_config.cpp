#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hjbfem/errors.hpp"
#include "hjbfem/expression.hpp"

namespace hjbfem::cli {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string &s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double to_double(const std::string &section, const std::string &key, const std::string &text) {
    const std::string value = trim(text);
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (value.empty() || used != value.size() || !std::isfinite(out))
        throw ParseError("[" + section + "] " + key + ": expected a number, got '" + value + "'");
    return out;
}

Index to_index(const std::string &section, const std::string &key, const std::string &text) {
    const double v = to_double(section, key, text);
    if (v != std::floor(v) || std::abs(v) > 1e15)
        throw ParseError("[" + section + "] " + key + ": expected an integer, got '" + trim(text) + "'");
    return static_cast<Index>(v);
}

bool to_bool(const std::string &section, const std::string &key, const std::string &text) {
    const std::string v = trim(text);
    if (v == "true" || v == "yes" || v == "on" || v == "1")
        return true;
    if (v == "false" || v == "no" || v == "off" || v == "0")
        return false;
    throw ParseError("[" + section + "] " + key + ": expected a boolean, got '" + v + "'");
}

[[noreturn]] void unknown_key(const std::string &section, const std::string &key) {
    throw ParseError("unknown key '" + key + "' in section [" + section + "]");
}

void parse_problem(const pt::ptree &tree, RunConfig &c) {
    for (const auto &[key, node] : tree) {
        const std::string v = trim(node.data());
        if (key == "name") {
            if (v != "eikonal1d" && v != "diffusion2d" && v != "custom")
                throw ParseError("[problem] name: unknown problem '" + v + "'");
            c.problem = v;
        } else if (key == "controls") {
            c.control_count = static_cast<int>(to_index("problem", key, v));
        } else if (key == "dimension") {
            c.dimension = static_cast<int>(to_index("problem", key, v));
            if (c.dimension != 1 && c.dimension != 2)
                throw ParseError("[problem] dimension must be 1 or 2");
        } else if (key == "final") {
            c.final_data = v;
        } else {
            unknown_key("problem", key);
        }
    }
}

void parse_mesh(const pt::ptree &tree, RunConfig &c) {
    MeshSpec &m = c.mesh;
    for (const auto &[key, node] : tree) {
        const std::string v = trim(node.data());
        if (key == "generator") {
            if (v != "interval" && v != "rectangle" && v != "file")
                throw ParseError("[mesh] generator: unknown generator '" + v + "'");
            m.generator = v;
        } else if (key == "a") {
            m.a = to_double("mesh", key, v);
        } else if (key == "b") {
            m.b = to_double("mesh", key, v);
        } else if (key == "elements") {
            m.elements = to_index("mesh", key, v);
        } else if (key == "x0") {
            m.rect.x0 = to_double("mesh", key, v);
        } else if (key == "x1") {
            m.rect.x1 = to_double("mesh", key, v);
        } else if (key == "y0") {
            m.rect.y0 = to_double("mesh", key, v);
        } else if (key == "y1") {
            m.rect.y1 = to_double("mesh", key, v);
        } else if (key == "nx") {
            m.nx = to_index("mesh", key, v);
        } else if (key == "ny") {
            m.ny = to_index("mesh", key, v);
        } else if (key == "pattern") {
            const auto p = parse_mesh_pattern(v);
            if (!p)
                throw ParseError("[mesh] pattern: unknown pattern '" + v + "'");
            m.pattern = *p;
        } else if (key == "path") {
            m.path = c.base_dir / v;
        } else {
            unknown_key("mesh", key);
        }
    }
    if (m.generator == "file" && m.path.empty())
        throw ParseError("[mesh] generator = file needs a path");
}

void parse_time(const pt::ptree &tree, RunConfig &c) {
    for (const auto &[key, node] : tree) {
        const std::string v = node.data();
        if (key == "T")
            c.horizon = to_double("time", key, v);
        else if (key == "h")
            c.h = to_double("time", key, v);
        else if (key == "cfl")
            c.cfl = to_double("time", key, v);
        else if (key == "steps")
            c.steps = to_index("time", key, v);
        else
            unknown_key("time", key);
    }
    if ((c.h ? 1 : 0) + (c.cfl ? 1 : 0) + (c.steps ? 1 : 0) > 1)
        throw ParseError("[time] give only one of h, cfl, steps");
}

void parse_splitting(const pt::ptree &tree, RunConfig &c) {
    for (const auto &[key, node] : tree) {
        const std::string v = trim(node.data());
        if (key == "mode") {
            const auto mode = parse_splitting_mode(v);
            if (!mode)
                throw ParseError("[splitting] mode: unknown mode '" + v + "'");
            c.mode = *mode;
        } else if (key == "implicit_diffusion") {
            c.shares.diffusion = to_double("splitting", key, v);
        } else if (key == "implicit_drift") {
            c.shares.drift = to_double("splitting", key, v);
        } else if (key == "implicit_reaction") {
            c.shares.reaction = to_double("splitting", key, v);
        } else if (key == "diffusion") {
            if (!parse_diffusion_rule(v))
                to_double("splitting", key, v);
            c.diffusion = v;
        } else if (key == "diffusion_scale") {
            c.diffusion_scale = to_double("splitting", key, v);
            if (c.diffusion_scale < 0.0)
                throw ParseError("[splitting] diffusion_scale must be non-negative");
        } else if (key == "gamma") {
            c.gamma = to_double("splitting", key, v);
        } else {
            unknown_key("splitting", key);
        }
    }
}

void parse_solver(const pt::ptree &tree, RunConfig &c) {
    for (const auto &[key, node] : tree) {
        if (key == "tol")
            c.tol = to_double("solver", key, node.data());
        else if (key == "max_iter")
            c.max_iter = to_index("solver", key, node.data());
        else
            unknown_key("solver", key);
    }
}

void parse_output(const pt::ptree &tree, RunConfig &c) {
    for (const auto &[key, node] : tree) {
        if (key == "directory")
            c.output_dir = c.base_dir / trim(node.data());
        else if (key == "solution")
            c.write_solution = to_bool("output", key, node.data());
        else if (key == "policy")
            c.write_policy = to_bool("output", key, node.data());
        else if (key == "report")
            c.write_report = to_bool("output", key, node.data());
        else if (key == "matrices")
            c.write_matrices = to_bool("output", key, node.data());
        else
            unknown_key("output", key);
    }
}

ControlSpec parse_control(const std::string &label, const pt::ptree &tree) {
    ControlSpec s;
    s.label = label;
    for (const auto &[key, node] : tree) {
        const std::string v = trim(node.data());
        if (key == "diffusion")
            s.diffusion = v;
        else if (key == "drift_x")
            s.drift_x = v;
        else if (key == "drift_y")
            s.drift_y = v;
        else if (key == "reaction")
            s.reaction = v;
        else if (key == "cost")
            s.cost = v;
        else
            unknown_key("control:" + label, key);
    }
    return s;
}

Eigen::VectorXd read_table(const std::filesystem::path &path, Index expected) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open table " + path.string());
    std::vector<double> values;
    std::string token;
    while (in >> token)
        values.push_back(to_double("table", path.string(), token));
    if (static_cast<Index>(values.size()) != expected)
        throw ParseError("table " + path.string() + " has " + std::to_string(values.size()) +
                         " values, expected " + std::to_string(expected));
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
}

} // namespace

RunConfig parse_run_config(std::istream &in, const std::filesystem::path &base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error &e) {
        throw ParseError(std::string("malformed config: ") + e.what());
    }
    RunConfig c;
    c.base_dir = base_dir;
    std::set<std::string> labels;
    for (const auto &[section, node] : tree) {
        if (node.empty() && !node.data().empty())
            throw ParseError("key '" + section + "' outside of any section");
        if (section == "problem")
            parse_problem(node, c);
        else if (section == "mesh")
            parse_mesh(node, c);
        else if (section == "time")
            parse_time(node, c);
        else if (section == "splitting")
            parse_splitting(node, c);
        else if (section == "solver")
            parse_solver(node, c);
        else if (section == "output")
            parse_output(node, c);
        else if (section.rfind("control:", 0) == 0) {
            const std::string label = trim(section.substr(8));
            if (label.empty() || !labels.insert(label).second)
                throw ParseError("control sections need distinct, non-empty labels");
            c.controls.push_back(parse_control(label, node));
        } else
            throw ParseError("unknown section [" + section + "]");
    }
    if (c.problem == "custom" && c.controls.empty())
        throw ParseError("custom problem needs at least one [control:<label>] section");
    if (c.problem != "custom" && !c.controls.empty())
        throw ParseError("[control:...] sections are only allowed for custom problems");
    if (c.problem == "diffusion2d" && c.control_count < 1)
        throw ParseError("[problem] controls must be positive");
    return c;
}

RunConfig load_run_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path.string());
    return parse_run_config(in, path.parent_path());
}

std::shared_ptr<const Mesh> build_mesh(const MeshSpec &spec) {
    if (spec.generator == "interval")
        return std::make_shared<const Mesh>(build_interval_mesh(spec.a, spec.b, spec.elements));
    if (spec.generator == "rectangle")
        return std::make_shared<const Mesh>(
            build_patterned_rectangle_mesh(spec.rect, spec.nx, spec.ny, spec.pattern));
    return std::make_shared<const Mesh>(read_mesh(spec.path.string()));
}

ScalarField make_field(const std::string &text, const std::shared_ptr<const Mesh> &mesh,
                       const std::filesystem::path &base_dir) {
    const std::string t = trim(text);
    if (t.rfind("table:", 0) == 0)
        return nodal_field(mesh, read_table(base_dir / trim(t.substr(6)), mesh->node_count()));
    const Expression e = Expression::parse(t);
    if (e.is_constant())
        return ScalarField::constant(e(0.0, 0.0));
    return ScalarField([e](const Point &p) { return e(p.x(), p.y()); });
}

ControlProblem build_problem(const RunConfig &config, const std::shared_ptr<const Mesh> &mesh) {
    ControlProblem p;
    if (config.problem == "eikonal1d") {
        p = eikonal_problem();
    } else if (config.problem == "diffusion2d") {
        p = diffusion_control_problem(config.control_count);
    } else {
        p.dimension = config.dimension;
        p.final_data = make_field(config.final_data, mesh, config.base_dir);
        for (const auto &spec : config.controls) {
            ControlCoefficients c;
            c.label = spec.label;
            c.diffusion = make_field(spec.diffusion, mesh, config.base_dir);
            const ScalarField bx = make_field(spec.drift_x, mesh, config.base_dir);
            const ScalarField by = make_field(spec.drift_y, mesh, config.base_dir);
            if (bx.constant_value() && by.constant_value())
                c.drift = VectorField::constant(Point(*bx.constant_value(), *by.constant_value()));
            else
                c.drift = VectorField([bx, by](const Point &x) { return Point(bx(x), by(x)); });
            c.reaction = make_field(spec.reaction, mesh, config.base_dir);
            c.cost = make_field(spec.cost, mesh, config.base_dir);
            p.controls.push_back(std::move(c));
        }
    }
    if (config.horizon) {
        if (!(*config.horizon > 0.0))
            throw ConfigurationError("[time] T must be positive");
        p.horizon = *config.horizon;
    }
    if (p.dimension != mesh->dimension())
        throw ConfigurationError("problem dimension " + std::to_string(p.dimension) +
                                 " does not match the mesh dimension " +
                                 std::to_string(mesh->dimension()));
    return p;
}

} // namespace hjbfem::cli
