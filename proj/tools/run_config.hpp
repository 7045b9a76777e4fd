#ifndef HJBFEM_TOOLS_RUN_CONFIG_HPP
#define HJBFEM_TOOLS_RUN_CONFIG_HPP

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hjbfem/control_problem.hpp"
#include "hjbfem/mesh.hpp"

namespace hjbfem::cli {

struct MeshSpec {
    std::string generator = "interval"; // interval | rectangle | file
    double a = -1.0;
    double b = 1.0;
    Index elements = 16;
    Rectangle rect;
    Index nx = 8;
    Index ny = 8;
    MeshPattern pattern = MeshPattern::equilateral;
    std::filesystem::path path;
};

/// One control of a custom problem. Every field is an expression in x, y or
/// "table:<file>" with one value per node in mesh order.
struct ControlSpec {
    std::string label;
    std::string diffusion = "0";
    std::string drift_x = "0";
    std::string drift_y = "0";
    std::string reaction = "0";
    std::string cost = "0";
};

struct RunConfig {
    std::filesystem::path base_dir;

    // [problem]
    std::string problem = "eikonal1d"; // eikonal1d | diffusion2d | custom
    int control_count = 2;             // diffusion2d
    int dimension = 1;                 // custom
    std::string final_data = "0";      // custom
    std::vector<ControlSpec> controls; // custom, from [control:<label>] sections

    MeshSpec mesh;

    // [time]
    std::optional<double> horizon;
    std::optional<double> h;
    std::optional<double> cfl;
    std::optional<Index> steps;

    // [splitting]
    SplittingMode mode = SplittingMode::implicit_scheme;
    ImplicitShares shares;
    std::string diffusion = "patch_bound"; // rule name or a uniform number
    double diffusion_scale = 1.0;
    std::optional<double> gamma;

    // [solver]
    std::optional<double> tol;
    Index max_iter = 50;

    // [output]
    std::filesystem::path output_dir = "hjbfem-output";
    bool write_solution = true;
    bool write_policy = true;
    bool write_report = true;
    bool write_matrices = false;
};

/// Parses the INI text; throws ParseError on syntax errors, unknown keys or
/// invalid values. Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(std::istream &in, const std::filesystem::path &base_dir);

/// Reads a config file; throws IoError when it cannot be opened.
RunConfig load_run_config(const std::filesystem::path &path);

std::shared_ptr<const Mesh> build_mesh(const MeshSpec &spec);

/// Builds the control problem on `mesh` (tables are read against it).
ControlProblem build_problem(const RunConfig &config, const std::shared_ptr<const Mesh> &mesh);

/// Expression or "table:<file>" field.
ScalarField make_field(const std::string &text, const std::shared_ptr<const Mesh> &mesh,
                       const std::filesystem::path &base_dir);

} // namespace hjbfem::cli

#endif
