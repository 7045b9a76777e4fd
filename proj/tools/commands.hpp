#ifndef HJBFEM_TOOLS_COMMANDS_HPP
#define HJBFEM_TOOLS_COMMANDS_HPP

#include <iosfwd>
#include <string>

#include "hjbfem/control_problem.hpp"
#include "hjbfem/mesh.hpp"

namespace hjbfem::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_parse = 2,
    exit_certification = 3,
    exit_nonconvergence = 4,
    exit_io = 5,
};

/// Environment variable that overrides [output] directory.
inline constexpr const char *kOutputDirVariable = "HJBFEM_OUTPUT_DIR";

int cmd_solve(const std::string &config_path, std::ostream &out, std::ostream &err);

/// `source` is a mesh file or a generator spec: interval:A:B:N,
/// consistent:NX:NY, inconsistent:NX:NY or equilateral:NX:NY (unit square).
int cmd_check_mesh(const std::string &source, const std::string &write_path, std::ostream &out,
                   std::ostream &err);

/// Levels use 2^j * base_elements elements on [-1, 1].
int cmd_bench_eikonal(Index levels, SplittingMode mode, Index base_elements, double cfl,
                      const std::string &csv_path, std::ostream &out, std::ostream &err);

/// Levels use spacing 1 / (2^j * base_cells) on the unit square.
int cmd_consistency_demo(MeshPattern pattern, Index levels, Index base_cells,
                         const std::string &csv_path, std::ostream &out, std::ostream &err);

} // namespace hjbfem::cli

#endif
