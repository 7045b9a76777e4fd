#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace hjbfem;

int main(int argc, char **argv) {
    CLI::App app{"Monotone P1 finite element solver for parabolic HJB equations"};
    app.require_subcommand(1);

    std::string config;
    auto *solve = app.add_subcommand("solve", "Run a configured problem and write CSV output");
    solve->add_option("config", config, "INI configuration file")->required();

    std::string source, write_path;
    auto *check = app.add_subcommand("check-mesh", "Print mesh statistics and the acuteness certificate");
    check->add_option("source", source,
                      "Mesh file, or interval:A:B:N, consistent:NX:NY, inconsistent:NX:NY, "
                      "equilateral:NX:NY")
        ->required();
    check->add_option("--write", write_path, "Write the mesh in the plain-text format");

    const std::map<std::string, SplittingMode> modes{
        {"explicit", SplittingMode::explicit_scheme},
        {"implicit", SplittingMode::implicit_scheme},
        {"semi-implicit", SplittingMode::semi_implicit}};
    Index bench_levels = 3, base_elements = 16;
    double cfl = 1.0;
    SplittingMode mode = SplittingMode::explicit_scheme;
    std::string bench_csv;
    auto *bench = app.add_subcommand("bench-eikonal", "Convergence table for the 1D eikonal benchmark");
    bench->add_option("--levels", bench_levels, "Number of refinement levels (>= 2)");
    bench->add_option("--mode", mode, "explicit, implicit or semi-implicit")
        ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
    bench->add_option("--base-elements", base_elements, "Elements on [-1, 1] at the coarsest level");
    bench->add_option("--cfl", cfl, "h as a fraction of the explicit step restriction");
    bench->add_option("--csv", bench_csv, "Write the table as CSV");

    const std::map<std::string, MeshPattern> patterns{{"consistent", MeshPattern::consistent},
                                                      {"inconsistent", MeshPattern::inconsistent}};
    Index demo_levels = 3, base_cells = 8;
    MeshPattern pattern = MeshPattern::inconsistent;
    std::string demo_csv;
    auto *demo = app.add_subcommand("consistency-demo",
                                    "Stiffness action of interpolant and elliptic projection at the center node");
    demo->add_option("--pattern", pattern, "consistent or inconsistent")
        ->transform(CLI::CheckedTransformer(patterns, CLI::ignore_case));
    demo->add_option("--levels", demo_levels, "Number of refinement levels (>= 2)");
    demo->add_option("--base-cells", base_cells, "Cells per side at the coarsest level (even)");
    demo->add_option("--csv", demo_csv, "Write the probes as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::exit_parse;
    }

    if (*solve)
        return cli::cmd_solve(config, std::cout, std::cerr);
    if (*check)
        return cli::cmd_check_mesh(source, write_path, std::cout, std::cerr);
    if (*bench)
        return cli::cmd_bench_eikonal(bench_levels, mode, base_elements, cfl, bench_csv, std::cout,
                                      std::cerr);
    return cli::cmd_consistency_demo(pattern, demo_levels, base_cells, demo_csv, std::cout,
                                     std::cerr);
}
