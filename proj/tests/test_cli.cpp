#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "commands.hpp"
#include "hjbfem/errors.hpp"
#include "hjbfem/mesh.hpp"
#include "run_config.hpp"

using namespace hjbfem;
namespace fs = std::filesystem;

namespace {

const fs::path examples = HJBFEM_EXAMPLES_DIR;

fs::path scratch(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / "hjbfem_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Run {
    int code;
    std::string out, err;
};

// Runs `solve` in-process with the output redirected to `dir`.
Run solve(const fs::path &config, const fs::path &dir) {
    ::setenv(cli::kOutputDirVariable, dir.c_str(), 1);
    std::ostringstream out, err;
    const int code = cli::cmd_solve(config.string(), out, err);
    ::unsetenv(cli::kOutputDirVariable);
    return {code, out.str(), err.str()};
}

int tool(const std::string &args) {
    const std::string cmd = std::string(HJBFEM_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> read_lines(const fs::path &path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        lines.push_back(line);
    return lines;
}

fs::path write_file(const fs::path &path, const std::string &text) {
    std::ofstream(path) << text;
    return path;
}

} // namespace

TEST_CASE("solve: explicit eikonal writes the exact nodal solution") {
    const fs::path dir = scratch("eikonal_explicit");
    const Run r = solve(examples / "eikonal_explicit.ini", dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("mode explicit") != std::string::npos);
    const auto lines = read_lines(dir / "solution.csv");
    REQUIRE(lines.size() > 1);
    CHECK(lines[0] == "k,s,node,x,value");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::istringstream row(lines[i]);
        std::string k, s, node, x, value;
        std::getline(row, k, ',');
        std::getline(row, s, ',');
        std::getline(row, node, ',');
        std::getline(row, x, ',');
        std::getline(row, value, ',');
        CHECK(std::stod(value) == doctest::Approx(eikonal_solution(std::stod(s), Point(std::stod(x), 0))).epsilon(1e-12));
    }
    CHECK(fs::exists(dir / "policy.csv"));
    CHECK(fs::exists(dir / "report.csv"));
    CHECK(fs::exists(dir / "summary.txt"));
    CHECK_FALSE(fs::exists(dir / "E_0.coo"));
}

TEST_CASE("solve: runs are reproducible") {
    const fs::path a = scratch("repeat_a"), b = scratch("repeat_b");
    REQUIRE(solve(examples / "custom.ini", a).code == 0);
    REQUIRE(solve(examples / "custom.ini", b).code == 0);
    for (const char *f : {"solution.csv", "policy.csv", "report.csv"})
        CHECK(read_lines(a / f) == read_lines(b / f));
}

TEST_CASE("solve: matrices and the other examples") {
    const fs::path dir = scratch("eikonal_implicit");
    REQUIRE(solve(examples / "eikonal_implicit.ini", dir).code == 0);
    for (const char *f : {"E_0.coo", "I_0.coo", "E_1.coo", "I_1.coo"})
        CHECK(fs::exists(dir / f));
    CHECK(fs::file_size(dir / "E_0.coo") == 0); // fully implicit
    CHECK(fs::file_size(dir / "I_1.coo") > 0);
    CHECK(solve(examples / "diffusion2d.ini", scratch("d2")).code == 0);
    const Run custom = solve(examples / "custom.ini", scratch("custom"));
    CHECK(custom.code == 0);
    CHECK(custom.out.find("controls 2") != std::string::npos);
}

TEST_CASE("solve: exit codes") {
    const fs::path dir = scratch("codes");
    const Run cert = solve(examples / "eikonal_underdiffused.ini", dir);
    CHECK(cert.code == cli::exit_certification);
    CHECK(cert.err.find("positive off-diagonal") != std::string::npos);

    CHECK(solve(examples / "malformed.ini", dir).code == cli::exit_parse);
    CHECK(solve(dir / "missing.ini", dir).code == cli::exit_io);

    const auto unknown = write_file(dir / "unknown.ini", "[problem]\nname = eikonal1d\ncolour = red\n");
    CHECK(solve(unknown, dir).code == cli::exit_parse);

    const auto cap = write_file(dir / "cap.ini",
                                "[mesh]\nelements = 32\n[time]\nh = 0.5\n[splitting]\nmode = implicit\n"
                                "diffusion = offdiagonal\n[solver]\nmax_iter = 1\n");
    const Run nc = solve(cap, dir);
    CHECK(nc.code == cli::exit_nonconvergence);

    const auto no_step = write_file(dir / "nostep.ini", "[splitting]\nmode = implicit\n");
    CHECK(solve(no_step, dir).code == cli::exit_parse);

    // An output directory that is a regular file cannot be created.
    const auto blocker = write_file(dir / "blocker", "x");
    ::setenv(cli::kOutputDirVariable, (blocker / "sub").c_str(), 1);
    std::ostringstream out, err;
    CHECK(cli::cmd_solve((examples / "eikonal_explicit.ini").string(), out, err) == cli::exit_io);
    ::unsetenv(cli::kOutputDirVariable);
}

TEST_CASE("config parsing") {
    std::istringstream ok("[problem]\nname = custom\ndimension = 1\nfinal = x*(1-x)\n"
                          "[mesh]\na = 0\nb = 1\nelements = 4\n"
                          "[time]\nT = 0.5\nsteps = 5\n"
                          "[splitting]\nmode = semi-implicit\nimplicit_drift = 0.25\ndiffusion = 0.1\n"
                          "[control:left]\ndrift_x = -1\ncost = 1\n"
                          "[output]\ndirectory = results\nmatrices = yes\n");
    const auto c = cli::parse_run_config(ok, "/base");
    CHECK(c.problem == "custom");
    CHECK(c.controls.size() == 1);
    CHECK(c.controls[0].label == "left");
    CHECK(c.controls[0].drift_x == "-1");
    CHECK(c.shares.drift == 0.25);
    CHECK(c.diffusion == "0.1");
    CHECK(c.steps == 5);
    CHECK(c.output_dir == fs::path("/base/results"));
    CHECK(c.write_matrices);

    auto bad = [](const std::string &text) {
        std::istringstream in(text);
        return cli::parse_run_config(in, ".");
    };
    CHECK_THROWS_AS(bad("[problem]\nname = heat\n"), ParseError);
    CHECK_THROWS_AS(bad("[nonsense]\nx = 1\n"), ParseError);
    CHECK_THROWS_AS(bad("[time]\nh = 0.1\nsteps = 3\n"), ParseError);
    CHECK_THROWS_AS(bad("[splitting]\nmode = sideways\n"), ParseError);
    CHECK_THROWS_AS(bad("[splitting]\ndiffusion = lots\n"), ParseError);
    CHECK_THROWS_AS(bad("[problem]\nname = custom\n"), ParseError);
    CHECK_THROWS_AS(bad("[control:a]\ncost = 1\n"), ParseError);
    CHECK_THROWS_AS(bad("[output]\nsolution = maybe\n"), ParseError);
    CHECK_THROWS_AS(bad("[mesh]\ngenerator = file\n"), ParseError);
    CHECK_THROWS_AS(bad("[problem\nname = x\n"), ParseError);
}

TEST_CASE("tabulated fields follow the mesh node order") {
    const fs::path dir = scratch("table");
    const Mesh mesh = build_interval_mesh(0.0, 1.0, 4);
    std::ostringstream table;
    for (Index i = 0; i < mesh.node_count(); ++i)
        table << 2.0 * mesh.node(i).x() << '\n';
    write_file(dir / "cost.txt", table.str());
    write_file(dir / "short.txt", "1 2\n");
    std::istringstream in("[problem]\nname = custom\n[mesh]\na = 0\nb = 1\nelements = 4\n"
                          "[control:u]\ncost = table:cost.txt\ndiffusion = short\n");
    auto config = cli::parse_run_config(in, dir);
    const auto m = cli::build_mesh(config.mesh);
    const ScalarField f = cli::make_field("table:cost.txt", m, dir);
    CHECK(f(Point(0.3, 0)) == doctest::Approx(0.6));
    CHECK_THROWS_AS(cli::make_field("table:short.txt", m, dir), ParseError);
    CHECK_THROWS_AS(cli::make_field("table:absent.txt", m, dir), IoError);
    CHECK_THROWS_AS(cli::build_problem(config, m), ParseError);
}

TEST_CASE("check-mesh") {
    const fs::path dir = scratch("check");
    std::ostringstream out, err;
    REQUIRE(cli::cmd_check_mesh("consistent:4:4", (dir / "m.txt").string(), out, err) == 0);
    CHECK(out.str().find("strictly_acute false") != std::string::npos);
    CHECK(out.str().find("worst_pair element") != std::string::npos);
    const Mesh back = read_mesh((dir / "m.txt").string());
    CHECK(back.node_count() == 25);

    std::ostringstream out2;
    REQUIRE(cli::cmd_check_mesh((dir / "m.txt").string(), "", out2, err) == 0);
    CHECK(out2.str().find("nodes 25") != std::string::npos);

    std::ostringstream eq;
    REQUIRE(cli::cmd_check_mesh("equilateral:6:6", "", eq, err) == 0);
    const auto at = eq.str().find("sin_theta ");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(eq.str().substr(at + 10)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(eq.str().find("strictly_acute true") != std::string::npos);

    std::ostringstream sink;
    CHECK(cli::cmd_check_mesh("interval:0:1:x", "", sink, err) == cli::exit_parse);
    CHECK(cli::cmd_check_mesh((dir / "nothing.txt").string(), "", sink, err) == cli::exit_io);
}

TEST_CASE("bench-eikonal and consistency-demo") {
    const fs::path dir = scratch("bench");
    std::ostringstream out, err;
    CHECK(cli::cmd_bench_eikonal(3, SplittingMode::implicit_scheme, 16, 1.0,
                                 (dir / "bench.csv").string(), out, err) == 0);
    CHECK(read_lines(dir / "bench.csv").size() == 4);
    CHECK(cli::cmd_bench_eikonal(1, SplittingMode::explicit_scheme, 16, 1.0, "", out, err) == cli::exit_parse);

    std::ostringstream demo;
    CHECK(cli::cmd_consistency_demo(MeshPattern::inconsistent, 3, 8, (dir / "demo.csv").string(),
                                    demo, err) == 0);
    CHECK(read_lines(dir / "demo.csv").size() == 4);
    CHECK(cli::cmd_consistency_demo(MeshPattern::consistent, 2, 7, "", demo, err) == cli::exit_parse);
}

TEST_CASE("command line front end") {
    const fs::path dir = scratch("front");
    CHECK(tool("--help") == 0);
    CHECK(tool("") == cli::exit_parse);
    CHECK(tool("frobnicate") == cli::exit_parse);
    CHECK(tool("bench-eikonal --mode sideways") == cli::exit_parse);
    CHECK(tool("bench-eikonal --levels 2 --base-elements 8") == 0);
    CHECK(tool("consistency-demo --pattern consistent --levels 2") == 0);
    CHECK(tool("check-mesh equilateral:4:4") == 0);
    CHECK(tool("solve " + (examples / "eikonal_underdiffused.ini").string()) == cli::exit_certification);
    const std::string env = std::string(cli::kOutputDirVariable) + "=" + dir.string() + " ";
    const int status = std::system((env + HJBFEM_TOOL_PATH + " solve " +
                                    (examples / "eikonal_explicit.ini").string() + " > /dev/null").c_str());
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(dir / "solution.csv"));
}
