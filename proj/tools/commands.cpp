#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hjbfem/assembly.hpp"
#include "hjbfem/diagnostics.hpp"
#include "hjbfem/errors.hpp"
#include "hjbfem/solver.hpp"
#include "run_config.hpp"

namespace hjbfem::cli {

namespace {

namespace fs = std::filesystem;

int guarded(std::ostream &err, const std::function<int()> &body) {
    try {
        return body();
    } catch (const ParseError &e) {
        err << "parse error: " << e.what() << '\n';
        return exit_parse;
    } catch (const IoError &e) {
        err << "i/o error: " << e.what() << '\n';
        return exit_io;
    } catch (const MonotonicityError &e) {
        err << "certification failed: " << e.what() << '\n';
        return exit_certification;
    } catch (const CertificationError &e) {
        err << "certification failed: " << e.what() << '\n';
        return exit_certification;
    } catch (const NonConvergenceError &e) {
        err << "solver did not converge: " << e.what() << '\n';
        return exit_nonconvergence;
    } catch (const LinearSolverError &e) {
        err << "solver did not converge: " << e.what() << '\n';
        return exit_nonconvergence;
    } catch (const MMatrixError &e) {
        err << "solver did not converge: " << e.what() << '\n';
        return exit_nonconvergence;
    } catch (const Error &e) {
        err << "configuration error: " << e.what() << '\n';
        return exit_parse;
    }
}

std::ofstream open_output(const fs::path &path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    return out;
}

void finish(std::ofstream &out, const fs::path &path) {
    out.flush();
    if (!out)
        throw IoError("failed writing " + path.string());
}

template <class Writer>
void dump(const fs::path &path, Writer &&write) {
    std::ofstream out = open_output(path);
    write(out);
    finish(out, path);
}

DiffusionBudget make_budget(const RunConfig &config, const Mesh &mesh,
                            const OperatorSplitting &splitting) {
    DiffusionBudget budget;
    if (const auto rule = parse_diffusion_rule(config.diffusion)) {
        budget = compute_diffusion_budget(mesh, splitting, acuteness_certificate(mesh), *rule);
    } else {
        const double nu = std::stod(config.diffusion);
        const bool has_explicit = splitting.mode != SplittingMode::implicit_scheme;
        const bool has_implicit = splitting.mode != SplittingMode::explicit_scheme;
        budget = uniform_diffusion_budget(mesh, splitting, has_explicit ? nu : 0.0,
                                          has_implicit ? nu : 0.0);
    }
    if (config.diffusion_scale != 1.0)
        budget = scale_diffusion_budget(std::move(budget), config.diffusion_scale);
    return budget;
}

TimeGrid make_grid(const RunConfig &config, double horizon, double max_stable_h,
                   std::ostream &err) {
    if (config.h)
        return TimeGrid::from_step(horizon, *config.h);
    if (config.steps)
        return TimeGrid::from_steps(horizon, *config.steps);
    const double cfl = config.cfl.value_or(1.0);
    if (!std::isfinite(max_stable_h))
        throw ConfigurationError("the scheme has no explicit step restriction; "
                                 "give [time] h or steps");
    bool adjusted = false;
    const TimeGrid grid = TimeGrid::from_cfl(horizon, max_stable_h, cfl, &adjusted);
    if (adjusted)
        err << "warning: h rounded down to " << std::setprecision(17) << grid.step()
            << " so that T/h is an integer\n";
    return grid;
}

Mesh mesh_from_source(const std::string &source) {
    std::vector<std::string> parts;
    std::stringstream ss(source);
    for (std::string item; std::getline(ss, item, ':');)
        parts.push_back(item);
    auto number = [&](std::size_t i) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(parts[i], &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used == 0 || used != parts[i].size())
            throw ParseError("bad number '" + parts[i] + "' in mesh spec '" + source + "'");
        return v;
    };
    if (parts.size() == 4 && parts[0] == "interval")
        return build_interval_mesh(number(1), number(2), static_cast<Index>(number(3)));
    if (parts.size() == 3) {
        if (const auto pattern = parse_mesh_pattern(parts[0]))
            return build_patterned_rectangle_mesh(Rectangle{}, static_cast<Index>(number(1)),
                                                  static_cast<Index>(number(2)), *pattern);
    }
    if (!fs::exists(source))
        throw IoError("cannot open mesh " + source);
    return read_mesh(source);
}

} // namespace

int cmd_solve(const std::string &config_path, std::ostream &out, std::ostream &err) {
    return guarded(err, [&] {
        const auto start = std::chrono::steady_clock::now();
        const RunConfig config = load_run_config(config_path);
        const auto mesh = build_mesh(config.mesh);
        const ControlProblem problem = build_problem(config, mesh);
        const OperatorSplitting splitting =
            make_splitting(problem, *mesh, config.mode, config.shares, config.gamma);
        const DiffusionBudget budget = make_budget(config, *mesh, splitting);
        const DiscreteOperatorSet ops = assemble(*mesh, splitting, budget);
        const double max_stable_h = certify_monotonicity(ops, 1.0).max_stable_h;
        const TimeGrid grid = make_grid(config, problem.horizon, max_stable_h, err);

        const MonotonicityReport cert = certify_monotonicity(ops, grid.step());
        if (!cert.admissible()) {
            err << "certification failed: " << cert.describe_failure() << '\n';
            return static_cast<int>(exit_certification);
        }

        SolverOptions options;
        options.tol = config.tol;
        options.max_iter = config.max_iter;
        const Eigen::VectorXd final_values =
            interpolate(*mesh, [&](const Point &p) { return problem.final_data(p); });
        const SolveResult result = backward_solve(ops, mesh, grid, final_values, options);

        fs::path dir = config.output_dir;
        if (const char *env = std::getenv(kOutputDirVariable); env && *env)
            dir = env;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec)
            throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
        if (config.write_solution)
            dump(dir / "solution.csv", [&](std::ostream &o) { write_solution_csv(o, result.solution); });
        if (config.write_policy)
            dump(dir / "policy.csv", [&](std::ostream &o) { write_policy_csv(o, result.report); });
        if (config.write_report)
            dump(dir / "report.csv", [&](std::ostream &o) { write_report_csv(o, result.report); });
        if (config.write_matrices)
            for (Index k = 0; k < ops.control_count(); ++k) {
                const auto &c = ops.controls[static_cast<std::size_t>(k)];
                const std::string suffix = std::to_string(k) + ".coo";
                dump(dir / ("E_" + suffix), [&](std::ostream &o) { write_matrix_coo(o, c.explicit_part); });
                dump(dir / ("I_" + suffix), [&](std::ostream &o) { write_matrix_coo(o, c.implicit_part); });
            }

        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ostringstream summary;
        summary << std::setprecision(17);
        summary << "problem " << config.problem << '\n'
                << "mode " << to_string(config.mode) << '\n'
                << "controls " << ops.control_count() << '\n'
                << "interior_nodes " << mesh->interior_count() << '\n'
                << "nodes " << mesh->node_count() << '\n'
                << "mesh_size " << mesh->mesh_size() << '\n'
                << "h " << grid.step() << '\n'
                << "steps " << grid.steps << '\n'
                << "max_stable_h " << max_stable_h << '\n'
                << "total_iterations " << result.report.total_iterations() << '\n'
                << "max_iterations " << result.report.max_iterations() << '\n'
                << "min_value " << result.solution.min_value() << '\n'
                << "wall_time_s " << std::setprecision(6) << seconds << '\n';
        out << summary.str();
        dump(dir / "summary.txt", [&](std::ostream &o) { o << summary.str(); });
        return static_cast<int>(exit_ok);
    });
}

int cmd_check_mesh(const std::string &source, const std::string &write_path, std::ostream &out,
                   std::ostream &err) {
    return guarded(err, [&] {
        const Mesh mesh = mesh_from_source(source);
        const AcutenessCertificate cert = acuteness_certificate(mesh);
        out << std::setprecision(17) << "dimension " << mesh.dimension() << '\n'
            << "nodes " << mesh.node_count() << '\n'
            << "interior_nodes " << mesh.interior_count() << '\n'
            << "elements " << mesh.element_count() << '\n'
            << "mesh_size " << mesh.mesh_size() << '\n'
            << "sin_theta " << cert.sin_theta << '\n'
            << "strictly_acute " << (cert.strictly_acute ? "true" : "false") << '\n';
        if (cert.worst_element >= 0) {
            const Point &a = mesh.node(cert.worst_node_a);
            const Point &b = mesh.node(cert.worst_node_b);
            out << "worst_pair element " << cert.worst_element << " nodes " << cert.worst_node_a
                << " (" << a.x() << ", " << a.y() << ") " << cert.worst_node_b << " (" << b.x()
                << ", " << b.y() << ")\n";
        }
        if (!write_path.empty())
            write_mesh(write_path, mesh);
        return static_cast<int>(exit_ok);
    });
}

int cmd_bench_eikonal(Index levels, SplittingMode mode, Index base_elements, double cfl,
                      const std::string &csv_path, std::ostream &out, std::ostream &err) {
    if (levels < 2) {
        err << "usage error: bench-eikonal needs at least 2 levels\n";
        return exit_parse;
    }
    if (base_elements < 2) {
        err << "usage error: the coarsest level needs at least 2 elements\n";
        return exit_parse;
    }
    return guarded(err, [&] {
        std::vector<Index> counts;
        for (Index j = 0; j < levels; ++j)
            counts.push_back(base_elements << j);
        const auto rows = eikonal_benchmark(mode, counts, cfl);
        out << std::setprecision(6) << std::scientific;
        out << "mode " << to_string(mode) << '\n';
        out << std::setw(14) << "dx" << std::setw(14) << "h" << std::setw(14) << "linf"
            << std::setw(14) << "l2h1" << std::setw(14) << "linf_red" << std::setw(14)
            << "l2h1_red" << '\n';
        for (const auto &r : rows)
            out << std::setw(14) << r.mesh_size << std::setw(14) << r.h << std::setw(14)
                << r.linf_error << std::setw(14) << r.l2h1_error << std::setw(14)
                << r.linf_reduction << std::setw(14) << r.l2h1_reduction << '\n';
        if (!csv_path.empty())
            dump(csv_path, [&](std::ostream &o) { write_convergence_csv(o, rows); });
        const bool ok = linf_non_increasing(rows);
        out << (ok ? "linf errors non-increasing\n" : "linf errors increased\n");
        return static_cast<int>(ok ? exit_ok : exit_failure);
    });
}

int cmd_consistency_demo(MeshPattern pattern, Index levels, Index base_cells,
                         const std::string &csv_path, std::ostream &out, std::ostream &err) {
    if (levels < 2) {
        err << "usage error: consistency-demo needs at least 2 levels\n";
        return exit_parse;
    }
    if (base_cells < 2 || base_cells % 2 != 0) {
        err << "usage error: the coarsest level needs an even number of cells\n";
        return exit_parse;
    }
    return guarded(err, [&] {
        std::vector<double> spacings;
        for (Index j = 0; j < levels; ++j)
            spacings.push_back(1.0 / static_cast<double>(base_cells << j));
        const auto probes =
            consistency_experiment(pattern, sine_product_field(), Point(0.5, 0.5), spacings);
        out << "pattern " << to_string(pattern) << ", w = sin(pi x) sin(pi y), probe (0.5, 0.5)\n";
        out << std::setw(12) << "dx" << std::setw(24) << "interpolant_ratio" << std::setw(24)
            << "projection_ratio" << std::setw(24) << "projection/-lap(w)" << '\n';
        out << std::setprecision(15);
        for (const auto &p : probes)
            out << std::setw(12) << p.spacing << std::setw(24) << p.interpolant_ratio()
                << std::setw(24) << p.projection_ratio() << std::setw(24)
                << p.projection_pointwise_ratio() << '\n';
        if (!csv_path.empty())
            dump(csv_path, [&](std::ostream &o) { write_consistency_csv(o, probes); });
        return static_cast<int>(exit_ok);
    });
}

} // namespace hjbfem::cli
