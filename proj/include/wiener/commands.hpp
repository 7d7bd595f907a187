#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wiener/clark_ocone.hpp"
#include "wiener/config.hpp"
#include "wiener/stochastic_lab.hpp"
#include "wiener/validate.hpp"
#include "wiener/variational.hpp"

namespace wiener {

namespace detail {

// temp + rename so readers never observe a partial file
inline void atomic_write(const std::filesystem::path& directory, const std::string& name,
                         const std::string& content) {
    std::filesystem::create_directories(directory);
    const std::filesystem::path tmp = directory / ("." + name + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
    }
    std::filesystem::rename(tmp, directory / name);
}

inline std::string dump_json(const Json& node) { return node.dump(2) + "\n"; }

inline Json json_mc(const McEstimate& estimate) {
    return Json{{"value", estimate.value}, {"std_err", estimate.std_err}};
}

inline Json json_kernel(const SpacePoly& kernel) {
    Json coeffs = Json::array();
    for (const Polynomial& p : kernel.coeffs_t) coeffs.push_back(p.coefficients());
    return Json{{"type", "space_poly"}, {"horizon", kernel.horizon}, {"coeffs", coeffs}};
}

struct ResolvedProblem {
    DriftKernel kernel;
    std::optional<ItoKernelResult> derived;
};

inline ResolvedProblem resolve_problem_kernel(const RunConfig& config) {
    if (config.kernel) return {build_kernel(*config.kernel, config.horizon), std::nullopt};
    if (config.cost) {
        ItoKernelResult derived =
            ito_kernel(Polynomial(config.cost->g), Polynomial(config.cost->G), config.horizon);
        DriftKernel kernel{derived.kernel};
        return {std::move(kernel), std::move(derived)};
    }
    throw ConfigError("problem: a kernel or a (g, G) cost is required for this command");
}

inline AuditReport solution_audit(const DriftKernel& kernel, const ElSolution& solution) {
    double q_lo = 0.0, q_hi = 0.0, qd_lo = 0.0, qd_hi = 0.0;
    for (std::size_t i = 0; i < solution.slopes.size(); ++i) {
        q_lo = std::min(q_lo, solution.path[static_cast<int>(i)]);
        q_hi = std::max(q_hi, solution.path[static_cast<int>(i)]);
        qd_lo = std::min(qd_lo, solution.slopes[i]);
        qd_hi = std::max(qd_hi, solution.slopes[i]);
    }
    const AuditBox box{0.0, solution.path.grid().horizon(), q_lo - 0.5, q_hi + 0.5,
                       qd_lo - 0.5, qd_hi + 0.5};
    return audit_hypotheses(kernel, box, 2000);
}

inline Json json_audit(const AuditReport& report) {
    Json node{{"coercivity_ok", report.coercivity_ok},
              {"alpha", report.alpha},
              {"beta", report.beta},
              {"joint_convexity_ok", report.joint_convexity_ok},
              {"min_hessian_eigenvalue", report.min_hessian_eigenvalue},
              {"bounded_below_ok", report.bounded_below_ok},
              {"notes", report.notes}};
    return node;
}

}  // namespace detail

// kernel: derive the Ito-representation kernel of the (g, G) cost and check
// it with the Monte Carlo residual.
inline void cmd_kernel(const RunConfig& config) {
    if (!config.cost)
        throw ConfigError("problem.cost: the kernel command needs a (g, G) cost spec");
    const ItoKernelResult derived =
        ito_kernel(Polynomial(config.cost->g), Polynomial(config.cost->G), config.horizon);

    Json kernel_json = detail::json_kernel(derived.kernel);
    kernel_json["mean_c"] = derived.mean_c;
    kernel_json["derivation_log"] = derived.derivation_log;
    kernel_json["config"] = echo_config(config);

    const TimeGrid grid(config.horizon, config.grid_n);
    const BrownianEnsemble ensemble =
        sample_ensemble(grid, config.ensemble.paths, config.ensemble.seed);
    const IntegralTerminal cost{Polynomial(config.cost->g), Polynomial(config.cost->G),
                                config.horizon};
    const ItoResidual residual = ito_residual(cost, derived, ensemble);
    const Json residual_json{{"residual_rms", residual.residual_rms},
                             {"std_err", residual.std_err},
                             {"grid_n", config.grid_n},
                             {"paths", config.ensemble.paths},
                             {"seed", config.ensemble.seed}};

    detail::atomic_write(config.outputs.directory, "kernel.json",
                         detail::dump_json(kernel_json));
    detail::atomic_write(config.outputs.directory, "residual.json",
                         detail::dump_json(residual_json));
}

// solve: Euler-Lagrange shooting route.
inline void cmd_solve(const RunConfig& config) {
    const detail::ResolvedProblem problem = detail::resolve_problem_kernel(config);
    const TimeGrid grid(config.horizon, config.grid_n);
    const LagrangianModel model = make_model(problem.kernel);
    const ShootConfig shoot_config{config.solver.slope_bracket, config.solver.bc_tol, 200};
    const BoundaryCondition bc =
        config.solver.bc == "free" ? BoundaryCondition{FreeEndpoint{}}
                                   : BoundaryCondition{FixedEndpoint{config.solver.terminal}};
    const ElSolution solution = shoot(model, grid, bc, shoot_config);

    const BrownianEnsemble ensemble =
        sample_ensemble(grid, config.ensemble.paths, config.ensemble.seed);
    const McEstimate kl = kl_estimate(solution.path, problem.kernel, ensemble);
    const AuditReport audit = detail::solution_audit(problem.kernel, solution);
    const EnsembleSanity sanity = ensemble_sanity(ensemble);

    Json report{{"slope0", solution.slope0},
                {"action", solution.action},
                {"el_residual_max", solution.el_residual_max},
                {"natural_bc_residual", solution.natural_bc_residual},
                {"kl_estimate", detail::json_mc(kl)},
                {"audit", detail::json_audit(audit)},
                {"ensemble_sanity",
                 Json{{"terminal_mean", sanity.terminal_mean},
                      {"bound", sanity.bound},
                      {"within", sanity.within}}}};
    if (problem.derived) report["derived_kernel"] = detail::json_kernel(problem.derived->kernel);
    if (config.solver.scan_a) {
        const TerminalScan scan = scan_terminal(model, grid, solution.path[grid.steps()], 1.0,
                                                21, 3, shoot_config);
        report["scan_a"] = Json{{"best_terminal", scan.best_terminal},
                                {"best_action", scan.best_action},
                                {"evaluations", scan.evaluations},
                                {"free_terminal", solution.path[grid.steps()]},
                                {"terminal_gap",
                                 std::fabs(scan.best_terminal - solution.path[grid.steps()])}};
    }
    report["config"] = echo_config(config);

    std::ostringstream csv;
    write_solution_csv(solution, csv);
    if (config.outputs.emit_paths)
        detail::atomic_write(config.outputs.directory, "solution.csv", csv.str());
    detail::atomic_write(config.outputs.directory, "report.json", detail::dump_json(report));
}

// om: Monte Carlo minimization route (mode of the tilted measure).
inline void cmd_om(const RunConfig& config) {
    const detail::ResolvedProblem problem = detail::resolve_problem_kernel(config);
    const TimeGrid grid(config.horizon, config.grid_n);
    const BrownianEnsemble ensemble =
        sample_ensemble(grid, config.ensemble.paths, config.ensemble.seed);
    const DiscretePath init =
        config.minimizer.init == "zero"
            ? zero_path(grid)
            : path_from_function(grid, [&](double t) { return 0.5 * t / config.horizon; });
    const MinimizeReport report = minimize_action_mc(problem.kernel, grid, ensemble, init,
                                                     config.minimizer.steps,
                                                     config.minimizer.learn_rate);

    Json om_report{{"objective", report.objective_trace.back()},
                   {"mc_std_err", report.mc_std_err},
                   {"iterations", report.iterations},
                   {"converged", report.converged},
                   {"objective_trace", report.objective_trace}};

    // cross-route gap against an existing shooting solution, when present
    const std::filesystem::path solution_path =
        std::filesystem::path(config.outputs.directory) / "solution.csv";
    om_report["cross_route_gap"] = nullptr;
    if (std::filesystem::exists(solution_path)) {
        std::ifstream in(solution_path);
        try {
            const DiscretePath solved = read_path_csv(in);
            if (solved.grid() == grid)
                om_report["cross_route_gap"] = sup_distance(report.path, solved);
        } catch (const std::invalid_argument&) {
        }
    }
    om_report["config"] = echo_config(config);

    std::ostringstream csv;
    write_path_csv(report.path, csv);
    if (config.outputs.emit_paths)
        detail::atomic_write(config.outputs.directory, "om_solution.csv", csv.str());
    detail::atomic_write(config.outputs.directory, "om_report.json",
                         detail::dump_json(om_report));
}

// penalty: state-independence penalty of the configured drift process.
inline void cmd_penalty(const RunConfig& config) {
    if (!config.drift) throw ConfigError("drift: the penalty command needs a drift spec");
    const TimeGrid grid(config.horizon, config.grid_n);
    const DriftProcessSpec drift = build_drift(*config.drift, grid);
    const BrownianEnsemble ensemble =
        sample_ensemble(grid, config.ensemble.paths, config.ensemble.seed);
    const McEstimate penalty = penalty_D(drift, ensemble);
    Json report{{"value", penalty.value}, {"std_err", penalty.std_err}};
    report["config"] = echo_config(config);
    detail::atomic_write(config.outputs.directory, "penalty.json", detail::dump_json(report));
}

// simulate: Euler paths of the tilted process with blow-up statistics.
inline void cmd_simulate(const RunConfig& config) {
    const detail::ResolvedProblem problem = detail::resolve_problem_kernel(config);
    const TimeGrid grid(config.horizon, config.grid_n);
    const BrownianEnsemble ensemble =
        sample_ensemble(grid, config.ensemble.paths, config.ensemble.seed);
    const XtildeResult result = simulate_xtilde(
        problem.kernel, ensemble, static_cast<std::size_t>(config.outputs.emit_xtilde));

    std::ostringstream csv;
    csv << "t";
    for (std::size_t k = 0; k < result.kept_paths.size(); ++k) csv << ",x" << k;
    csv << "\n";
    for (int i = 0; i <= grid.steps(); ++i) {
        csv << detail::format_double(grid.node(i));
        for (const auto& path : result.kept_paths)
            csv << ',' << detail::format_double(path[static_cast<std::size_t>(i)]);
        csv << '\n';
    }

    double first_blowup = std::numeric_limits<double>::infinity();
    for (double t : result.blowup_time)
        if (!std::isnan(t)) first_blowup = std::min(first_blowup, t);
    Json blowup{{"paths", config.ensemble.paths},
                {"diverged", result.diverged_count},
                {"fraction",
                 static_cast<double>(result.diverged_count) /
                     static_cast<double>(config.ensemble.paths)}};
    if (std::isfinite(first_blowup))
        blowup["first_blowup_time"] = first_blowup;
    else
        blowup["first_blowup_time"] = nullptr;
    blowup["config"] = echo_config(config);

    detail::atomic_write(config.outputs.directory, "xtilde.csv", csv.str());
    detail::atomic_write(config.outputs.directory, "blowup.json", detail::dump_json(blowup));
}

// validate: run the full built-in battery, print one line per criterion,
// write the machine-readable report. Returns process exit code.
inline int cmd_validate(const std::string& out_directory, std::ostream& console) {
    ValidateOptions options;
    if (const char* corrupt = std::getenv("WIENER_VALIDATE_CORRUPT"))
        options.corrupt_id = std::atoi(corrupt);
    const std::vector<CriterionResult> results = run_validation(options);

    bool all_pass = true;
    Json criteria = Json::array();
    for (const CriterionResult& r : results) {
        all_pass = all_pass && r.pass;
        char line[64];
        std::snprintf(line, sizeof(line), "[%s] %2d ", r.pass ? "PASS" : "FAIL", r.id);
        console << line << r.name << "\n       " << r.detail << "\n";
        criteria.push_back(
            Json{{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    }
    console << (all_pass ? "all criteria passed" : "FAILURES present") << "\n";
    const Json report{{"criteria", criteria}, {"all_pass", all_pass}};
    detail::atomic_write(out_directory, "validate_report.json", detail::dump_json(report));
    return all_pass ? 0 : 1;
}

}  // namespace wiener
