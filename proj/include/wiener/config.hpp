#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wiener/functionals.hpp"
#include "wiener/grid_paths.hpp"
#include "wiener/stochastic_lab.hpp"

namespace wiener {

using Json = nlohmann::ordered_json;

// Config/CLI validation failure; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Kernel specification as it appears in config files.
struct KernelSpec {
    std::string type;                         // "deterministic" | "space_poly"
    std::vector<double> poly_t;               // deterministic: f(t) coefficients
    std::vector<std::vector<double>> coeffs;  // space_poly: coeffs[k] = t-poly on x^k
};

struct CostSpec {
    std::vector<double> g;
    std::vector<double> G;
};

struct DriftSpec {
    std::string type;  // "deterministic" | "mixture" | "state_kernel"
    std::vector<double> path_poly;                // deterministic: F(t) coefficients
    std::vector<std::vector<double>> components;  // mixture: F_i(t) coefficients
    std::vector<double> probs;
    std::optional<KernelSpec> kernel;  // state_kernel
};

struct RunConfig {
    std::optional<KernelSpec> kernel;
    std::optional<CostSpec> cost;
    std::optional<DriftSpec> drift;
    double horizon = 1.0;
    int grid_n = 200;

    struct Ensemble {
        std::size_t paths = 10'000;
        std::uint64_t seed = 42;
    } ensemble;

    struct Solver {
        std::string bc = "free";  // "free" | "fixed"
        double terminal = 0.0;
        double slope_bracket = 50.0;
        double bc_tol = 1e-9;
        bool scan_a = false;
    } solver;

    struct Minimizer {
        int steps = 1000;
        double learn_rate = 0.1;
        std::string init = "zero";  // "zero" | "ramp"
    } minimizer;

    struct Outputs {
        std::string directory = ".";
        bool emit_paths = true;
        int emit_xtilde = 5;
    } outputs;
};

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError("config field '" + field + "': " + what);
}

inline std::vector<double> number_array(const Json& node, const std::string& field) {
    require(node.is_array(), field, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(node.size());
    for (const auto& v : node) {
        require(v.is_number(), field, "expected an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline KernelSpec parse_kernel_spec(const Json& node, const std::string& field) {
    require(node.is_object(), field, "expected an object");
    KernelSpec spec;
    require(node.contains("type") && node["type"].is_string(), field + ".type",
            "required string: deterministic | space_poly");
    spec.type = node["type"].get<std::string>();
    if (spec.type == "deterministic") {
        require(node.contains("poly_t"), field + ".poly_t", "required for deterministic kernels");
        spec.poly_t = number_array(node["poly_t"], field + ".poly_t");
    } else if (spec.type == "space_poly") {
        require(node.contains("coeffs") && node["coeffs"].is_array(), field + ".coeffs",
                "required array of t-polynomials");
        for (std::size_t k = 0; k < node["coeffs"].size(); ++k)
            spec.coeffs.push_back(
                number_array(node["coeffs"][k], field + ".coeffs[" + std::to_string(k) + "]"));
        require(spec.coeffs.size() <= static_cast<std::size_t>(kMaxSpaceDegree) + 1,
                field + ".coeffs", "x-degree cap is 8");
    } else {
        throw ConfigError("config field '" + field + ".type': unknown kernel type '" + spec.type +
                          "'");
    }
    return spec;
}

inline Json kernel_spec_to_json(const KernelSpec& spec) {
    Json node;
    node["type"] = spec.type;
    if (spec.type == "deterministic") {
        node["poly_t"] = spec.poly_t;
    } else {
        node["coeffs"] = spec.coeffs;
    }
    return node;
}

}  // namespace detail

inline DriftKernel build_kernel(const KernelSpec& spec, double horizon) {
    if (spec.type == "deterministic") return deterministic_kernel(Polynomial(spec.poly_t), horizon);
    std::vector<Polynomial> coeffs;
    coeffs.reserve(spec.coeffs.size());
    for (const auto& c : spec.coeffs) coeffs.emplace_back(c);
    return space_poly_kernel(std::move(coeffs), horizon);
}

inline DriftProcessSpec build_drift(const DriftSpec& spec, const TimeGrid& grid) {
    const auto path_from_poly = [&](const std::vector<double>& coeffs,
                                    const std::string& field) {
        const Polynomial p(coeffs);
        detail::require(p(0.0) == 0.0, field, "drift paths must start at zero (F(0) = 0)");
        return path_from_function(grid, [&](double t) { return p(t); });
    };
    if (spec.type == "deterministic")
        return DeterministicDrift{path_from_poly(spec.path_poly, "drift.path_poly")};
    if (spec.type == "state_kernel")
        return StateDrift{build_kernel(*spec.kernel, grid.horizon())};
    std::vector<DiscretePath> components;
    components.reserve(spec.components.size());
    for (std::size_t i = 0; i < spec.components.size(); ++i)
        components.push_back(
            path_from_poly(spec.components[i], "drift.components[" + std::to_string(i) + "]"));
    return mixture_drift(std::move(components), spec.probs);
}

inline RunConfig parse_config(const Json& root) {
    if (!root.is_object()) throw ConfigError("config: expected a JSON object");
    RunConfig config;

    if (root.contains("problem")) {
        const Json& problem = root["problem"];
        detail::require(problem.is_object(), "problem", "expected an object");
        if (problem.contains("kernel"))
            config.kernel = detail::parse_kernel_spec(problem["kernel"], "problem.kernel");
        if (problem.contains("cost")) {
            const Json& cost = problem["cost"];
            detail::require(cost.is_object(), "problem.cost", "expected an object");
            CostSpec spec;
            if (cost.contains("g")) spec.g = detail::number_array(cost["g"], "problem.cost.g");
            if (cost.contains("G")) spec.G = detail::number_array(cost["G"], "problem.cost.G");
            detail::require(spec.g.size() <= 9 && spec.G.size() <= 9, "problem.cost",
                            "polynomial degree cap is 8");
            config.cost = std::move(spec);
        }
        detail::require(!(config.kernel && config.cost), "problem",
                        "exactly one of kernel or cost may be given");
    }

    if (root.contains("drift")) {
        const Json& drift = root["drift"];
        detail::require(drift.is_object(), "drift", "expected an object");
        DriftSpec spec;
        detail::require(drift.contains("type") && drift["type"].is_string(), "drift.type",
                        "required string: deterministic | mixture | state_kernel");
        spec.type = drift["type"].get<std::string>();
        if (spec.type == "deterministic") {
            detail::require(drift.contains("path_poly"), "drift.path_poly", "required");
            spec.path_poly = detail::number_array(drift["path_poly"], "drift.path_poly");
        } else if (spec.type == "mixture") {
            detail::require(drift.contains("components") && drift["components"].is_array(),
                            "drift.components", "required array");
            for (std::size_t i = 0; i < drift["components"].size(); ++i)
                spec.components.push_back(detail::number_array(
                    drift["components"][i], "drift.components[" + std::to_string(i) + "]"));
            detail::require(drift.contains("probs"), "drift.probs", "required");
            spec.probs = detail::number_array(drift["probs"], "drift.probs");
        } else if (spec.type == "state_kernel") {
            detail::require(drift.contains("kernel"), "drift.kernel", "required");
            spec.kernel = detail::parse_kernel_spec(drift["kernel"], "drift.kernel");
        } else {
            throw ConfigError("config field 'drift.type': unknown drift type '" + spec.type + "'");
        }
        config.drift = std::move(spec);
    }

    if (root.contains("horizon")) {
        detail::require(root["horizon"].is_number(), "horizon", "expected a number");
        config.horizon = root["horizon"].get<double>();
    }
    detail::require(config.horizon > 0.0 && config.horizon <= 1e3, "horizon",
                    "must be in (0, 1000]");

    if (root.contains("grid_n")) {
        detail::require(root["grid_n"].is_number_integer(), "grid_n", "expected an integer");
        config.grid_n = root["grid_n"].get<int>();
    }
    detail::require(config.grid_n >= 2 && config.grid_n <= 10'000'000, "grid_n",
                    "must be in [2, 1e7]");

    if (root.contains("ensemble")) {
        const Json& ensemble = root["ensemble"];
        detail::require(ensemble.is_object(), "ensemble", "expected an object");
        if (ensemble.contains("paths")) {
            detail::require(ensemble["paths"].is_number_integer() &&
                                ensemble["paths"].get<long long>() > 0,
                            "ensemble.paths", "expected a positive integer");
            config.ensemble.paths = ensemble["paths"].get<std::size_t>();
        }
        detail::require(config.ensemble.paths <= 100'000'000ull, "ensemble.paths",
                        "must be at most 1e8");
        if (ensemble.contains("seed")) {
            detail::require(ensemble["seed"].is_number_integer(), "ensemble.seed",
                            "expected an integer");
            config.ensemble.seed = ensemble["seed"].get<std::uint64_t>();
        }
    }

    if (root.contains("solver")) {
        const Json& solver = root["solver"];
        detail::require(solver.is_object(), "solver", "expected an object");
        if (solver.contains("bc")) {
            config.solver.bc = solver["bc"].get<std::string>();
            detail::require(config.solver.bc == "free" || config.solver.bc == "fixed",
                            "solver.bc", "must be 'free' or 'fixed'");
        }
        if (solver.contains("terminal")) config.solver.terminal = solver["terminal"].get<double>();
        if (solver.contains("slope_bracket")) {
            config.solver.slope_bracket = solver["slope_bracket"].get<double>();
            detail::require(config.solver.slope_bracket > 0.0 &&
                                config.solver.slope_bracket <= 1e6,
                            "solver.slope_bracket", "must be in (0, 1e6]");
        }
        if (solver.contains("bc_tol")) {
            config.solver.bc_tol = solver["bc_tol"].get<double>();
            detail::require(config.solver.bc_tol > 0.0 && config.solver.bc_tol <= 1e-3,
                            "solver.bc_tol", "must be in (0, 1e-3]");
        }
        if (solver.contains("scan_a")) config.solver.scan_a = solver["scan_a"].get<bool>();
    }

    if (root.contains("mc_minimizer")) {
        const Json& minimizer = root["mc_minimizer"];
        detail::require(minimizer.is_object(), "mc_minimizer", "expected an object");
        if (minimizer.contains("steps")) {
            config.minimizer.steps = minimizer["steps"].get<int>();
            detail::require(config.minimizer.steps >= 1 && config.minimizer.steps <= 1'000'000,
                            "mc_minimizer.steps", "must be in [1, 1e6]");
        }
        if (minimizer.contains("learn_rate")) {
            config.minimizer.learn_rate = minimizer["learn_rate"].get<double>();
            detail::require(config.minimizer.learn_rate > 0.0, "mc_minimizer.learn_rate",
                            "must be positive");
        }
        if (minimizer.contains("init")) {
            config.minimizer.init = minimizer["init"].get<std::string>();
            detail::require(config.minimizer.init == "zero" || config.minimizer.init == "ramp",
                            "mc_minimizer.init", "must be 'zero' or 'ramp'");
        }
    }

    if (root.contains("outputs")) {
        const Json& outputs = root["outputs"];
        detail::require(outputs.is_object(), "outputs", "expected an object");
        if (outputs.contains("directory"))
            config.outputs.directory = outputs["directory"].get<std::string>();
        if (outputs.contains("emit_paths"))
            config.outputs.emit_paths = outputs["emit_paths"].get<bool>();
        if (outputs.contains("emit_xtilde")) {
            config.outputs.emit_xtilde = outputs["emit_xtilde"].get<int>();
            detail::require(config.outputs.emit_xtilde >= 0 &&
                                config.outputs.emit_xtilde <= 1000,
                            "outputs.emit_xtilde", "must be in [0, 1000]");
        }
    }

    return config;
}

inline RunConfig parse_config_text(const std::string& text) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_config(root);
}

// Fully resolved echo; feeding it back reproduces the run bit-identically.
inline Json echo_config(const RunConfig& config) {
    Json root;
    Json problem;
    if (config.kernel) problem["kernel"] = detail::kernel_spec_to_json(*config.kernel);
    if (config.cost) {
        Json cost;
        cost["g"] = config.cost->g;
        cost["G"] = config.cost->G;
        problem["cost"] = cost;
    }
    root["problem"] = problem;
    if (config.drift) {
        Json drift;
        drift["type"] = config.drift->type;
        if (config.drift->type == "deterministic") drift["path_poly"] = config.drift->path_poly;
        if (config.drift->type == "mixture") {
            drift["components"] = config.drift->components;
            drift["probs"] = config.drift->probs;
        }
        if (config.drift->type == "state_kernel")
            drift["kernel"] = detail::kernel_spec_to_json(*config.drift->kernel);
        root["drift"] = drift;
    }
    root["horizon"] = config.horizon;
    root["grid_n"] = config.grid_n;
    root["ensemble"] = {{"paths", config.ensemble.paths}, {"seed", config.ensemble.seed}};
    root["solver"] = {{"bc", config.solver.bc},
                      {"terminal", config.solver.terminal},
                      {"slope_bracket", config.solver.slope_bracket},
                      {"bc_tol", config.solver.bc_tol},
                      {"scan_a", config.solver.scan_a}};
    root["mc_minimizer"] = {{"steps", config.minimizer.steps},
                            {"learn_rate", config.minimizer.learn_rate},
                            {"init", config.minimizer.init}};
    root["outputs"] = {{"directory", config.outputs.directory},
                       {"emit_paths", config.outputs.emit_paths},
                       {"emit_xtilde", config.outputs.emit_xtilde}};
    return root;
}

}  // namespace wiener
