// Batch front door: every subcommand reads a JSON config, writes CSV/JSON
// artifacts into the output directory, and is reproducible from
// (config, seed). Exit codes: 0 success, 1 numerical failure, 2 config error.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "wiener/wiener.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool scan_a = false;
};

wiener::RunConfig load_config(const CommonOptions& options, bool config_required = true) {
    wiener::RunConfig config;
    if (!options.config_path.empty()) {
        std::ifstream in(options.config_path);
        if (!in) throw wiener::ConfigError("cannot open config file " + options.config_path);
        std::stringstream buffer;
        buffer << in.rdbuf();
        config = wiener::parse_config_text(buffer.str());
    } else if (config_required) {
        throw wiener::ConfigError("--config is required for this command");
    }
    if (!options.out_dir.empty()) config.outputs.directory = options.out_dir;
    if (options.seed) config.ensemble.seed = *options.seed;
    if (options.scan_a) config.solver.scan_a = true;
    return config;
}

void add_common(CLI::App* cmd, CommonOptions& options, bool config_required = true) {
    auto* config_opt = cmd->add_option("--config", options.config_path, "JSON config file");
    if (config_required) config_opt->required();
    cmd->add_option("--out", options.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", options.seed, "ensemble seed (overrides config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"state-independent KL-weighted control on Wiener space"};
    app.require_subcommand(1);

    CommonOptions options;

    CLI::App* kernel = app.add_subcommand(
        "kernel", "derive the Ito-representation kernel of a (g, G) cost");
    add_common(kernel, options);

    CLI::App* solve =
        app.add_subcommand("solve", "Euler-Lagrange shooting solve of the optimal shift");
    add_common(solve, options);
    solve->add_flag("--scan-a", options.scan_a,
                    "cross-check the free endpoint by scanning terminal values");

    CLI::App* om = app.add_subcommand(
        "om", "Monte Carlo minimization of the action (mode of the tilted measure)");
    add_common(om, options);

    CLI::App* penalty =
        app.add_subcommand("penalty", "state-independence penalty of a drift process");
    add_common(penalty, options);

    CLI::App* simulate =
        app.add_subcommand("simulate", "Euler simulation of the tilted process");
    add_common(simulate, options);

    CLI::App* validate =
        app.add_subcommand("validate", "run the built-in acceptance battery");
    add_common(validate, options, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (kernel->parsed()) {
            wiener::cmd_kernel(load_config(options));
        } else if (solve->parsed()) {
            wiener::cmd_solve(load_config(options));
        } else if (om->parsed()) {
            wiener::cmd_om(load_config(options));
        } else if (penalty->parsed()) {
            wiener::cmd_penalty(load_config(options));
        } else if (simulate->parsed()) {
            wiener::cmd_simulate(load_config(options));
        } else if (validate->parsed()) {
            const wiener::RunConfig config = load_config(options, false);
            return wiener::cmd_validate(config.outputs.directory, std::cout);
        }
    } catch (const wiener::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const wiener::ShootingFailed& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 1;
    } catch (const wiener::IntegrationDiverged& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
