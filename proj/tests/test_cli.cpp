#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "wiener/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    const std::string command =
        env_prefix + " " + std::string(WIENER_CLI_PATH) + " " + args + " 2>&1";
    RunResult result;
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) return result;
    char buffer[512];
    while (fgets(buffer, sizeof(buffer), pipe)) result.output += buffer;
    const int status = pclose(pipe);
    result.exit_code = WEXITSTATUS(status);
    return result;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("wiener_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

TEST(Config, ParsesAndValidates) {
    const std::string text = R"({
        "problem": {"kernel": {"type": "space_poly", "coeffs": [[0.0], [1.0]]}},
        "horizon": 1.0, "grid_n": 100,
        "ensemble": {"paths": 500, "seed": 7}
    })";
    const wiener::RunConfig config = wiener::parse_config_text(text);
    ASSERT_TRUE(config.kernel.has_value());
    EXPECT_EQ(config.kernel->type, "space_poly");
    EXPECT_EQ(config.grid_n, 100);
    EXPECT_EQ(config.ensemble.paths, 500u);

    EXPECT_THROW(wiener::parse_config_text("not json"), wiener::ConfigError);
    EXPECT_THROW(wiener::parse_config_text(R"({"horizon": -1})"), wiener::ConfigError);
    EXPECT_THROW(wiener::parse_config_text(R"({"grid_n": 1})"), wiener::ConfigError);
    // both kernel and cost present
    EXPECT_THROW(wiener::parse_config_text(R"({
        "problem": {"kernel": {"type": "deterministic", "poly_t": [1.0]},
                     "cost": {"g": [0.0, 1.0]}}
    })"),
                 wiener::ConfigError);
}

TEST(Config, EchoRoundTrips) {
    const std::string text = R"({
        "problem": {"cost": {"g": [0.0, 1.0], "G": []}},
        "horizon": 2.0, "grid_n": 64,
        "ensemble": {"paths": 100, "seed": 3},
        "outputs": {"directory": "somewhere", "emit_paths": false, "emit_xtilde": 2}
    })";
    const wiener::RunConfig config = wiener::parse_config_text(text);
    const wiener::Json echo = wiener::echo_config(config);
    const wiener::RunConfig reparsed = wiener::parse_config(echo);
    EXPECT_EQ(wiener::echo_config(reparsed).dump(), echo.dump());
}

TEST(Cli, KernelCommandWritesDerivation) {
    const fs::path dir = fresh_dir("kernel");
    const fs::path config = dir / "config.json";
    write_file(config, R"({
        "problem": {"cost": {"g": [0.0, 1.0], "G": []}},
        "horizon": 1.0, "grid_n": 200,
        "ensemble": {"paths": 2000, "seed": 9}
    })");
    const RunResult run =
        run_cli("kernel --config " + config.string() + " --out " + dir.string());
    ASSERT_EQ(run.exit_code, 0) << run.output;

    const json kernel = json::parse(read_file(dir / "kernel.json"));
    // f(s, x) = 1 - s
    ASSERT_EQ(kernel["type"], "space_poly");
    const auto coeffs = kernel["coeffs"][0].get<std::vector<double>>();
    ASSERT_EQ(coeffs.size(), 2u);
    EXPECT_NEAR(coeffs[0], 1.0, 1e-14);
    EXPECT_NEAR(coeffs[1], -1.0, 1e-14);
    EXPECT_NEAR(kernel["mean_c"].get<double>(), 0.0, 1e-14);

    const json residual = json::parse(read_file(dir / "residual.json"));
    EXPECT_LT(residual["residual_rms"].get<double>(), 0.1);
}

TEST(Cli, KernelCubicCarriesDiscrepancyNote) {
    const fs::path dir = fresh_dir("kernel_cubic");
    const fs::path config = dir / "config.json";
    write_file(config, R"({
        "problem": {"cost": {"g": [0.0, 0.0, 0.0, 1.0], "G": []}},
        "horizon": 1.0, "grid_n": 100,
        "ensemble": {"paths": 500, "seed": 9}
    })");
    const RunResult run =
        run_cli("kernel --config " + config.string() + " --out " + dir.string());
    ASSERT_EQ(run.exit_code, 0) << run.output;
    const json kernel = json::parse(read_file(dir / "kernel.json"));
    const std::string log = kernel["derivation_log"].get<std::string>();
    EXPECT_NE(log.find("does not"), std::string::npos);
}

TEST(Cli, MissingProblemSpecExitsTwo) {
    const fs::path dir = fresh_dir("missing");
    const fs::path config = dir / "config.json";
    write_file(config, R"({"horizon": 1.0, "grid_n": 64})");
    const RunResult run =
        run_cli("kernel --config " + config.string() + " --out " + dir.string());
    EXPECT_EQ(run.exit_code, 2);
    EXPECT_NE(run.output.find("config error"), std::string::npos);
}

TEST(Cli, SolveIdentityKernel) {
    const fs::path dir = fresh_dir("solve");
    const fs::path config = dir / "config.json";
    write_file(config, R"({
        "problem": {"kernel": {"type": "space_poly", "coeffs": [[0.0], [1.0]]}},
        "horizon": 1.0, "grid_n": 400,
        "ensemble": {"paths": 2000, "seed": 11}
    })");
    const RunResult run =
        run_cli("solve --config " + config.string() + " --out " + dir.string());
    ASSERT_EQ(run.exit_code, 0) << run.output;
    const json report = json::parse(read_file(dir / "report.json"));
    EXPECT_NEAR(report["action"].get<double>(), 0.25, 1e-8);
    EXPECT_NEAR(report["slope0"].get<double>(), 0.0, 1e-8);
    EXPECT_TRUE(report["audit"]["joint_convexity_ok"].get<bool>());

    std::ifstream csv(dir / "solution.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "t,q,qdot");
}

TEST(Cli, OmReportsCrossRouteGap) {
    const fs::path dir = fresh_dir("om");
    const fs::path config = dir / "config.json";
    write_file(config, R"({
        "problem": {"kernel": {"type": "deterministic", "poly_t": [1.0]}},
        "horizon": 1.0, "grid_n": 100,
        "ensemble": {"paths": 2000, "seed": 13},
        "mc_minimizer": {"steps": 800, "learn_rate": 0.1, "init": "zero"}
    })");
    ASSERT_EQ(run_cli("solve --config " + config.string() + " --out " + dir.string()).exit_code,
              0);
    const RunResult om = run_cli("om --config " + config.string() + " --out " + dir.string());
    ASSERT_EQ(om.exit_code, 0) << om.output;
    const json report = json::parse(read_file(dir / "om_report.json"));
    ASSERT_FALSE(report["cross_route_gap"].is_null());
    EXPECT_LT(report["cross_route_gap"].get<double>(), 0.05);
}

TEST(Cli, PenaltyMixture) {
    const fs::path dir = fresh_dir("penalty");
    const fs::path config = dir / "config.json";
    write_file(config, R"({
        "drift": {"type": "mixture", "components": [[0.0, 1.0], [0.0, -1.0]],
                   "probs": [0.5, 0.5]},
        "horizon": 1.0, "grid_n": 100,
        "ensemble": {"paths": 10000, "seed": 17}
    })");
    const RunResult run =
        run_cli("penalty --config " + config.string() + " --out " + dir.string());
    ASSERT_EQ(run.exit_code, 0) << run.output;
    const json report = json::parse(read_file(dir / "penalty.json"));
    EXPECT_NEAR(report["value"].get<double>(), 0.5, 0.03);
}

TEST(Cli, SimulateEmitsBlowupStatistics) {
    const fs::path dir = fresh_dir("simulate");
    const fs::path config = dir / "config.json";
    write_file(config, R"({
        "problem": {"kernel": {"type": "space_poly", "coeffs": [[0.0], [0.0], [1.0]]}},
        "horizon": 1.8, "grid_n": 360,
        "ensemble": {"paths": 1000, "seed": 19},
        "outputs": {"emit_xtilde": 3}
    })");
    const RunResult run =
        run_cli("simulate --config " + config.string() + " --out " + dir.string());
    ASSERT_EQ(run.exit_code, 0) << run.output;
    const json blowup = json::parse(read_file(dir / "blowup.json"));
    EXPECT_GT(blowup["diverged"].get<int>(), 0);
    std::ifstream csv(dir / "xtilde.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "t,x0,x1,x2");
}

TEST(Cli, SolveRerunsAreByteIdentical) {
    const fs::path dir_a = fresh_dir("repro_a");
    const fs::path dir_b = fresh_dir("repro_b");
    const fs::path config = dir_a / "config.json";
    const std::string config_text = R"({
        "problem": {"kernel": {"type": "space_poly", "coeffs": [[0.0], [0.0], [1.0]]}},
        "horizon": 1.0, "grid_n": 200,
        "ensemble": {"paths": 2000, "seed": 23}
    })";
    write_file(config, config_text);
    ASSERT_EQ(run_cli("solve --config " + config.string() + " --out " + dir_a.string()).exit_code,
              0);
    write_file(dir_b / "config.json", config_text);
    ASSERT_EQ(run_cli("solve --config " + (dir_b / "config.json").string() + " --out " +
                      dir_b.string())
                  .exit_code,
              0);
    // the echoed config mentions the output directory; compare the rest
    json a = json::parse(read_file(dir_a / "report.json"));
    json b = json::parse(read_file(dir_b / "report.json"));
    a["config"]["outputs"].erase("directory");
    b["config"]["outputs"].erase("directory");
    EXPECT_EQ(a.dump(), b.dump());
    EXPECT_EQ(read_file(dir_a / "solution.csv"), read_file(dir_b / "solution.csv"));
}

TEST(Cli, EchoedConfigReproducesTheRun) {
    const fs::path dir = fresh_dir("echo");
    const fs::path config = dir / "config.json";
    write_file(config, R"({
        "problem": {"kernel": {"type": "deterministic", "poly_t": [1.0, 0.5]}},
        "horizon": 1.0, "grid_n": 150,
        "ensemble": {"paths": 1000, "seed": 29}
    })");
    ASSERT_EQ(run_cli("solve --config " + config.string() + " --out " + dir.string()).exit_code,
              0);
    const json report = json::parse(read_file(dir / "report.json"));
    const fs::path dir2 = fresh_dir("echo2");
    write_file(dir2 / "config.json", report["config"].dump());
    ASSERT_EQ(run_cli("solve --config " + (dir2 / "config.json").string() + " --out " +
                      dir2.string())
                  .exit_code,
              0);
    EXPECT_EQ(read_file(dir / "solution.csv"), read_file(dir2 / "solution.csv"));
}

TEST(Cli, ValidateRerunsAreByteIdentical) {
    const fs::path dir_a = fresh_dir("validate_a");
    const fs::path dir_b = fresh_dir("validate_b");
    ASSERT_EQ(run_cli("validate --out " + dir_a.string()).exit_code, 0);
    ASSERT_EQ(run_cli("validate --out " + dir_b.string()).exit_code, 0);
    EXPECT_EQ(read_file(dir_a / "validate_report.json"),
              read_file(dir_b / "validate_report.json"));
}

TEST(Cli, ValidateCorruptionHookSurfacesFailure) {
    // full validate runs are exercised by the acceptance suite; here only the
    // failure path, forced through the documented test hook
    const fs::path dir = fresh_dir("validate_corrupt");
    const RunResult run =
        run_cli("validate --out " + dir.string(), "WIENER_VALIDATE_CORRUPT=3");
    EXPECT_EQ(run.exit_code, 1);
    EXPECT_NE(run.output.find("[FAIL]  3"), std::string::npos);
    const json report = json::parse(read_file(dir / "validate_report.json"));
    EXPECT_FALSE(report["all_pass"].get<bool>());
    bool found = false;
    for (const auto& criterion : report["criteria"])
        if (criterion["id"].get<int>() == 3) {
            EXPECT_FALSE(criterion["pass"].get<bool>());
            found = true;
        }
    EXPECT_TRUE(found);
}

TEST(Cli, ShootingFailureExitsOne) {
    const fs::path dir = fresh_dir("shoot_fail");
    const fs::path config = dir / "config.json";
    // unreachable fixed endpoint inside a deliberately tiny slope bracket
    write_file(config, R"({
        "problem": {"kernel": {"type": "space_poly", "coeffs": [[0.0], [0.0], [1.0]]}},
        "horizon": 1.0, "grid_n": 100,
        "ensemble": {"paths": 100, "seed": 3},
        "solver": {"bc": "fixed", "terminal": 5.0, "slope_bracket": 0.25}
    })");
    const RunResult run =
        run_cli("solve --config " + config.string() + " --out " + dir.string());
    EXPECT_EQ(run.exit_code, 1);
    EXPECT_NE(run.output.find("numerical failure"), std::string::npos);
    EXPECT_NE(run.output.find("no sign change"), std::string::npos);
}

TEST(Cli, UnknownSubcommandExitsTwo) {
    const RunResult run = run_cli("frobnicate");
    EXPECT_EQ(run.exit_code, 2);
}
