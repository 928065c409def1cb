// End-to-end tests of the command-line binary: exit codes, summary schema,
// reproducibility, and the harness self-check.

#include <json.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = QTRANS_CLI_PATH;
const std::string kConfigDir = QTRANS_CONFIG_DIR;

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string write_temp(const std::string& name, const std::string& body) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << body;
    return p.string();
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    json j;
    in >> j;
    return j;
}

// small sample counts so the whole file stays fast
std::string fast_verify_config(const std::string& out_dir, bool inject_bug = false) {
    return std::string(R"({
      "seed": 11,
      "output_dir": ")") +
           out_dir + R"(",
      "samples": {"identities": 200, "derivatives": 60, "inequalities": 200,
                   "contractions": 40, "dims": [2, 3, 4]},
      "inject_bug": )" +
           (inject_bug ? "true" : "false") + "\n}";
}

} // namespace

TEST(Cli, VerifyDefaultConfigPasses) {
    const fs::path out = fs::temp_directory_path() / "qt_cli_verify";
    const std::string cfg = write_temp("qt_cli_v.json", fast_verify_config(out.string()));
    ASSERT_EQ(run("--config " + cfg + " verify"), 0);
    const json summary = load_json((out / "verify_summary.json").string());
    EXPECT_TRUE(summary.at("pass").get<bool>());
    EXPECT_GE(summary.at("suites").size(), 8u);
    for (const auto& s : summary.at("suites")) EXPECT_TRUE(s.at("pass").get<bool>());
    // every emitted path appears in the manifest
    EXPECT_FALSE(summary.at("manifest").empty());
}

TEST(Cli, InjectedBugFailsWithNamedSuite) {
    const fs::path out = fs::temp_directory_path() / "qt_cli_bug";
    const std::string cfg = write_temp("qt_cli_bug.json", fast_verify_config(out.string(), true));
    ASSERT_EQ(run("--config " + cfg + " verify"), 1);
    const json summary = load_json((out / "verify_summary.json").string());
    EXPECT_FALSE(summary.at("pass").get<bool>());
    bool found = false;
    for (const auto& s : summary.at("suites"))
        if (!s.at("pass").get<bool>()) {
            found = true;
            EXPECT_EQ(s.at("suite").get<std::string>(), "esf-identities");
        }
    EXPECT_TRUE(found);
}

TEST(Cli, VerifyReproducible) {
    const fs::path out_a = fs::temp_directory_path() / "qt_cli_rep_a";
    const fs::path out_b = fs::temp_directory_path() / "qt_cli_rep_b";
    const std::string cfg_a = write_temp("qt_cli_rep_a.json", fast_verify_config(out_a.string()));
    ASSERT_EQ(run("--config " + cfg_a + " verify"), 0);
    ASSERT_EQ(run("--config " + cfg_a + " verify --out " + out_b.string()), 0);
    json a = load_json((out_a / "verify_summary.json").string());
    json b = load_json((out_b / "verify_summary.json").string());
    a.erase("timings");
    b.erase("timings");
    a.erase("manifest"); // manifest carries the differing output paths
    b.erase("manifest");
    EXPECT_EQ(a.dump(), b.dump());
}

TEST(Cli, BadSchemaExitsTwo) {
    const std::string cfg = write_temp("qt_cli_bad.json", R"({"quotient": {"n": 1, "l": 0}})");
    EXPECT_EQ(run("--config " + cfg + " verify"), 2);
    const std::string cfg2 = write_temp("qt_cli_bad2.json", R"({"unknown-top": 3})");
    EXPECT_EQ(run("--config " + cfg2 + " verify"), 2);
}

TEST(Cli, MissingCostBlockExitsTwo) {
    const std::string cfg = write_temp("qt_cli_nocost.json", R"({
      "output_dir": "/tmp/qt_cli_nocost",
      "domains": {"source": {"kind": "disc", "radius": 1.0},
                   "target": {"kind": "disc", "radius": 1.0}}
    })");
    EXPECT_EQ(run("--config " + cfg + " classify"), 2);
}

TEST(Cli, UnwritableOutputDirExitsTwo) {
    // /proc rejects directory creation for every user, root included
    const std::string cfg = write_temp("qt_cli_ro.json", R"({
      "seed": 1, "output_dir": "/proc/qt_forbidden",
      "samples": {"identities": 10, "derivatives": 5, "inequalities": 10,
                   "contractions": 5, "dims": [2]}
    })");
    EXPECT_EQ(run("--config " + cfg + " verify"), 2);
}

TEST(Cli, UnreachableToleranceFailsAtNewtonStage) {
    const fs::path out = fs::temp_directory_path() / "qt_cli_tight";
    const std::string cfg = write_temp("qt_cli_tight.json", std::string(R"({
      "seed": 1, "output_dir": ")") + out.string() + R"(",
      "cost": {"kind": "quadratic"},
      "domains": {"source": {"kind": "disc", "radius": 1.0},
                   "target": {"kind": "disc", "radius": 1.0}},
      "inhomogeneity": {"factors": [{"kind": "const", "value": 0.5}, {"kind": "exp-z-minus-x2"}]},
      "grid": {"nr": 9, "ntheta": 16},
      "tolerances": {"newton": 1e-16}
    })");
    ASSERT_EQ(run("--config " + cfg + " solve"), 1);
    const json summary = load_json((out / "solve_summary.json").string());
    EXPECT_FALSE(summary.at("pass").get<bool>());
    EXPECT_EQ(summary.at("failure_stage").get<std::string>(), "newton");
}

TEST(Cli, SolveThenDiagnoseRoundTrip) {
    const fs::path out = fs::temp_directory_path() / "qt_cli_solve";
    const std::string mcfg = (fs::path(kConfigDir) / "manufactured.json").string();
    ASSERT_EQ(run("--config " + mcfg + " solve --out " + out.string() + " --grid 17x32"), 0);
    const json summary = load_json((out / "solve_summary.json").string());
    EXPECT_TRUE(summary.at("pass").get<bool>());
    EXPECT_LE(summary.at("jacobian_check_rel_err").get<double>(), 1e-4);
    for (const auto& p : summary.at("manifest")) EXPECT_TRUE(fs::exists(p.get<std::string>()));

    const fs::path out2 = fs::temp_directory_path() / "qt_cli_diag";
    const std::string dcfg = write_temp("qt_cli_diag.json", std::string(R"({
      "seed": 1, "output_dir": ")") + out2.string() + R"(",
      "cost": {"kind": "quadratic"},
      "domains": {"source": {"kind": "disc", "radius": 1.0},
                   "target": {"kind": "disc", "radius": 1.0}},
      "inhomogeneity": {"factors": [{"kind": "const", "value": 0.5}, {"kind": "exp-z-minus-x2"}]},
      "grid": {"nr": 17, "ntheta": 32},
      "field": ")" + (out / "solution_field.csv").string() + R"("
    })");
    ASSERT_EQ(run("--config " + dcfg + " diagnose"), 0);
    const json diag = load_json((out2 / "diagnostics.json").string());
    EXPECT_NEAR(diag.at("obliqueness_min").get<double>(), 2.0, 0.1);
    EXPECT_GT(diag.at("min_lambda_w").get<double>(), 0.5);
}

TEST(Cli, ClassifyQuadraticIsWeakOnly) {
    const fs::path out = fs::temp_directory_path() / "qt_cli_classify";
    const std::string cfg = (fs::path(kConfigDir) / "classify_quadratic.json").string();
    ASSERT_EQ(run("--config " + cfg + " classify --out " + out.string()), 0);
    const json summary = load_json((out / "classify_summary.json").string());
    EXPECT_EQ(summary.at("classification").get<std::string>(), "A3w-only");
    EXPECT_LE(std::abs(summary.at("min_value").get<double>()), 1e-10);
}
