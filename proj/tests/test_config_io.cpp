#include "qtrans/config.hpp"
#include "qtrans/io.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace qtrans;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << body;
    return p.string();
}

const char* kFullConfig = R"({
  "seed": 7,
  "output_dir": "out/x",
  "cost": {"kind": "quadratic"},
  "domains": {
    "source": {"kind": "disc", "radius": 1.0, "center": [0.0, 0.0]},
    "target": {"kind": "ellipse", "a": 2.0, "b": 1.0, "center": [0.1, -0.2]}
  },
  "inhomogeneity": {"factors": [{"kind": "const", "value": 0.5}, {"kind": "exp-z-minus-x2"}]},
  "quotient": {"n": 2, "l": 1},
  "grid": {"nr": 17, "ntheta": 32},
  "tolerances": {"newton": 1e-8}
})";

} // namespace

TEST(Config, ParsesFullDocument) {
    const RunConfig rc = parse_config(write_temp("qt_full.json", kFullConfig));
    EXPECT_EQ(rc.seed, 7u);
    EXPECT_EQ(rc.output_dir, "out/x");
    ASSERT_TRUE(rc.cost.has_value());
    EXPECT_EQ(rc.cost->kind, "quadratic");
    ASSERT_TRUE(rc.source.has_value());
    EXPECT_EQ(rc.quotient.n, 2);
    EXPECT_EQ(rc.quotient.l, 1);
    EXPECT_EQ(rc.dims.nr, 17);
    EXPECT_DOUBLE_EQ(rc.tol.newton, 1e-8);
    const ProblemSpec spec = build_problem(rc);
    EXPECT_NO_THROW(validate_problem(spec));
}

TEST(Config, RejectsUnknownKeys) {
    const std::string body = R"({"seed": 1, "bogus_key": 2})";
    EXPECT_THROW((void)parse_config(write_temp("qt_unknown.json", body)), ConfigError);
    const std::string nested = R"({"grid": {"nr": 17, "ntheta": 32, "extra": 1}})";
    EXPECT_THROW((void)parse_config(write_temp("qt_unknown2.json", nested)), ConfigError);
}

TEST(Config, RejectsBadQuotient) {
    const std::string body = R"({"quotient": {"n": 1, "l": 0}})";
    EXPECT_THROW((void)parse_config(write_temp("qt_badq.json", body)), ConfigError);
    const std::string body2 = R"({"quotient": {"n": 3, "l": 3}})";
    EXPECT_THROW((void)parse_config(write_temp("qt_badq2.json", body2)), ConfigError);
}

TEST(Config, RejectsMalformedJson) {
    EXPECT_THROW((void)parse_config(write_temp("qt_bad.json", "{ not json")), ConfigError);
    EXPECT_THROW((void)parse_config("/nonexistent/path.json"), ConfigError);
}

TEST(Config, MissingSectionsSurfaceInBuildProblem) {
    const std::string body = R"({"seed": 3})";
    const RunConfig rc = parse_config(write_temp("qt_minimal.json", body));
    EXPECT_THROW((void)build_problem(rc), ConfigError);
}

TEST(Config, DomainKinds) {
    const std::string body = R"({
      "domains": {
        "source": {"kind": "radial-fourier", "base": 1.0, "cos": [0.0, 0.0, 0.1]},
        "target": {"kind": "disc", "radius": 2.0}
      }
    })";
    const RunConfig rc = parse_config(write_temp("qt_dom.json", body));
    ASSERT_TRUE(rc.source.has_value());
    EXPECT_NEAR(rc.source->radial().rho(0.0), 1.1, 1e-14);
    const std::string bad = R"({"domains": {"source": {"kind": "square"}, "target": {"kind": "disc", "radius": 1.0}}})";
    EXPECT_THROW((void)parse_config(write_temp("qt_dom_bad.json", bad)), ConfigError);
}

TEST(Inhomogeneity, WhitelistProduct) {
    const Inhomogeneity b = build_inhomogeneity(
        {BFactor{"const", 0.5}, BFactor{"exp-z-minus-x2", 1.0}});
    const Eigen::Vector2d x(0.6, -0.8);
    EXPECT_NEAR(b.value(x, 2.0), 0.5 * std::exp(2.0 - 1.0), 1e-14);
    EXPECT_NEAR(b.dz(x, 2.0), b.value(x, 2.0), 1e-14);
    const Inhomogeneity two = build_inhomogeneity({BFactor{"exp-z", 1.0}, BFactor{"exp-z", 1.0}});
    EXPECT_NEAR(two.value(x, 1.0), std::exp(2.0), 1e-12);
    EXPECT_NEAR(two.dz(x, 1.0), 2.0 * std::exp(2.0), 1e-12);
}

TEST(Inhomogeneity, RejectsBadFactors) {
    EXPECT_THROW((void)build_inhomogeneity({}), ConfigError);
    EXPECT_THROW((void)build_inhomogeneity({BFactor{"const", -1.0}}), ConfigError);
    EXPECT_THROW((void)build_inhomogeneity({BFactor{"sin-z", 1.0}}), ConfigError);
}

TEST(FieldCsv, RoundTrip) {
    const DomainSpec dom(Eigen::Vector2d::Zero(), RadialFunction::disc(1.0));
    const PolarGrid grid(dom, GridDims(9, 16));
    const RunConfig rc = parse_config(write_temp("qt_full2.json", kFullConfig));
    ProblemSpec spec = build_problem(rc);

    Eigen::VectorXd u(grid.node_count());
    for (int id = 0; id < grid.node_count(); ++id)
        u[id] = grid.position(id).squaredNorm() + 0.123456789012345;
    const Eigen::VectorXd res = Eigen::VectorXd::Zero(grid.node_count());
    const std::vector<double> lmw(static_cast<size_t>(grid.node_count()), 1.0);

    const std::string path = (fs::temp_directory_path() / "qt_field.csv").string();
    write_field_csv(path, grid, u, res, lmw);
    const Eigen::VectorXd back = read_field_csv(path, grid);
    EXPECT_LE((u - back).lpNorm<Eigen::Infinity>(), 0.0); // full-precision round trip
}

TEST(FieldCsv, RejectsWrongGrid) {
    const DomainSpec dom(Eigen::Vector2d::Zero(), RadialFunction::disc(1.0));
    const PolarGrid small(dom, GridDims(9, 16));
    const PolarGrid big(dom, GridDims(17, 32));
    Eigen::VectorXd u = Eigen::VectorXd::Zero(small.node_count());
    const Eigen::VectorXd res = u;
    const std::vector<double> lmw(static_cast<size_t>(small.node_count()), 1.0);
    const std::string path = (fs::temp_directory_path() / "qt_field2.csv").string();
    write_field_csv(path, small, u, res, lmw);
    EXPECT_THROW((void)read_field_csv(path, big), NumericError);
}
