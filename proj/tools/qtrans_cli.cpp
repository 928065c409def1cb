// Command-line front end: verification suites, cost classification, the
// continuation solver, the transform seed builder, and post-hoc diagnostics.
//
// Exit codes: 0 pass, 1 numeric failure, 2 configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "qtrans/config.hpp"
#include "qtrans/estimates.hpp"
#include "qtrans/io.hpp"
#include "qtrans/verification.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qtrans;

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_override;
    std::string grid_override;
    unsigned long long seed_override = 0;
    bool has_seed_override = false;
};

RunConfig load(const CliOptions& cli) {
    RunConfig rc = parse_config(cli.config_path);
    if (!cli.out_override.empty()) rc.output_dir = cli.out_override;
    if (cli.has_seed_override) rc.seed = cli.seed_override;
    if (!cli.grid_override.empty()) {
        int nr = 0, nt = 0;
        if (std::sscanf(cli.grid_override.c_str(), "%dx%d", &nr, &nt) != 2)
            throw ConfigError("--grid expects NRxNT, e.g. 33x64");
        try {
            rc.dims = GridDims(nr, nt);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("--grid: ") + e.what());
        }
    }
    return rc;
}

fs::path prepare_output_dir(const RunConfig& rc) {
    const fs::path dir(rc.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    // probe writability explicitly; a read-only directory must exit 2
    const fs::path probe = dir / ".write_probe";
    std::ofstream test(probe);
    if (!test) throw ConfigError("output directory not writable: " + rc.output_dir);
    test.close();
    fs::remove(probe, ec);
    return dir;
}

json witness_json(const MtwSample& s) {
    return json{{"x", {s.x[0], s.x[1]}},
                {"y", {s.y[0], s.y[1]}},
                {"xi", {s.xi[0], s.xi[1]}},
                {"eta", {s.eta[0], s.eta[1]}}};
}

int cmd_verify(const RunConfig& rc) {
    const fs::path dir = prepare_output_dir(rc);
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(rc.seed);
    const std::vector<SuiteResult> results = run_verification_suites(rng, rc.verify);

    bool all_pass = true;
    json suites = json::array();
    for (const auto& r : results) {
        all_pass = all_pass && r.pass;
        suites.push_back(json{{"suite", r.suite},
                              {"samples", r.samples},
                              {"worst_margin", r.worst},
                              {"threshold", r.threshold},
                              {"pass", r.pass},
                              {"worst_sample", r.worst_sample}});
        std::printf("[%s] %-28s worst=%.3e samples=%d\n", r.pass ? "PASS" : "FAIL",
                    r.suite.c_str(), r.worst, r.samples);
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string summary_path = (dir / "verify_summary.json").string();
    json summary{{"command", "verify"},
                 {"seed", rc.seed},
                 {"suites", suites},
                 {"pass", all_pass},
                 {"manifest", {summary_path}},
                 {"timings", {{"total_s", elapsed}}}};
    write_json(summary_path, summary);
    return all_pass ? 0 : 1;
}

int cmd_classify(const RunConfig& rc) {
    if (!rc.cost) throw ConfigError("classify: missing 'cost' section");
    if (!rc.source || !rc.target) throw ConfigError("classify: missing 'domains' section");
    const fs::path dir = prepare_output_dir(rc);
    const auto start = std::chrono::steady_clock::now();
    const CostModel model = build_cost(*rc.cost, *rc.source, *rc.target);
    std::mt19937_64 rng(rc.seed);
    const A3Classification c = classify_a3(model, rc.classify_samples,
                                           rc.source->bounding_box(), rc.target->bounding_box(), rng);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string summary_path = (dir / "classify_summary.json").string();
    json summary{{"command", "classify"},
                 {"seed", rc.seed},
                 {"cost", model.name()},
                 {"classification", to_string(c.label)},
                 {"min_value", c.min_value},
                 {"witness", witness_json(c.witness)},
                 {"samples", c.samples},
                 {"a2_min_abs_det", c.min_abs_det_xy},
                 {"a1_max_iterations", c.y_map_max_iterations},
                 {"manifest", {summary_path}},
                 {"timings", {{"total_s", elapsed}}}};
    write_json(summary_path, summary);
    std::printf("classification: %s (min value %.3e over %d samples)\n", to_string(c.label),
                c.min_value, c.samples);
    return 0;
}

int cmd_solve(const RunConfig& rc) {
    const fs::path dir = prepare_output_dir(rc);
    const auto start = std::chrono::steady_clock::now();
    const ProblemSpec spec = build_problem(rc);
    const PolarGrid grid(spec.source, spec.dims);

    const std::string summary_path = (dir / "solve_summary.json").string();
    json summary{{"command", "solve"}, {"seed", rc.seed}};

    ContinuationState state;
    std::string failure_stage;
    try {
        state = continuation_run(grid, spec, rc.seed);
    } catch (const ContinuationStall& e) {
        failure_stage = "continuation";
        summary["error"] = e.what();
    } catch (const NumericError& e) {
        failure_stage = "newton";
        summary["error"] = e.what();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    if (!failure_stage.empty()) {
        summary["pass"] = false;
        summary["failure_stage"] = failure_stage;
        summary["manifest"] = {summary_path};
        write_json(summary_path, summary);
        std::printf("solve failed at stage: %s\n", failure_stage.c_str());
        return 1;
    }

    // emit fields and diagnostics
    detail::HomotopyContext ctx;
    ctx.t = 1.0;
    ctx.u0 = &state.u0;
    ctx.f0 = &state.f0;
    ctx.target_t = spec.target;
    const Eigen::VectorXd res = residual(grid, spec, ctx, state.u);
    const std::vector<double> lmw = lambda_min_field(grid, spec, state.u);
    const std::string field_path = (dir / "solution_field.csv").string();
    write_field_csv(field_path, grid, state.u, res, lmw);

    const DiagnosticsReport diag = bounds_report(grid, spec, state.u);
    const std::string diag_path = (dir / "diagnostics.json").string();
    write_json(diag_path,
               json{{"obliqueness_min", diag.obliqueness_min},
                    {"urbas_residual_max", diag.urbas_residual_max},
                    {"sup_u", diag.sup_u},
                    {"inf_u", diag.inf_u},
                    {"sup_hess_interior", diag.sup_hess_interior},
                    {"sup_hess_boundary", diag.sup_hess_boundary},
                    {"interior_to_boundary_ratio", diag.interior_to_boundary_ratio},
                    {"image_hausdorff", diag.image_hausdorff},
                    {"min_lambda_w", diag.min_lambda_w},
                    {"singular_w", diag.singular_w},
                    {"mesh_parameter", grid.mesh_parameter()}});

    json newton = json::array();
    for (const auto& recd : state.newton_history)
        newton.push_back(json{{"t", recd.t},
                              {"iterations", recd.iterations},
                              {"backtracks", recd.backtracks},
                              {"initial_residual", recd.initial_residual},
                              {"final_residual", recd.final_residual}});

    const bool admissible = diag.min_lambda_w >= spec.tol.admissibility_floor;
    const bool oblique = diag.obliqueness_min > 0.0;
    const bool pass = admissible && oblique;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    summary["pass"] = pass;
    if (!pass) summary["failure_stage"] = "diagnostics";
    summary["t_history"] = state.t_history;
    summary["newton"] = newton;
    summary["final_residual"] = res.lpNorm<Eigen::Infinity>();
    summary["jacobian_check_rel_err"] = state.jacobian_check_rel_err;
    summary["grid"] = {{"nr", spec.dims.nr}, {"ntheta", spec.dims.ntheta}};
    summary["manifest"] = {summary_path, field_path, diag_path};
    summary["timings"] = {{"total_s", elapsed}};
    write_json(summary_path, summary);
    std::printf("solve %s: t=1 reached, final residual %.3e, obliqueness_min %.6f\n",
                pass ? "pass" : "FAIL (diagnostics)", res.lpNorm<Eigen::Infinity>(),
                diag.obliqueness_min);
    return pass ? 0 : 1;
}

int cmd_transform(const RunConfig& rc) {
    if (!rc.cost) throw ConfigError("transform: missing 'cost' section");
    if (!rc.source || !rc.target) throw ConfigError("transform: missing 'domains' section");
    const fs::path dir = prepare_output_dir(rc);
    const auto start = std::chrono::steady_clock::now();
    const CostModel model = build_cost(*rc.cost, *rc.source, *rc.target);
    const PolarGrid grid(*rc.source, rc.dims);

    const TargetBall ball{rc.transform_center, rc.transform_radius};
    auto psi = [&ball](const Eigen::VectorXd& y) {
        const double q =
            ball.radius * ball.radius - (y - Eigen::VectorXd(ball.center)).squaredNorm();
        return -std::sqrt(std::max(0.0, q));
    };

    const std::string field_path = (dir / "transform_field.csv").string();
    std::ofstream out(field_path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + field_path);
    out << "r_index,theta_index,x,y,u0,contact_x,contact_y,contact_dist\n";
    double max_contact = 0.0;
    double value_at_center = 0.0;
    bool center_seen = false;
    const int nt = grid.dims().ntheta;
    for (int id = 0; id < grid.node_count(); ++id) {
        const Eigen::Vector2d x = grid.position(id);
        const CTransformResult ct = c_transform(model, ball, psi, x, rc.transform_grid_radial,
                                                rc.transform_grid_angular);
        const double dist = (ct.contact - Eigen::VectorXd(ball.center)).norm();
        max_contact = std::max(max_contact, dist);
        if ((x - rc.transform_center).norm() < 1e-12) {
            value_at_center = ct.value;
            center_seen = true;
        }
        const int ri = (id == 0) ? 0 : (id - 1) / nt + 1;
        const int ti = (id == 0) ? 0 : (id - 1) % nt;
        out << ri << ',' << ti << ',' << io::fmt(x[0]) << ',' << io::fmt(x[1]) << ','
            << io::fmt(ct.value) << ',' << io::fmt(ct.contact[0]) << ',' << io::fmt(ct.contact[1])
            << ',' << io::fmt(dist) << '\n';
    }
    out.close();

    const bool image_inside = max_contact <= ball.radius + 1e-12;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string summary_path = (dir / "transform_summary.json").string();
    json summary{{"command", "transform"},
                 {"seed", rc.seed},
                 {"ball", {{"center", {ball.center[0], ball.center[1]}}, {"radius", ball.radius}}},
                 {"max_contact_radius", max_contact},
                 {"image_inside_ball", image_inside},
                 {"pass", image_inside},
                 {"manifest", {summary_path, field_path}},
                 {"timings", {{"total_s", elapsed}}}};
    if (center_seen) summary["value_at_ball_center"] = value_at_center;
    write_json(summary_path, summary);
    return image_inside ? 0 : 1;
}

int cmd_diagnose(const RunConfig& rc) {
    if (rc.field_path.empty()) throw ConfigError("diagnose: missing 'field' path in config");
    const fs::path dir = prepare_output_dir(rc);
    const ProblemSpec spec = build_problem(rc);
    const PolarGrid grid(spec.source, spec.dims);
    const Eigen::VectorXd u = read_field_csv(rc.field_path, grid);

    const DiagnosticsReport diag = bounds_report(grid, spec, u);
    const ObliquenessReport ob = obliqueness_report(grid, spec, u);

    const std::string diag_path = (dir / "diagnostics.json").string();
    const std::string table_path = (dir / "obliqueness_nodes.csv").string();
    std::ofstream table(table_path, std::ios::binary);
    if (!table) throw ConfigError("cannot write " + table_path);
    table << "node,beta_dot_gamma,chi\n";
    for (size_t k = 0; k < ob.node_ids.size(); ++k)
        table << ob.node_ids[k] << ',' << io::fmt(ob.inner_products[k]) << ','
              << io::fmt(ob.chi[k]) << '\n';
    table.close();

    write_json(diag_path,
               json{{"command", "diagnose"},
                    {"field", rc.field_path},
                    {"obliqueness_min", diag.obliqueness_min},
                    {"urbas_residual_max", diag.urbas_residual_max},
                    {"sup_u", diag.sup_u},
                    {"inf_u", diag.inf_u},
                    {"sup_hess_interior", diag.sup_hess_interior},
                    {"sup_hess_boundary", diag.sup_hess_boundary},
                    {"interior_to_boundary_ratio", diag.interior_to_boundary_ratio},
                    {"image_hausdorff", diag.image_hausdorff},
                    {"min_lambda_w", diag.min_lambda_w},
                    {"singular_w", diag.singular_w},
                    {"manifest", {diag_path, table_path}}});
    std::printf("diagnostics written: obliqueness_min %.6f, min_lambda_w %.3e\n",
                diag.obliqueness_min, diag.min_lambda_w);
    return (diag.obliqueness_min > 0.0 && !diag.singular_w) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hessian-quotient transport: verification suites and a 2-D continuation solver"};
    app.require_subcommand(1);
    app.fallthrough(); // allow global flags after the subcommand name

    CliOptions cli;
    app.add_option("--config", cli.config_path, "path to the run-configuration JSON")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--out", cli.out_override, "override the output directory");
    auto* seed_opt = app.add_option("--seed", cli.seed_override, "override the RNG seed");
    app.add_option("--grid", cli.grid_override, "override the grid as NRxNT");

    auto* verify = app.add_subcommand("verify", "run the algebra/operator property suites");
    auto* classify = app.add_subcommand("classify", "classify the cost's fourth-order condition");
    auto* solve = app.add_subcommand("solve", "run the continuation solver");
    auto* transform = app.add_subcommand("transform", "evaluate the transform seed field");
    auto* diagnose = app.add_subcommand("diagnose", "run the estimates on a saved field");

    CLI11_PARSE(app, argc, argv);
    cli.has_seed_override = seed_opt->count() > 0;

    try {
        const RunConfig rc = load(cli);
        if (verify->parsed()) return cmd_verify(rc);
        if (classify->parsed()) return cmd_classify(rc);
        if (solve->parsed()) return cmd_solve(rc);
        if (transform->parsed()) return cmd_transform(rc);
        if (diagnose->parsed()) return cmd_diagnose(rc);
        std::fprintf(stderr, "no subcommand selected\n");
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
}
