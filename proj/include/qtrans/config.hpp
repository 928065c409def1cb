#pragma once

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qtrans/geometry.hpp"
#include "qtrans/solver.hpp"
#include "qtrans/verification.hpp"

// Run-configuration schema: strict JSON parsing (unknown keys rejected) for
// the command-line front end. Parse errors throw ConfigError, which the CLI
// maps to exit code 2.

namespace qtrans {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace cfg {

using nlohmann::json;

inline void require_keys(const json& j, const std::string& where,
                         const std::set<std::string>& allowed,
                         const std::set<std::string>& required = {}) {
    if (!j.is_object()) throw ConfigError(where + ": object expected");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key()))
            throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
    for (const auto& key : required) {
        if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    }
}

inline double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + ": number expected");
    return j.get<double>();
}

inline int integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) throw ConfigError(where + ": integer expected");
    return j.get<int>();
}

inline Eigen::Vector2d point(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": [x, y] expected");
    return Eigen::Vector2d(number(j[0], where), number(j[1], where));
}

} // namespace cfg

/// Cost selection.
struct CostConfig {
    std::string kind = "quadratic"; // quadratic | perturbed-quadratic
    double epsilon = 0.0;
};

/// One factor of the inhomogeneity product.
struct BFactor {
    std::string kind; // const | exp-z | exp-z-minus-x2
    double value = 1.0;
};

/// Parsed run configuration; command handlers consume the sections they need.
struct RunConfig {
    unsigned long long seed = 1;
    std::string output_dir = "out";
    std::optional<CostConfig> cost;
    std::optional<DomainSpec> source;
    std::optional<DomainSpec> target;
    std::vector<BFactor> b_factors;
    QuotientParams quotient{2, 1};
    GridDims dims{33, 64};
    SolverTolerances tol;
    VerifyOptions verify;
    int classify_samples = 1000;
    // transform section
    Eigen::Vector2d transform_center = Eigen::Vector2d::Zero();
    double transform_radius = 0.5;
    int transform_grid_radial = 64;
    int transform_grid_angular = 64;
    // diagnose section
    std::string field_path;
};

namespace cfg {

inline DomainSpec parse_domain(const json& j, const std::string& where) {
    require_keys(j, where,
                 {"kind", "radius", "a", "b", "base", "cos", "sin", "center", "boundary_nodes"},
                 {"kind"});
    const std::string kind = j.at("kind").get<std::string>();
    const Eigen::Vector2d center =
        j.contains("center") ? point(j.at("center"), where + ".center") : Eigen::Vector2d::Zero();
    const int nodes = j.contains("boundary_nodes")
                          ? integer(j.at("boundary_nodes"), where + ".boundary_nodes")
                          : 1024;
    try {
        if (kind == "disc") {
            if (!j.contains("radius")) throw ConfigError(where + ": disc requires 'radius'");
            return DomainSpec(center, RadialFunction::disc(number(j.at("radius"), where)), nodes);
        }
        if (kind == "ellipse") {
            if (!j.contains("a") || !j.contains("b"))
                throw ConfigError(where + ": ellipse requires 'a' and 'b'");
            return DomainSpec(center,
                              RadialFunction::ellipse(number(j.at("a"), where), number(j.at("b"), where)),
                              nodes);
        }
        if (kind == "radial-fourier") {
            if (!j.contains("base")) throw ConfigError(where + ": radial-fourier requires 'base'");
            std::vector<double> cosv, sinv;
            if (j.contains("cos"))
                for (const auto& c : j.at("cos")) cosv.push_back(number(c, where + ".cos"));
            if (j.contains("sin"))
                for (const auto& c : j.at("sin")) sinv.push_back(number(c, where + ".sin"));
            return DomainSpec(center,
                              RadialFunction::fourier(number(j.at("base"), where), cosv, sinv),
                              nodes);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    throw ConfigError(where + ": unknown domain kind '" + kind + "'");
}

} // namespace cfg

/// Builds the evaluator bundle for the declared cost over boxes that bound
/// both domains with margin.
[[nodiscard]] inline CostModel build_cost(const CostConfig& c, const DomainSpec& source,
                                          const DomainSpec& target) {
    const Box bx = source.bounding_box(2.0);
    const Box by = target.bounding_box(2.0);
    if (c.kind == "quadratic") return CostModel::quadratic(bx, by);
    if (c.kind == "perturbed-quadratic") return CostModel::perturbed_quadratic(c.epsilon, bx, by);
    throw ConfigError("cost: unknown kind '" + c.kind + "'");
}

/// Builds the inhomogeneity from the whitelist product. Every factor is
/// positive; B_z = (number of exp factors) * B, so at least one exp factor is
/// required wherever strict monotonicity matters (validated by the solver).
[[nodiscard]] inline Inhomogeneity build_inhomogeneity(const std::vector<BFactor>& factors) {
    if (factors.empty()) throw ConfigError("inhomogeneity: at least one factor required");
    int exp_count = 0;
    double const_product = 1.0;
    bool has_x2 = false;
    int x2_count = 0;
    for (const auto& f : factors) {
        if (f.kind == "const") {
            if (!(f.value > 0.0)) throw ConfigError("inhomogeneity: const factors must be positive");
            const_product *= f.value;
        } else if (f.kind == "exp-z") {
            ++exp_count;
        } else if (f.kind == "exp-z-minus-x2") {
            ++exp_count;
            has_x2 = true;
            ++x2_count;
        } else {
            throw ConfigError("inhomogeneity: unknown factor kind '" + f.kind + "'");
        }
    }
    (void)has_x2;
    Inhomogeneity b;
    b.value = [const_product, exp_count, x2_count](const Eigen::Vector2d& x, double z) {
        return const_product * std::exp(exp_count * z - x2_count * x.squaredNorm());
    };
    b.dz = [const_product, exp_count, x2_count](const Eigen::Vector2d& x, double z) {
        return exp_count * const_product * std::exp(exp_count * z - x2_count * x.squaredNorm());
    };
    return b;
}

/// Parses and schema-validates a full configuration file.
[[nodiscard]] inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    cfg::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    cfg::require_keys(j, "config",
                      {"seed", "output_dir", "cost", "domains", "inhomogeneity", "quotient", "grid",
                       "tolerances", "samples", "transform", "field", "inject_bug"});

    RunConfig rc;
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw ConfigError("seed: unsigned integer expected");
        rc.seed = j.at("seed").get<unsigned long long>();
    }
    if (j.contains("output_dir")) rc.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("cost")) {
        const auto& c = j.at("cost");
        cfg::require_keys(c, "cost", {"kind", "epsilon"}, {"kind"});
        CostConfig cc;
        cc.kind = c.at("kind").get<std::string>();
        if (cc.kind != "quadratic" && cc.kind != "perturbed-quadratic")
            throw ConfigError("cost: unknown kind '" + cc.kind + "'");
        if (c.contains("epsilon")) cc.epsilon = cfg::number(c.at("epsilon"), "cost.epsilon");
        if (cc.kind == "perturbed-quadratic" && cc.epsilon == 0.0)
            throw ConfigError("cost: perturbed-quadratic requires nonzero 'epsilon'");
        rc.cost = cc;
    }

    if (j.contains("domains")) {
        const auto& d = j.at("domains");
        cfg::require_keys(d, "domains", {"source", "target"}, {"source", "target"});
        rc.source = cfg::parse_domain(d.at("source"), "domains.source");
        rc.target = cfg::parse_domain(d.at("target"), "domains.target");
    }

    if (j.contains("inhomogeneity")) {
        const auto& b = j.at("inhomogeneity");
        cfg::require_keys(b, "inhomogeneity", {"factors"}, {"factors"});
        for (const auto& f : b.at("factors")) {
            cfg::require_keys(f, "inhomogeneity.factor", {"kind", "value"}, {"kind"});
            BFactor bf;
            bf.kind = f.at("kind").get<std::string>();
            if (f.contains("value")) bf.value = cfg::number(f.at("value"), "factor.value");
            rc.b_factors.push_back(bf);
        }
    }

    if (j.contains("quotient")) {
        const auto& q = j.at("quotient");
        cfg::require_keys(q, "quotient", {"n", "l"}, {"n", "l"});
        try {
            rc.quotient = QuotientParams(cfg::integer(q.at("n"), "quotient.n"),
                                         cfg::integer(q.at("l"), "quotient.l"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("quotient: ") + e.what());
        }
    }

    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        cfg::require_keys(g, "grid", {"nr", "ntheta"}, {"nr", "ntheta"});
        try {
            rc.dims = GridDims(cfg::integer(g.at("nr"), "grid.nr"),
                               cfg::integer(g.at("ntheta"), "grid.ntheta"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("grid: ") + e.what());
        }
    }

    if (j.contains("tolerances")) {
        const auto& t = j.at("tolerances");
        cfg::require_keys(t, "tolerances",
                          {"newton", "max_newton", "admissibility_floor", "dt_init", "dt_min",
                           "dt_max"});
        if (t.contains("newton")) rc.tol.newton = cfg::number(t.at("newton"), "tolerances.newton");
        if (t.contains("max_newton"))
            rc.tol.max_newton = cfg::integer(t.at("max_newton"), "tolerances.max_newton");
        if (t.contains("admissibility_floor"))
            rc.tol.admissibility_floor =
                cfg::number(t.at("admissibility_floor"), "tolerances.admissibility_floor");
        if (t.contains("dt_init")) rc.tol.dt_init = cfg::number(t.at("dt_init"), "tolerances.dt_init");
        if (t.contains("dt_min")) rc.tol.dt_min = cfg::number(t.at("dt_min"), "tolerances.dt_min");
        if (t.contains("dt_max")) rc.tol.dt_max = cfg::number(t.at("dt_max"), "tolerances.dt_max");
        if (!(rc.tol.newton > 0) || !(rc.tol.dt_min > 0) || rc.tol.dt_min > rc.tol.dt_max)
            throw ConfigError("tolerances: positive newton and 0 < dt_min <= dt_max required");
    }

    if (j.contains("samples")) {
        const auto& s = j.at("samples");
        cfg::require_keys(s, "samples",
                          {"identities", "derivatives", "inequalities", "contractions", "dims",
                           "classify"});
        if (s.contains("identities"))
            rc.verify.identity_samples = cfg::integer(s.at("identities"), "samples.identities");
        if (s.contains("derivatives"))
            rc.verify.derivative_samples = cfg::integer(s.at("derivatives"), "samples.derivatives");
        if (s.contains("inequalities"))
            rc.verify.inequality_samples = cfg::integer(s.at("inequalities"), "samples.inequalities");
        if (s.contains("contractions"))
            rc.verify.contraction_samples =
                cfg::integer(s.at("contractions"), "samples.contractions");
        if (s.contains("classify"))
            rc.classify_samples = cfg::integer(s.at("classify"), "samples.classify");
        if (s.contains("dims")) {
            rc.verify.dims.clear();
            for (const auto& d : s.at("dims")) {
                const int n = cfg::integer(d, "samples.dims");
                if (n < 2 || n > 12) throw ConfigError("samples.dims: entries must lie in [2, 12]");
                rc.verify.dims.push_back(n);
            }
            if (rc.verify.dims.empty()) throw ConfigError("samples.dims: nonempty list required");
        }
    }

    if (j.contains("transform")) {
        const auto& t = j.at("transform");
        cfg::require_keys(t, "transform", {"center", "radius", "grid"});
        if (t.contains("center")) rc.transform_center = cfg::point(t.at("center"), "transform.center");
        if (t.contains("radius")) rc.transform_radius = cfg::number(t.at("radius"), "transform.radius");
        if (!(rc.transform_radius > 0)) throw ConfigError("transform.radius: positive value required");
        if (t.contains("grid")) {
            const auto& g = t.at("grid");
            if (!g.is_array() || g.size() != 2)
                throw ConfigError("transform.grid: [radial, angular] expected");
            rc.transform_grid_radial = cfg::integer(g[0], "transform.grid");
            rc.transform_grid_angular = cfg::integer(g[1], "transform.grid");
        }
    }

    if (j.contains("field")) rc.field_path = j.at("field").get<std::string>();
    if (j.contains("inject_bug")) {
        if (!j.at("inject_bug").is_boolean()) throw ConfigError("inject_bug: boolean expected");
        rc.verify.inject_bug = j.at("inject_bug").get<bool>();
    }

    return rc;
}

/// Assembles the solver problem from a parsed configuration; throws
/// ConfigError when a required section is missing.
[[nodiscard]] inline ProblemSpec build_problem(const RunConfig& rc) {
    if (!rc.cost) throw ConfigError("missing 'cost' section");
    if (!rc.source || !rc.target) throw ConfigError("missing 'domains' section");
    if (rc.b_factors.empty()) throw ConfigError("missing 'inhomogeneity' section");
    ProblemSpec spec(build_cost(*rc.cost, *rc.source, *rc.target), *rc.source, *rc.target,
                     build_inhomogeneity(rc.b_factors));
    spec.quotient = rc.quotient;
    spec.dims = rc.dims;
    spec.tol = rc.tol;
    return spec;
}

} // namespace qtrans
