#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qtrans/cost.hpp"
#include "qtrans/errors.hpp"
#include "qtrans/geometry.hpp"
#include "qtrans/spectral_operator.hpp"
#include "qtrans/symfun.hpp"

// Finite-difference discretization of the second boundary value problem on a
// polar boundary-fitted grid over the source domain, and the damped-Newton
// continuation driver
//
//   F[u_t] = t B(., u_t) + (1 - t) e^{u_t - u_0} F[u_0],   T_{u_t} -> moving target,
//
// marching t from 0 to 1 from an explicitly constructed admissible seed.

namespace qtrans {

struct GridDims {
    int nr = 33;     // radial node count including pole and boundary ring
    int ntheta = 64; // angular nodes, even

    GridDims() = default;
    GridDims(int r, int t) : nr(r), ntheta(t) {
        if (nr < 5) throw std::invalid_argument("GridDims: nr >= 5 required");
        if (ntheta < 8 || ntheta % 2 != 0)
            throw std::invalid_argument("GridDims: ntheta even and >= 8 required");
    }
};

namespace detail {

struct StencilEntry {
    int id = 0;
    double wr = 0.0, wth = 0.0;          // first-derivative weights (reference space)
    double wrr = 0.0, wrth = 0.0, wthth = 0.0; // second-derivative weights
};

struct PoleEntry {
    int id = 0;
    Eigen::Vector2d wg = Eigen::Vector2d::Zero(); // Cartesian gradient weights
    Eigen::Vector3d wh = Eigen::Vector3d::Zero(); // Hessian weights (xx, xy, yy)
};

} // namespace detail

/// Per-node first and second Cartesian derivatives of a grid field.
struct FieldDerivatives {
    std::vector<Eigen::Vector2d> grad;
    std::vector<Eigen::Matrix2d> hess; // boundary entries are one-sided, diagnostic grade
};

/// Boundary-fitted polar mesh over a star-shaped domain. Node 0 is the
/// collapsed pole; node(i, j) = 1 + (i-1) ntheta + j for rings i = 1..nr-1.
/// The map x(r, theta) = center + r rho(theta) (cos, sin) has positive
/// Jacobian away from the pole; metric terms and difference stencils are
/// cached per node. The pole closure is a least-squares cubic fit through the
/// first two rings, exact on cubics, so the scheme stays second order there.
class PolarGrid {
public:
    PolarGrid(DomainSpec domain, GridDims dims) : domain_(std::move(domain)), dims_(dims) {
        build();
    }

    [[nodiscard]] const DomainSpec& domain() const { return domain_; }
    [[nodiscard]] const GridDims& dims() const { return dims_; }
    [[nodiscard]] int node_count() const { return 1 + (dims_.nr - 1) * dims_.ntheta; }
    [[nodiscard]] int node_id(int i, int j) const {
        if (i == 0) return 0;
        const int jj = ((j % dims_.ntheta) + dims_.ntheta) % dims_.ntheta;
        return 1 + (i - 1) * dims_.ntheta + jj;
    }
    [[nodiscard]] bool is_boundary(int id) const { return id >= node_count() - dims_.ntheta; }
    [[nodiscard]] bool is_pole(int id) const { return id == 0; }
    [[nodiscard]] const Eigen::Vector2d& position(int id) const {
        return positions_[static_cast<size_t>(id)];
    }
    [[nodiscard]] double radius_fraction(int id) const { return rfrac_[static_cast<size_t>(id)]; }
    [[nodiscard]] double theta(int id) const { return theta_[static_cast<size_t>(id)]; }
    /// Mesh parameter h: the radial spacing in physical units at the mean radius.
    [[nodiscard]] double mesh_parameter() const { return mean_rho_ / (dims_.nr - 1); }

    /// Cartesian gradient and Hessian fields of nodal values.
    [[nodiscard]] FieldDerivatives derivatives(const Eigen::VectorXd& u) const {
        if (u.size() != node_count())
            throw std::invalid_argument("derivatives: field size does not match grid");
        FieldDerivatives d;
        const size_t n = static_cast<size_t>(node_count());
        d.grad.resize(n, Eigen::Vector2d::Zero());
        d.hess.resize(n, Eigen::Matrix2d::Zero());

        // pole: cubic least-squares fit in local Cartesian coordinates
        {
            Eigen::Vector2d g = Eigen::Vector2d::Zero();
            Eigen::Vector3d h = Eigen::Vector3d::Zero();
            for (const auto& e : pole_entries_) {
                g += e.wg * u[e.id];
                h += e.wh * u[e.id];
            }
            d.grad[0] = g;
            d.hess[0] << h[0], h[1], h[1], h[2];
        }

        for (int id = 1; id < node_count(); ++id) {
            double ur = 0, uth = 0, urr = 0, urth = 0, uthth = 0;
            for (const auto& e : stencils_[static_cast<size_t>(id)]) {
                ur += e.wr * u[e.id];
                uth += e.wth * u[e.id];
                urr += e.wrr * u[e.id];
                urth += e.wrth * u[e.id];
                uthth += e.wthth * u[e.id];
            }
            const auto& m = metric_[static_cast<size_t>(id)];
            const Eigen::Vector2d gref(ur, uth);
            const Eigen::Vector2d g = m.jit * gref;
            Eigen::Matrix2d href;
            href << urr, urth, urth, uthth;
            const Eigen::Matrix2d corrected = href - g[0] * m.hx0 - g[1] * m.hx1;
            d.grad[static_cast<size_t>(id)] = g;
            d.hess[static_cast<size_t>(id)] = m.jit * corrected * m.jit.transpose();
        }
        return d;
    }

    /// Derivative of the nodal gradient/Hessian with respect to one stencil
    /// neighbour value; consumed by the Jacobian assembly.
    struct DerivativeWeights {
        int id = 0;
        Eigen::Vector2d dgrad = Eigen::Vector2d::Zero();
        Eigen::Matrix2d dhess = Eigen::Matrix2d::Zero();
    };

    [[nodiscard]] std::vector<DerivativeWeights> derivative_weights(int id) const {
        std::vector<DerivativeWeights> out;
        if (id == 0) {
            out.reserve(pole_entries_.size());
            for (const auto& e : pole_entries_) {
                DerivativeWeights w;
                w.id = e.id;
                w.dgrad = e.wg;
                w.dhess << e.wh[0], e.wh[1], e.wh[1], e.wh[2];
                out.push_back(w);
            }
            return out;
        }
        const auto& m = metric_[static_cast<size_t>(id)];
        out.reserve(stencils_[static_cast<size_t>(id)].size());
        for (const auto& e : stencils_[static_cast<size_t>(id)]) {
            DerivativeWeights w;
            w.id = e.id;
            const Eigen::Vector2d gref(e.wr, e.wth);
            w.dgrad = m.jit * gref;
            Eigen::Matrix2d href;
            href << e.wrr, e.wrth, e.wrth, e.wthth;
            const Eigen::Matrix2d corrected = href - w.dgrad[0] * m.hx0 - w.dgrad[1] * m.hx1;
            w.dhess = m.jit * corrected * m.jit.transpose();
            out.push_back(w);
        }
        return out;
    }

private:
    struct Metric {
        Eigen::Matrix2d jit = Eigen::Matrix2d::Zero(); // inverse-transpose Jacobian of the map
        Eigen::Matrix2d hx0 = Eigen::Matrix2d::Zero(); // reference Hessian of x-component
        Eigen::Matrix2d hx1 = Eigen::Matrix2d::Zero(); // reference Hessian of y-component
    };

    void build() {
        const int nr = dims_.nr, nt = dims_.ntheta;
        const double dr = 1.0 / (nr - 1);
        const double dth = 2.0 * M_PI / nt;
        const int n = node_count();
        positions_.resize(static_cast<size_t>(n));
        rfrac_.resize(static_cast<size_t>(n));
        theta_.resize(static_cast<size_t>(n));
        metric_.resize(static_cast<size_t>(n));
        stencils_.resize(static_cast<size_t>(n));

        positions_[0] = domain_.center();
        rfrac_[0] = 0.0;
        theta_[0] = 0.0;
        double rho_acc = 0.0;

        for (int i = 1; i < nr; ++i) {
            for (int j = 0; j < nt; ++j) {
                const int id = node_id(i, j);
                const double r = static_cast<double>(i) * dr;
                const double th = j * dth;
                const double rho = domain_.radial().rho(th);
                const double drho = domain_.radial().drho(th);
                const double ddrho = domain_.radial().ddrho(th);
                if (i == 1) rho_acc += rho;
                const Eigen::Vector2d e(std::cos(th), std::sin(th));
                const Eigen::Vector2d ep(-std::sin(th), std::cos(th));
                positions_[static_cast<size_t>(id)] = domain_.center() + r * rho * e;
                rfrac_[static_cast<size_t>(id)] = r;
                theta_[static_cast<size_t>(id)] = th;

                Eigen::Matrix2d jac;
                jac.col(0) = rho * e;
                jac.col(1) = r * (drho * e + rho * ep);
                Metric m;
                m.jit = jac.inverse().transpose();
                const Eigen::Vector2d vp = drho * e + rho * ep;          // d(rho e)/dtheta
                const Eigen::Vector2d vpp = ddrho * e + 2 * drho * ep - rho * e;
                m.hx0 << 0.0, vp[0], vp[0], r * vpp[0];
                m.hx1 << 0.0, vp[1], vp[1], r * vpp[1];
                metric_[static_cast<size_t>(id)] = m;
            }
        }
        mean_rho_ = rho_acc / nt;

        auto add = [&](std::vector<detail::StencilEntry>& st, int id, double wr, double wth,
                       double wrr, double wrth, double wthth) {
            for (auto& e : st) {
                if (e.id == id) {
                    e.wr += wr;
                    e.wth += wth;
                    e.wrr += wrr;
                    e.wrth += wrth;
                    e.wthth += wthth;
                    return;
                }
            }
            st.push_back({id, wr, wth, wrr, wrth, wthth});
        };

        for (int i = 1; i < nr; ++i) {
            for (int j = 0; j < nt; ++j) {
                const int id = node_id(i, j);
                auto& st = stencils_[static_cast<size_t>(id)];
                if (i < nr - 1) {
                    // interior ring: central differences; ring 1 references the pole
                    add(st, node_id(i + 1, j), 0.5 / dr, 0, 1.0 / (dr * dr), 0, 0);
                    add(st, node_id(i - 1, j), -0.5 / dr, 0, 1.0 / (dr * dr), 0, 0);
                    add(st, id, 0, 0, -2.0 / (dr * dr), 0, -2.0 / (dth * dth));
                    add(st, node_id(i, j + 1), 0, 0.5 / dth, 0, 0, 1.0 / (dth * dth));
                    add(st, node_id(i, j - 1), 0, -0.5 / dth, 0, 0, 1.0 / (dth * dth));
                    const double wmix = 0.25 / (dr * dth);
                    add(st, node_id(i + 1, j + 1), 0, 0, 0, wmix, 0);
                    add(st, node_id(i + 1, j - 1), 0, 0, 0, -wmix, 0);
                    add(st, node_id(i - 1, j + 1), 0, 0, 0, -wmix, 0);
                    add(st, node_id(i - 1, j - 1), 0, 0, 0, wmix, 0);
                } else {
                    // boundary ring: one-sided (inward) radial first derivative;
                    // second derivatives one-sided as well, used by diagnostics only
                    add(st, id, 1.5 / dr, 0, 2.0 / (dr * dr), 0, -2.0 / (dth * dth));
                    add(st, node_id(i - 1, j), -2.0 / dr, 0, -5.0 / (dr * dr), 0, 0);
                    add(st, node_id(i - 2, j), 0.5 / dr, 0, 4.0 / (dr * dr), 0, 0);
                    add(st, node_id(i - 3, j), 0, 0, -1.0 / (dr * dr), 0, 0);
                    add(st, node_id(i, j + 1), 0, 0.5 / dth, 0, 0, 1.0 / (dth * dth));
                    add(st, node_id(i, j - 1), 0, -0.5 / dth, 0, 0, 1.0 / (dth * dth));
                    const double wmix = 0.25 / (dr * dth);
                    add(st, node_id(i, j + 1), 0, 0, 0, 3.0 * wmix, 0);
                    add(st, node_id(i, j - 1), 0, 0, 0, -3.0 * wmix, 0);
                    add(st, node_id(i - 1, j + 1), 0, 0, 0, -4.0 * wmix, 0);
                    add(st, node_id(i - 1, j - 1), 0, 0, 0, 4.0 * wmix, 0);
                    add(st, node_id(i - 2, j + 1), 0, 0, 0, wmix, 0);
                    add(st, node_id(i - 2, j - 1), 0, 0, 0, -wmix, 0);
                }
            }
        }

        build_pole_fit();
    }

    void build_pole_fit() {
        // cubic model about the pole in scaled local coordinates
        const int nt = dims_.ntheta;
        const int rows = 1 + 2 * nt;
        const double h0 = mean_rho_ / (dims_.nr - 1);
        Eigen::MatrixXd a(rows, 10);
        std::vector<int> ids(static_cast<size_t>(rows));
        auto monomials = [](double x, double y) {
            Eigen::Matrix<double, 10, 1> m;
            m << 1, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y;
            return m;
        };
        ids[0] = 0;
        a.row(0) = monomials(0, 0).transpose();
        int row = 1;
        for (int i = 1; i <= 2; ++i) {
            for (int j = 0; j < nt; ++j) {
                const int id = node_id(i, j);
                const Eigen::Vector2d xi = (positions_[static_cast<size_t>(id)] - domain_.center()) / h0;
                ids[static_cast<size_t>(row)] = id;
                a.row(row) = monomials(xi[0], xi[1]).transpose();
                ++row;
            }
        }
        const Eigen::MatrixXd pinv =
            (a.transpose() * a).ldlt().solve(Eigen::MatrixXd(a.transpose()));
        pole_entries_.clear();
        pole_entries_.reserve(static_cast<size_t>(rows));
        for (int k = 0; k < rows; ++k) {
            detail::PoleEntry e;
            e.id = ids[static_cast<size_t>(k)];
            e.wg = Eigen::Vector2d(pinv(1, k), pinv(2, k)) / h0;
            e.wh = Eigen::Vector3d(2.0 * pinv(3, k), pinv(4, k), 2.0 * pinv(5, k)) / (h0 * h0);
            pole_entries_.push_back(e);
        }
    }

    DomainSpec domain_;
    GridDims dims_;
    double mean_rho_ = 1.0;
    std::vector<Eigen::Vector2d> positions_;
    std::vector<double> rfrac_;
    std::vector<double> theta_;
    std::vector<Metric> metric_;
    std::vector<std::vector<detail::StencilEntry>> stencils_;
    std::vector<detail::PoleEntry> pole_entries_;
};

/// Inhomogeneity B(x, z) with its z-derivative.
struct Inhomogeneity {
    std::function<double(const Eigen::Vector2d&, double)> value;
    std::function<double(const Eigen::Vector2d&, double)> dz;
};

struct SolverTolerances {
    double newton = 1e-9;
    int max_newton = 30;
    int max_backtracks = 10;
    double admissibility_floor = 1e-8;
    double dt_init = 0.2;
    double dt_min = 1e-3;
    double dt_max = 0.25;
};

struct ProblemSpec {
    CostModel cost;
    DomainSpec source; // the solve domain
    DomainSpec target;
    Inhomogeneity b;
    QuotientParams quotient{2, 1};
    GridDims dims{33, 64};
    SolverTolerances tol;
    double seed_scale = 0.0; // 0 = automatic

    ProblemSpec(CostModel c, DomainSpec src, DomainSpec tgt, Inhomogeneity bb)
        : cost(std::move(c)), source(std::move(src)), target(std::move(tgt)), b(std::move(bb)) {}
};

/// Validates the structural conditions on the inhomogeneity by sampling:
/// positivity, strict monotone growth in z, decay as z -> -infinity (checked
/// on a log-spaced ladder), and the quotient restricted to the planar case.
inline void validate_problem(const ProblemSpec& spec) {
    if (spec.quotient.n != 2 || spec.quotient.l > 1)
        throw std::invalid_argument("ProblemSpec: the discretization is planar (n = 2, l in {0,1})");
    std::mt19937_64 rng(0x5eedu);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::vector<double> ladder = {-64.0, -16.0, -4.0, -1.0, 0.0, 1.0, 4.0, 16.0, 64.0};
    for (int k = 0; k < 16; ++k) {
        const double t = 2.0 * M_PI * unit(rng);
        const double r = std::sqrt(unit(rng)) * spec.source.radial().rho(t);
        const Eigen::Vector2d x = spec.source.center() + r * Eigen::Vector2d(std::cos(t), std::sin(t));
        double prev = 0.0;
        for (size_t zi = 0; zi < ladder.size(); ++zi) {
            const double z = ladder[zi];
            const double bv = spec.b.value(x, z);
            if (!(bv > 0.0)) throw std::invalid_argument("ProblemSpec: B(x, z) must be positive");
            if (!(spec.b.dz(x, z) > 0.0))
                throw std::invalid_argument("ProblemSpec: B_z(x, z) > 0 required for the continuity path");
            if (zi > 0 && !(bv > prev))
                throw std::invalid_argument("ProblemSpec: B must grow monotonically along the z ladder");
            prev = bv;
        }
        if (!(spec.b.value(x, ladder.front()) < 1e-2 * spec.b.value(x, 0.0)))
            throw std::invalid_argument("ProblemSpec: B must decay as z -> -infinity");
    }
}

struct NewtonRecord {
    double t = 0.0;
    int iterations = 0;
    int backtracks = 0;
    double initial_residual = 0.0;
    double final_residual = 0.0;
};

struct ContinuationState {
    double t = 0.0;
    Eigen::VectorXd u;
    Eigen::VectorXd u0;          // seed field
    Eigen::VectorXd f0;          // frozen discrete F[u_0] at interior nodes
    std::vector<double> t_history;
    std::vector<NewtonRecord> newton_history;
    double jacobian_check_rel_err = std::numeric_limits<double>::quiet_NaN();
    std::string status = "init";
};

namespace detail {

/// Target domain of the homotopy at parameter t: profile blend between the
/// seed image and the true target, both centered at the target's center.
inline DomainSpec target_at(const ProblemSpec& spec, const RadialFunction& seed_profile, double t) {
    RadialFunction f = RadialFunction::blend(1.0 - t, seed_profile, t, spec.target.radial());
    return DomainSpec(spec.target.center(), f, spec.target.boundary_nodes());
}

/// Eigenvalues of a symmetric 2x2 matrix, descending.
inline Eigen::Vector2d sym2_eigenvalues(const Eigen::Matrix2d& m) {
    const double half_tr = 0.5 * (m(0, 0) + m(1, 1));
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = std::sqrt(std::max(0.0, half_tr * half_tr - det));
    return Eigen::Vector2d(half_tr + disc, half_tr - disc);
}

} // namespace detail

/// Seed of the continuity method: an admissible field whose target image is a
/// strict subset of the target domain, plus the radial profile of that image.
struct ContinuationSeed {
    Eigen::VectorXd u0;
    RadialFunction image_profile;
    double scale = 0.0;
};

/// Quadratic-cost seed: u_0 = (1+s)/2 |x - c-|^2 + (c- - c+) . x, whose
/// target map is the point reflection x -> c+ - s (x - c-). The image is the
/// reflected source shrunk by s about the target center. For general costs
/// the seed is the transform of the ball function over B_r(c+), with the
/// image profile taken as the measured image disc.
[[nodiscard]] inline ContinuationSeed build_seed(const PolarGrid& grid, const ProblemSpec& spec) {
    ContinuationSeed seed;
    double rho_plus_min = std::numeric_limits<double>::infinity();
    double rho_minus_max = 0.0;
    for (int k = 0; k < 256; ++k) {
        const double t = 2.0 * M_PI * k / 256;
        rho_plus_min = std::min(rho_plus_min, spec.target.radial().rho(t));
        rho_minus_max = std::max(rho_minus_max, spec.source.radial().rho(t));
    }
    const int n = grid.node_count();
    seed.u0.resize(n);

    if (spec.cost.name() == "quadratic") {
        const double s =
            (spec.seed_scale > 0.0) ? spec.seed_scale : 0.5 * rho_plus_min / rho_minus_max;
        const Eigen::Vector2d cm = spec.source.center();
        const Eigen::Vector2d cp = spec.target.center();
        for (int id = 0; id < n; ++id) {
            const Eigen::Vector2d x = grid.position(id);
            seed.u0[id] = 0.5 * (1.0 + s) * (x - cm).squaredNorm() + (cm - cp).dot(x);
        }
        seed.image_profile = RadialFunction::blend_reflected(s, spec.source.radial(), 0.0,
                                                             RadialFunction::disc(1.0));
        seed.scale = s;
        return seed;
    }

    // general cost: transform of the ball function over B_r(c+)
    const double r =
        (spec.seed_scale > 0.0) ? spec.seed_scale * rho_plus_min : 0.5 * rho_plus_min;
    const TargetBall ball{spec.target.center(), r};
    auto psi = [&ball](const Eigen::VectorXd& y) {
        const double q = ball.radius * ball.radius -
                         (y - Eigen::VectorXd(ball.center)).squaredNorm();
        return -std::sqrt(std::max(0.0, q));
    };
    double image_radius = 0.0;
    for (int id = 0; id < n; ++id) {
        const CTransformResult ct = c_transform(spec.cost, ball, psi, grid.position(id));
        seed.u0[id] = ct.value;
        image_radius = std::max(image_radius, (ct.contact - Eigen::VectorXd(ball.center)).norm());
    }
    seed.image_profile = RadialFunction::disc(std::max(image_radius, 0.25 * r));
    seed.scale = r;
    return seed;
}

namespace detail {

/// Shared per-evaluation context: homotopy parameter, frozen seed data and
/// the moving target domain.
struct HomotopyContext {
    double t = 0.0;
    const Eigen::VectorXd* u0 = nullptr;
    const Eigen::VectorXd* f0 = nullptr;
    DomainSpec target_t;
};

} // namespace detail

/// Interior residual F[w] - RHS_t and boundary residual phi+(Y(x, Du)) with
/// phi+ the signed distance to the homotopy target (zero exactly on it).
/// Throws NotAdmissible naming the first node where w leaves the cone.
[[nodiscard]] inline Eigen::VectorXd residual(const PolarGrid& grid, const ProblemSpec& spec,
                                              const detail::HomotopyContext& ctx,
                                              const Eigen::VectorXd& u) {
    const int n = grid.node_count();
    const FieldDerivatives d = grid.derivatives(u);
    Eigen::VectorXd res(n);
    for (int id = 0; id < n; ++id) {
        const Eigen::Vector2d x = grid.position(id);
        if (grid.is_boundary(id)) {
            const Eigen::VectorXd y = y_map(spec.cost, x, d.grad[static_cast<size_t>(id)]).y;
            res[id] = projected_distance(ctx.target_t, Eigen::Vector2d(y)).value;
            continue;
        }
        const Eigen::MatrixXd a = a_matrix(spec.cost, x, d.grad[static_cast<size_t>(id)]);
        const Eigen::Matrix2d w = d.hess[static_cast<size_t>(id)] - Eigen::Matrix2d(a);
        const Eigen::Vector2d lam = detail::sym2_eigenvalues(0.5 * (w + w.transpose()));
        if (!(lam[1] > spec.tol.admissibility_floor))
            throw NotAdmissible("residual: modified Hessian not positive definite at node " +
                                std::to_string(id) + " (lambda_min = " + std::to_string(lam[1]) +
                                ")");
        const double f = sigma_quotient(Spectrum(Eigen::VectorXd(lam)), spec.quotient);
        const double rhs = ctx.t * spec.b.value(x, u[id]) +
                           (1.0 - ctx.t) * std::exp(u[id] - (*ctx.u0)[id]) * (*ctx.f0)[id];
        res[id] = f - rhs;
    }
    return res;
}

/// Frozen discrete operator field of the seed (interior nodes; boundary
/// entries unused and set to zero).
[[nodiscard]] inline Eigen::VectorXd operator_field(const PolarGrid& grid, const ProblemSpec& spec,
                                                    const Eigen::VectorXd& u) {
    const int n = grid.node_count();
    const FieldDerivatives d = grid.derivatives(u);
    Eigen::VectorXd f0 = Eigen::VectorXd::Zero(n);
    for (int id = 0; id < n; ++id) {
        if (grid.is_boundary(id)) continue;
        const Eigen::MatrixXd a = a_matrix(spec.cost, grid.position(id), d.grad[static_cast<size_t>(id)]);
        const Eigen::Matrix2d w = d.hess[static_cast<size_t>(id)] - Eigen::Matrix2d(a);
        const Eigen::Vector2d lam = detail::sym2_eigenvalues(0.5 * (w + w.transpose()));
        if (!(lam[1] > spec.tol.admissibility_floor))
            throw NotAdmissible("seed field is not admissible at node " + std::to_string(id));
        f0[id] = sigma_quotient(Spectrum(Eigen::VectorXd(lam)), spec.quotient);
    }
    return f0;
}

namespace detail {

/// Per-node coefficients of the linearized problem.
struct NodeLinearization {
    // interior rows: sum_ij fij D_ij v - advect . Dv - zslope v
    Eigen::Matrix2d fij = Eigen::Matrix2d::Zero();
    Eigen::Vector2d advect = Eigen::Vector2d::Zero();
    double zslope = 0.0;
    // boundary rows: beta . Dv
    Eigen::Vector2d beta = Eigen::Vector2d::Zero();
};

inline std::vector<NodeLinearization> linearize_nodes(const PolarGrid& grid,
                                                      const ProblemSpec& spec,
                                                      const HomotopyContext& ctx,
                                                      const Eigen::VectorXd& u,
                                                      const FieldDerivatives& d) {
    const int n = grid.node_count();
    std::vector<NodeLinearization> out(static_cast<size_t>(n));
    for (int id = 0; id < n; ++id) {
        const Eigen::Vector2d x = grid.position(id);
        auto& nl = out[static_cast<size_t>(id)];
        if (grid.is_boundary(id)) {
            // beta_k = phi+_i(Y) dY_i/dp_k with phi+ the signed distance
            const Eigen::VectorXd y = y_map(spec.cost, x, d.grad[static_cast<size_t>(id)]).y;
            const Eigen::Vector2d gphi =
                projected_distance(ctx.target_t, Eigen::Vector2d(y)).gradient;
            const Eigen::MatrixXd dy_dp = spec.cost.inv_xy(x, y); // first index y-type
            Eigen::Vector2d beta;
            for (int k = 0; k < 2; ++k) beta[k] = gphi[0] * dy_dp(0, k) + gphi[1] * dy_dp(1, k);
            nl.beta = beta;
            continue;
        }
        const Eigen::MatrixXd a = a_matrix(spec.cost, x, d.grad[static_cast<size_t>(id)]);
        const Eigen::Matrix2d w = d.hess[static_cast<size_t>(id)] - Eigen::Matrix2d(a);
        nl.fij = linearization(ModifiedHessian(0.5 * (w + w.transpose())), spec.quotient);
        const CostTensor3 dap = a_matrix_grad_p_fd(spec.cost, x, d.grad[static_cast<size_t>(id)]);
        for (int k = 0; k < 2; ++k)
            nl.advect[k] = (nl.fij.array() * dap[static_cast<size_t>(k)].array()).sum();
        nl.zslope = ctx.t * spec.b.dz(x, u[id]) +
                    (1.0 - ctx.t) * std::exp(u[id] - (*ctx.u0)[id]) * (*ctx.f0)[id];
    }
    return out;
}

} // namespace detail

/// Matrix-free application of the linearized operator to a direction field:
/// interior rows F^{ij}[D_ij v - (D_{p_k} A_ij) D_k v] - (dRHS_t/dz) v,
/// boundary rows beta . Dv with the same one-sided gradient stencil the
/// residual uses. Consistent with `residual` to finite-difference accuracy.
[[nodiscard]] inline Eigen::VectorXd jacobian_apply(const PolarGrid& grid, const ProblemSpec& spec,
                                                    const detail::HomotopyContext& ctx,
                                                    const Eigen::VectorXd& u,
                                                    const Eigen::VectorXd& v) {
    const FieldDerivatives du = grid.derivatives(u);
    const FieldDerivatives dv = grid.derivatives(v);
    const auto nodes = detail::linearize_nodes(grid, spec, ctx, u, du);
    const int n = grid.node_count();
    Eigen::VectorXd out(n);
    for (int id = 0; id < n; ++id) {
        const auto& nl = nodes[static_cast<size_t>(id)];
        if (grid.is_boundary(id)) {
            out[id] = nl.beta.dot(dv.grad[static_cast<size_t>(id)]);
        } else {
            out[id] = (nl.fij.array() * dv.hess[static_cast<size_t>(id)].array()).sum() -
                      nl.advect.dot(dv.grad[static_cast<size_t>(id)]) - nl.zslope * v[id];
        }
    }
    return out;
}

/// Assembled sparse form of the same linearization, for the direct solve.
[[nodiscard]] inline Eigen::SparseMatrix<double> jacobian_assemble(
    const PolarGrid& grid, const ProblemSpec& spec, const detail::HomotopyContext& ctx,
    const Eigen::VectorXd& u) {
    const FieldDerivatives du = grid.derivatives(u);
    const auto nodes = detail::linearize_nodes(grid, spec, ctx, u, du);
    const int n = grid.node_count();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<size_t>(12 * n));
    for (int id = 0; id < n; ++id) {
        const auto& nl = nodes[static_cast<size_t>(id)];
        const auto weights = grid.derivative_weights(id);
        if (grid.is_boundary(id)) {
            for (const auto& w : weights) {
                const double c = nl.beta.dot(w.dgrad);
                if (c != 0.0) triplets.emplace_back(id, w.id, c);
            }
        } else {
            for (const auto& w : weights) {
                const double c =
                    (nl.fij.array() * w.dhess.array()).sum() - nl.advect.dot(w.dgrad);
                if (c != 0.0) triplets.emplace_back(id, w.id, c);
            }
            triplets.emplace_back(id, id, -nl.zslope);
        }
    }
    Eigen::SparseMatrix<double> jac(n, n);
    jac.setFromTriplets(triplets.begin(), triplets.end());
    return jac;
}

/// One damped Newton solve at fixed homotopy parameter. Steps are accepted
/// only when the residual norm decreases and every interior node stays
/// admissible; throws LineSearchStall / MaxIterations otherwise.
inline NewtonRecord newton_solve(const PolarGrid& grid, const ProblemSpec& spec,
                                 const detail::HomotopyContext& ctx, Eigen::VectorXd& u) {
    NewtonRecord rec;
    rec.t = ctx.t;
    Eigen::VectorXd res = residual(grid, spec, ctx, u);
    double norm = res.lpNorm<Eigen::Infinity>();
    rec.initial_residual = norm;
    rec.final_residual = norm;
    if (norm <= spec.tol.newton) return rec;

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    for (int it = 0; it < spec.tol.max_newton; ++it) {
        const Eigen::SparseMatrix<double> jac = jacobian_assemble(grid, spec, ctx, u);
        lu.compute(jac);
        if (lu.info() != Eigen::Success)
            throw NumericError("newton_solve: sparse factorization failed");
        const Eigen::VectorXd step = lu.solve(Eigen::VectorXd(-res));

        double alpha = 1.0;
        bool accepted = false;
        for (int bt = 0; bt <= spec.tol.max_backtracks; ++bt) {
            const Eigen::VectorXd candidate = u + alpha * step;
            try {
                const Eigen::VectorXd res_new = residual(grid, spec, ctx, candidate);
                const double norm_new = res_new.lpNorm<Eigen::Infinity>();
                if (norm_new < norm || norm_new <= spec.tol.newton) {
                    u = candidate;
                    res = res_new;
                    norm = norm_new;
                    accepted = true;
                    break;
                }
            } catch (const NumericError&) {
                // non-admissible or otherwise unevaluable candidate: shrink
            }
            alpha *= 0.5;
            ++rec.backtracks;
        }
        if (!accepted)
            throw LineSearchStall("newton_solve: no admissible decreasing step after " +
                                  std::to_string(spec.tol.max_backtracks) + " halvings");
        ++rec.iterations;
        rec.final_residual = norm;
        if (norm <= spec.tol.newton) return rec;
    }
    throw MaxIterations("newton_solve: residual " + std::to_string(norm) + " after " +
                        std::to_string(spec.tol.max_newton) + " iterations");
}

/// Finite-difference consistency probe of the linearization along a random
/// direction; returns the relative error, recorded on every continuation run.
[[nodiscard]] inline double jacobian_consistency_check(const PolarGrid& grid,
                                                       const ProblemSpec& spec,
                                                       const detail::HomotopyContext& ctx,
                                                       const Eigen::VectorXd& u,
                                                       std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd v(grid.node_count());
    for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    // Normalize by the direction's derivative magnitudes, not just its nodal
    // values: a rough field has second differences of order 1/h^2, which
    // would let the quadratic term of the operator dominate the probe.
    const FieldDerivatives dv = grid.derivatives(v);
    double scale = v.lpNorm<Eigen::Infinity>();
    for (int i = 0; i < grid.node_count(); ++i) {
        scale = std::max(scale, dv.grad[static_cast<size_t>(i)].lpNorm<Eigen::Infinity>());
        scale = std::max(scale, dv.hess[static_cast<size_t>(i)].lpNorm<Eigen::Infinity>());
    }
    v /= scale;
    const double h = 1e-5;
    const Eigen::VectorXd fd =
        (residual(grid, spec, ctx, Eigen::VectorXd(u + h * v)) -
         residual(grid, spec, ctx, Eigen::VectorXd(u - h * v))) /
        (2.0 * h);
    const Eigen::VectorXd lin = jacobian_apply(grid, spec, ctx, u, v);
    return (fd - lin).lpNorm<Eigen::Infinity>() /
           std::max(1e-12, lin.lpNorm<Eigen::Infinity>());
}

/// Runs the full continuity method: seed, t = 0 solve, adaptive march to
/// t = 1. Returns the final state (u at t = 1 with the residual below the
/// Newton tolerance). Throws ContinuationStall when the step floor is hit.
[[nodiscard]] inline ContinuationState continuation_run(const PolarGrid& grid,
                                                        const ProblemSpec& spec,
                                                        unsigned long long probe_seed = 0x9e3779b9u) {
    validate_problem(spec);
    ContinuationState state;
    const ContinuationSeed seed = build_seed(grid, spec);
    state.u0 = seed.u0;
    state.u = seed.u0;
    state.f0 = operator_field(grid, spec, seed.u0);

    detail::HomotopyContext ctx;
    ctx.u0 = &state.u0;
    ctx.f0 = &state.f0;
    ctx.t = 0.0;
    ctx.target_t = detail::target_at(spec, seed.image_profile, 0.0);

    // consistency probe once per run, at the seed
    std::mt19937_64 rng(probe_seed);
    state.jacobian_check_rel_err = jacobian_consistency_check(grid, spec, ctx, state.u, rng);

    state.newton_history.push_back(newton_solve(grid, spec, ctx, state.u));
    state.t_history.push_back(0.0);

    double dt = spec.tol.dt_init;
    while (ctx.t < 1.0) {
        const double t_next = std::min(1.0, ctx.t + dt);
        detail::HomotopyContext trial = ctx;
        trial.t = t_next;
        trial.target_t = detail::target_at(spec, seed.image_profile, t_next);
        Eigen::VectorXd u_trial = state.u;
        bool ok = false;
        NewtonRecord rec;
        try {
            rec = newton_solve(grid, spec, trial, u_trial);
            ok = true;
        } catch (const NumericError&) {
            ok = false;
        }
        if (ok) {
            ctx = trial;
            state.u = u_trial;
            state.t = t_next;
            state.t_history.push_back(t_next);
            state.newton_history.push_back(rec);
            if (rec.iterations <= 3) dt = std::min(spec.tol.dt_max, 1.5 * dt);
        } else {
            dt *= 0.5;
            if (dt < spec.tol.dt_min)
                throw ContinuationStall("continuation_run: step size below floor at t = " +
                                        std::to_string(ctx.t));
        }
    }
    state.status = "converged";
    return state;
}

} // namespace qtrans
