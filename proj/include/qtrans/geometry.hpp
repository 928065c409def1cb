#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "qtrans/cost.hpp"
#include "qtrans/errors.hpp"

// Planar star-shaped domains given by a radial function rho(theta) about a
// center, boundary frames and curvature, distance-based barriers, and the
// relative convexity checkers driven by the cost model.

namespace qtrans {

/// Smooth positive periodic radial profile with analytic first and second
/// derivatives. Composable: the blend combinator keeps derivatives exact,
/// which the continuation path relies on when interpolating target domains.
class RadialFunction {
public:
    RadialFunction() = default;

    [[nodiscard]] double rho(double theta) const { return rho_(theta); }
    [[nodiscard]] double drho(double theta) const { return drho_(theta); }
    [[nodiscard]] double ddrho(double theta) const { return ddrho_(theta); }

    static RadialFunction disc(double radius) {
        if (!(radius > 0)) throw std::invalid_argument("RadialFunction: radius > 0 required");
        RadialFunction f;
        f.rho_ = [radius](double) { return radius; };
        f.drho_ = [](double) { return 0.0; };
        f.ddrho_ = [](double) { return 0.0; };
        return f;
    }

    /// Ellipse with semiaxes (a, b): rho = ab / sqrt(b^2 cos^2 + a^2 sin^2).
    static RadialFunction ellipse(double a, double b) {
        if (!(a > 0 && b > 0)) throw std::invalid_argument("RadialFunction: semiaxes > 0 required");
        RadialFunction f;
        auto g = [a, b](double t) {
            const double c = std::cos(t), s = std::sin(t);
            return b * b * c * c + a * a * s * s;
        };
        auto dg = [a, b](double t) { return (a * a - b * b) * std::sin(2 * t); };
        auto ddg = [a, b](double t) { return 2 * (a * a - b * b) * std::cos(2 * t); };
        f.rho_ = [a, b, g](double t) { return a * b / std::sqrt(g(t)); };
        f.drho_ = [a, b, g, dg](double t) { return -0.5 * a * b * dg(t) * std::pow(g(t), -1.5); };
        f.ddrho_ = [a, b, g, dg, ddg](double t) {
            return a * b * (0.75 * dg(t) * dg(t) * std::pow(g(t), -2.5) -
                            0.5 * ddg(t) * std::pow(g(t), -1.5));
        };
        return f;
    }

    /// Truncated Fourier profile base + sum_k (ck cos k theta + sk sin k theta).
    static RadialFunction fourier(double base, std::vector<double> cos_coeff,
                                  std::vector<double> sin_coeff) {
        RadialFunction f;
        f.rho_ = [base, cos_coeff, sin_coeff](double t) {
            double r = base;
            for (size_t k = 0; k < cos_coeff.size(); ++k)
                r += cos_coeff[k] * std::cos(static_cast<double>(k + 1) * t);
            for (size_t k = 0; k < sin_coeff.size(); ++k)
                r += sin_coeff[k] * std::sin(static_cast<double>(k + 1) * t);
            return r;
        };
        f.drho_ = [cos_coeff, sin_coeff](double t) {
            double r = 0.0;
            for (size_t k = 0; k < cos_coeff.size(); ++k) {
                const double m = static_cast<double>(k + 1);
                r -= cos_coeff[k] * m * std::sin(m * t);
            }
            for (size_t k = 0; k < sin_coeff.size(); ++k) {
                const double m = static_cast<double>(k + 1);
                r += sin_coeff[k] * m * std::cos(m * t);
            }
            return r;
        };
        f.ddrho_ = [cos_coeff, sin_coeff](double t) {
            double r = 0.0;
            for (size_t k = 0; k < cos_coeff.size(); ++k) {
                const double m = static_cast<double>(k + 1);
                r -= cos_coeff[k] * m * m * std::cos(m * t);
            }
            for (size_t k = 0; k < sin_coeff.size(); ++k) {
                const double m = static_cast<double>(k + 1);
                r -= sin_coeff[k] * m * m * std::sin(m * t);
            }
            return r;
        };
        return f;
    }

    /// wa * a(theta) + wb * b(theta).
    static RadialFunction blend(double wa, const RadialFunction& a, double wb,
                                const RadialFunction& b) {
        RadialFunction f;
        f.rho_ = [wa, a, wb, b](double t) { return wa * a.rho(t) + wb * b.rho(t); };
        f.drho_ = [wa, a, wb, b](double t) { return wa * a.drho(t) + wb * b.drho(t); };
        f.ddrho_ = [wa, a, wb, b](double t) { return wa * a.ddrho(t) + wb * b.ddrho(t); };
        return f;
    }

    /// wa * a(theta + pi) + wb * b(theta): the first term is the profile of a
    /// point-reflected copy, which is how the seed image domain enters the
    /// homotopy's moving target.
    static RadialFunction blend_reflected(double wa, const RadialFunction& a, double wb,
                                          const RadialFunction& b) {
        RadialFunction f;
        f.rho_ = [wa, a, wb, b](double t) { return wa * a.rho(t + M_PI) + wb * b.rho(t); };
        f.drho_ = [wa, a, wb, b](double t) { return wa * a.drho(t + M_PI) + wb * b.drho(t); };
        f.ddrho_ = [wa, a, wb, b](double t) { return wa * a.ddrho(t + M_PI) + wb * b.ddrho(t); };
        return f;
    }

private:
    std::function<double(double)> rho_;
    std::function<double(double)> drho_;
    std::function<double(double)> ddrho_;
};

/// Star-shaped planar domain x = center + rho(theta)(cos, sin). Boundary
/// nodes are precomputed at construction for the distance queries.
class DomainSpec {
public:
    DomainSpec() = default;

    DomainSpec(Eigen::Vector2d center, RadialFunction radial, int boundary_nodes = 1024)
        : center_(std::move(center)), radial_(std::move(radial)), n_boundary_(boundary_nodes) {
        if (boundary_nodes < 16)
            throw std::invalid_argument("DomainSpec: at least 16 boundary nodes required");
        nodes_.resize(static_cast<size_t>(n_boundary_));
        double rho_min = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n_boundary_; ++i) {
            const double t = 2.0 * M_PI * i / n_boundary_;
            const double r = radial_.rho(t);
            rho_min = std::min(rho_min, r);
            nodes_[static_cast<size_t>(i)] = center_ + r * Eigen::Vector2d(std::cos(t), std::sin(t));
        }
        if (!(rho_min > 0.0))
            throw std::invalid_argument("DomainSpec: radial profile must stay positive");
    }

    [[nodiscard]] const Eigen::Vector2d& center() const { return center_; }
    [[nodiscard]] const RadialFunction& radial() const { return radial_; }
    [[nodiscard]] int boundary_nodes() const { return n_boundary_; }
    [[nodiscard]] const std::vector<Eigen::Vector2d>& boundary_polyline() const { return nodes_; }

    [[nodiscard]] double node_spacing() const {
        double rho_max = 0.0;
        for (int i = 0; i < n_boundary_; ++i)
            rho_max = std::max(rho_max, radial_.rho(2.0 * M_PI * i / n_boundary_));
        return 2.0 * M_PI * rho_max / n_boundary_;
    }

    [[nodiscard]] bool contains(const Eigen::Vector2d& x) const {
        const Eigen::Vector2d z = x - center_;
        const double r = z.norm();
        if (r == 0.0) return true;
        return r < radial_.rho(std::atan2(z[1], z[0]));
    }

    [[nodiscard]] Box bounding_box(double margin = 0.0) const {
        Eigen::Vector2d lo = nodes_.front(), hi = nodes_.front();
        for (const auto& p : nodes_) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const Eigen::Vector2d pad = Eigen::Vector2d::Constant(margin);
        Eigen::VectorXd l(2), h(2);
        l = lo - pad;
        h = hi + pad;
        return Box(l, h);
    }

private:
    Eigen::Vector2d center_ = Eigen::Vector2d::Zero();
    RadialFunction radial_;
    int n_boundary_ = 0;
    std::vector<Eigen::Vector2d> nodes_;
};

/// Quadratic distance barrier phi = a d^2 - b d.
struct BarrierParams {
    double a = 1.0;
    double b = 1.0;

    BarrierParams() = default;
    BarrierParams(double a_, double b_) : a(a_), b(b_) {
        if (!(a > 0 && b > 0)) throw std::invalid_argument("BarrierParams: a, b > 0 required");
    }

    [[nodiscard]] double value(double d) const { return a * d * d - b * d; }
    [[nodiscard]] double slope(double d) const { return 2.0 * a * d - b; }
};

/// Boundary data at a parameter angle: position, outer unit normal, unit
/// tangent, curvature (positive where the boundary bends like a disc).
struct BoundaryFrame {
    Eigen::Vector2d point;
    Eigen::Vector2d normal;
    Eigen::Vector2d tangent;
    double curvature = 0.0;
};

[[nodiscard]] inline BoundaryFrame boundary_frame(const DomainSpec& dom, double theta) {
    const double r = dom.radial().rho(theta);
    const double dr = dom.radial().drho(theta);
    const double ddr = dom.radial().ddrho(theta);
    const Eigen::Vector2d e(std::cos(theta), std::sin(theta));
    const Eigen::Vector2d ep(-std::sin(theta), std::cos(theta));

    BoundaryFrame f;
    f.point = dom.center() + r * e;
    const Eigen::Vector2d dp = dr * e + r * ep; // d(point)/d(theta)
    f.tangent = dp.normalized();
    f.normal = Eigen::Vector2d(f.tangent[1], -f.tangent[0]); // tangent rotated by -90 deg
    const double denom = std::pow(r * r + dr * dr, 1.5);
    f.curvature = (r * r + 2.0 * dr * dr - r * ddr) / denom;
    return f;
}

struct NearestBoundary {
    double distance = 0.0; // signed, negative inside
    Eigen::Vector2d point = Eigen::Vector2d::Zero();
    double theta = 0.0;
};

/// Signed distance to the sampled boundary polyline (negative inside,
/// star-shaped containment test for the sign). Accurate to the node spacing.
[[nodiscard]] inline NearestBoundary nearest_boundary(const DomainSpec& dom,
                                                      const Eigen::Vector2d& x) {
    const auto& nodes = dom.boundary_polyline();
    double best = std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (int i = 0; i < dom.boundary_nodes(); ++i) {
        const double d = (x - nodes[static_cast<size_t>(i)]).norm();
        if (d < best) {
            best = d;
            best_i = i;
        }
    }
    NearestBoundary nb;
    nb.point = nodes[static_cast<size_t>(best_i)];
    nb.theta = 2.0 * M_PI * best_i / dom.boundary_nodes();
    nb.distance = dom.contains(x) ? -best : best;
    return nb;
}

[[nodiscard]] inline double signed_distance(const DomainSpec& dom, const Eigen::Vector2d& x) {
    return nearest_boundary(dom, x).distance;
}

/// Exact projection onto the smooth boundary curve: Newton refinement of the
/// polyline nearest node on g(theta) = (x - P(theta)) . P'(theta) = 0. The
/// resulting distance is smooth in x near the curve, which the boundary rows
/// of the solver need (the raw polyline minimum has derivative kinks at the
/// node Voronoi edges). Falls back to the node answer if the refinement
/// misbehaves.
[[nodiscard]] inline NearestBoundary projected_boundary(const DomainSpec& dom,
                                                        const Eigen::Vector2d& x) {
    const NearestBoundary seed = nearest_boundary(dom, x);
    auto point = [&](double t) {
        return Eigen::Vector2d(dom.center() +
                               dom.radial().rho(t) * Eigen::Vector2d(std::cos(t), std::sin(t)));
    };
    auto dpoint = [&](double t) {
        const double r = dom.radial().rho(t), dr = dom.radial().drho(t);
        const Eigen::Vector2d e(std::cos(t), std::sin(t)), ep(-std::sin(t), std::cos(t));
        return Eigen::Vector2d(dr * e + r * ep);
    };
    auto ddpoint = [&](double t) {
        const double r = dom.radial().rho(t), dr = dom.radial().drho(t),
                     ddr = dom.radial().ddrho(t);
        const Eigen::Vector2d e(std::cos(t), std::sin(t)), ep(-std::sin(t), std::cos(t));
        return Eigen::Vector2d((ddr - r) * e + 2.0 * dr * ep);
    };
    double t = seed.theta;
    const double window = 4.0 * M_PI / dom.boundary_nodes();
    bool ok = false;
    for (int it = 0; it < 12; ++it) {
        const Eigen::Vector2d diff = x - point(t);
        const Eigen::Vector2d dp = dpoint(t);
        const double g = diff.dot(dp);
        const double gp = -dp.squaredNorm() + diff.dot(ddpoint(t));
        if (std::abs(gp) < 1e-300) break;
        const double step = -g / gp;
        t += step;
        if (!std::isfinite(t) || std::abs(t - seed.theta) > window) break;
        if (std::abs(step) < 1e-14) {
            ok = true;
            break;
        }
    }
    if (!ok) return seed;
    NearestBoundary nb;
    nb.theta = t;
    nb.point = point(t);
    const double d = (x - nb.point).norm();
    nb.distance = dom.contains(x) ? -d : d;
    return nb;
}

/// Signed distance through the smooth projection, with its gradient (the
/// outward unit normal direction at the projection point).
struct SmoothDistance {
    double value = 0.0;
    Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
};

[[nodiscard]] inline SmoothDistance projected_distance(const DomainSpec& dom,
                                                       const Eigen::Vector2d& x) {
    const NearestBoundary nb = projected_boundary(dom, x);
    SmoothDistance sd;
    sd.value = nb.distance;
    const Eigen::Vector2d diff = x - nb.point;
    const double len = diff.norm();
    if (len < 1e-12) {
        sd.gradient = boundary_frame(dom, nb.theta).normal;
    } else {
        sd.gradient = (nb.distance < 0.0 ? -1.0 : 1.0) * diff / len;
    }
    return sd;
}

/// Gradient of the signed distance: the unit vector from the nearest boundary
/// node outward through x (the exact gradient of the discrete distance).
[[nodiscard]] inline Eigen::Vector2d signed_distance_gradient(const DomainSpec& dom,
                                                              const Eigen::Vector2d& x) {
    const NearestBoundary nb = nearest_boundary(dom, x);
    const Eigen::Vector2d diff = x - nb.point;
    const double len = diff.norm();
    if (len < 1e-14) return boundary_frame(dom, nb.theta).normal;
    return (nb.distance < 0.0 ? -1.0 : 1.0) * diff / len;
}

/// Smooth defining function phi(y) = |y - c|^2 - rho(theta(y))^2: negative
/// inside, zero on the boundary, gradient 2(y - c) on a centered disc. Used
/// by the diagnostics where a C^1 defining function is wanted instead of the
/// piecewise distance.
[[nodiscard]] inline double radial_defining_value(const DomainSpec& dom, const Eigen::Vector2d& y) {
    const Eigen::Vector2d z = y - dom.center();
    const double theta = std::atan2(z[1], z[0]);
    const double r = dom.radial().rho(theta);
    return z.squaredNorm() - r * r;
}

[[nodiscard]] inline Eigen::Vector2d radial_defining_gradient(const DomainSpec& dom,
                                                              const Eigen::Vector2d& y) {
    const Eigen::Vector2d z = y - dom.center();
    const double rr = z.squaredNorm();
    if (rr < 1e-20) return Eigen::Vector2d::Zero();
    const double theta = std::atan2(z[1], z[0]);
    const double r = dom.radial().rho(theta);
    const double dr = dom.radial().drho(theta);
    const Eigen::Vector2d grad_theta(-z[1] / rr, z[0] / rr);
    return 2.0 * z - 2.0 * r * dr * grad_theta;
}

enum class ConvexityRole { kCost, kCostStar };

struct ConvexityReport {
    double delta0 = 0.0; // min of the boundary form; positive certifies uniform convexity
    double worst_theta = 0.0;
    Eigen::Vector2d worst_x = Eigen::Vector2d::Zero();
    Eigen::Vector2d worst_y = Eigen::Vector2d::Zero();
};

/// Relative convexity of domA with respect to domB under the cost:
///
///   [D_i gamma_j(x) - c^{l,k} c_{ij,l}(x, y) gamma_k(x)] tau_i tau_j >= delta_0
///
/// minimized over boundary points x of domA and grid points y of domB. On the
/// boundary the tangential form of D gamma reduces to the curvature, which is
/// how the first term is evaluated (no off-boundary extension involved).
/// Role kCostStar runs the same form for the adjoint cost c*(x,y) = c(y,x).
[[nodiscard]] inline ConvexityReport relative_c_convexity(const DomainSpec& domA,
                                                          const DomainSpec& domB,
                                                          const CostModel& model,
                                                          ConvexityRole role,
                                                          int boundary_samples = 256,
                                                          int target_samples = 64) {
    const CostModel use = (role == ConvexityRole::kCostStar) ? model.swapped() : model;

    // polar grid over domB, interior
    std::vector<Eigen::Vector2d> targets;
    const int nr = std::max(2, static_cast<int>(std::sqrt(target_samples)));
    const int nt = std::max(4, target_samples / nr);
    targets.reserve(static_cast<size_t>(nr * nt) + 1);
    targets.push_back(domB.center());
    for (int i = 1; i <= nr; ++i) {
        const double frac = static_cast<double>(i) / (nr + 1);
        for (int j = 0; j < nt; ++j) {
            const double t = 2.0 * M_PI * j / nt;
            targets.push_back(domB.center() +
                              frac * domB.radial().rho(t) * Eigen::Vector2d(std::cos(t), std::sin(t)));
        }
    }

    ConvexityReport rep;
    rep.delta0 = std::numeric_limits<double>::infinity();
    for (int bi = 0; bi < boundary_samples; ++bi) {
        const double theta = 2.0 * M_PI * bi / boundary_samples;
        const BoundaryFrame f = boundary_frame(domA, theta);
        for (const auto& y : targets) {
            const CostTensor3 c3 = use.third_xxy(f.point, y);
            const Eigen::MatrixXd w = use.inv_xy(f.point, y);
            double corr = 0.0;
            for (int l = 0; l < 2; ++l)
                for (int k = 0; k < 2; ++k)
                    corr += w(l, k) * f.normal[k] *
                            (f.tangent.transpose() * c3[static_cast<size_t>(l)] * f.tangent)(0, 0);
            const double form = f.curvature - corr;
            if (form < rep.delta0) {
                rep.delta0 = form;
                rep.worst_theta = theta;
                rep.worst_x = f.point;
                rep.worst_y = y;
            }
        }
    }
    return rep;
}

struct BarrierConditionReport {
    double delta_tilde = 0.0; // min eigenvalue of the barrier form over samples
    Eigen::Vector2d worst_x = Eigen::Vector2d::Zero();
    Eigen::Vector2d worst_p = Eigen::Vector2d::Zero();
};

/// Checks the barrier condition for a candidate function phi~:
///
///   [D_ij phi~(x) - D_{p_k} A_ij(x, p) D_k phi~(x)] xi_i xi_j >= delta~ |xi|^2
///
/// over sampled x in dom and p in the gradient range generated by domB.
/// phi~ is probed by central second differences; D_p A comes from the
/// finite-difference chain through a_matrix.
[[nodiscard]] inline BarrierConditionReport barrier_condition_check(
    const DomainSpec& dom, const CostModel& model,
    const std::function<double(const Eigen::Vector2d&)>& phi_tilde, int sample_budget,
    const DomainSpec& domB, std::mt19937_64& rng) {
    if (sample_budget <= 0) throw EmptySampleSet("barrier_condition_check: positive budget required");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double h = 1e-4;

    auto phi_hess = [&](const Eigen::Vector2d& x) {
        Eigen::Matrix2d m;
        const double c0 = phi_tilde(x);
        for (int i = 0; i < 2; ++i) {
            Eigen::Vector2d up = x, dn = x;
            up[i] += h;
            dn[i] -= h;
            m(i, i) = (phi_tilde(up) - 2 * c0 + phi_tilde(dn)) / (h * h);
        }
        Eigen::Vector2d pp = x, pm = x, mp = x, mm = x;
        pp += Eigen::Vector2d(h, h);
        pm += Eigen::Vector2d(h, -h);
        mp += Eigen::Vector2d(-h, h);
        mm += Eigen::Vector2d(-h, -h);
        m(0, 1) = m(1, 0) = (phi_tilde(pp) - phi_tilde(pm) - phi_tilde(mp) + phi_tilde(mm)) / (4 * h * h);
        return m;
    };
    auto phi_grad = [&](const Eigen::Vector2d& x) {
        Eigen::Vector2d g;
        for (int i = 0; i < 2; ++i) {
            Eigen::Vector2d up = x, dn = x;
            up[i] += h;
            dn[i] -= h;
            g[i] = (phi_tilde(up) - phi_tilde(dn)) / (2 * h);
        }
        return g;
    };

    BarrierConditionReport rep;
    rep.delta_tilde = std::numeric_limits<double>::infinity();
    for (int k = 0; k < sample_budget; ++k) {
        const double tx = 2.0 * M_PI * unit(rng);
        const double rx = std::sqrt(unit(rng));
        const Eigen::Vector2d x =
            dom.center() + rx * dom.radial().rho(tx) * Eigen::Vector2d(std::cos(tx), std::sin(tx));
        const double ty = 2.0 * M_PI * unit(rng);
        const double ry = std::sqrt(unit(rng));
        const Eigen::Vector2d y =
            domB.center() + ry * domB.radial().rho(ty) * Eigen::Vector2d(std::cos(ty), std::sin(ty));
        const Eigen::VectorXd p = model.grad_x(x, y);

        const CostTensor3 dap = a_matrix_grad_p_fd(model, x, p, Eigen::VectorXd(y));
        const Eigen::Vector2d g = phi_grad(x);
        Eigen::Matrix2d m = phi_hess(x);
        for (int kk = 0; kk < 2; ++kk) m -= dap[static_cast<size_t>(kk)] * g[kk];
        const Eigen::Matrix2d sym = 0.5 * (m + m.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
        const double lam = es.eigenvalues().minCoeff();
        if (lam < rep.delta_tilde) {
            rep.delta_tilde = lam;
            rep.worst_x = x;
            rep.worst_p = p;
        }
    }
    return rep;
}

} // namespace qtrans
