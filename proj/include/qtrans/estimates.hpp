#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qtrans/errors.hpp"
#include "qtrans/geometry.hpp"
#include "qtrans/solver.hpp"

// Post-hoc verification of the structural identities and a priori bounds on
// computed solutions: obliqueness of the boundary operator, the Urbas-type
// product identity, and the solution / second-derivative bound summaries.
// These are diagnostics over a finished field; nothing here feeds back into
// the solver.

namespace qtrans {

/// Per-boundary-node obliqueness data.
struct ObliquenessReport {
    double min_inner_product = 0.0; // min over boundary nodes of beta . gamma
    int min_node = -1;
    std::vector<double> inner_products;  // per boundary node
    std::vector<double> chi;             // |phi+_k c^{k,l} w_il| projected on gamma
    bool singular_w = false;             // some boundary node had w below the floor

    std::vector<int> node_ids;
};

/// Computes beta_k = phi+_i(T_u) c^{i,k}(x, T_u) and the boundary normal at
/// every boundary node; reports the minimal inner product. phi+ is the smooth
/// radial defining function of the target (gradient 2y on a centered disc).
/// Nodes with singular w are flagged, never fatal here.
[[nodiscard]] inline ObliquenessReport obliqueness_report(const PolarGrid& grid,
                                                          const ProblemSpec& spec,
                                                          const Eigen::VectorXd& u) {
    const FieldDerivatives d = grid.derivatives(u);
    ObliquenessReport rep;
    rep.min_inner_product = std::numeric_limits<double>::infinity();
    for (int id = 0; id < grid.node_count(); ++id) {
        if (!grid.is_boundary(id)) continue;
        const Eigen::Vector2d x = grid.position(id);
        const Eigen::VectorXd y = y_map(spec.cost, x, d.grad[static_cast<size_t>(id)]).y;
        const Eigen::Vector2d gphi = radial_defining_gradient(spec.target, Eigen::Vector2d(y));
        const Eigen::MatrixXd w_inv_xy = spec.cost.inv_xy(x, y);
        Eigen::Vector2d beta;
        for (int k = 0; k < 2; ++k)
            beta[k] = gphi[0] * w_inv_xy(0, k) + gphi[1] * w_inv_xy(1, k);
        const BoundaryFrame frame = boundary_frame(spec.source, grid.theta(id));
        const double ip = beta.dot(frame.normal);

        const Eigen::MatrixXd a = spec.cost.hess_xx(x, y);
        const Eigen::Matrix2d w = d.hess[static_cast<size_t>(id)] - Eigen::Matrix2d(a);
        const Eigen::Vector2d lam = detail::sym2_eigenvalues(0.5 * (w + w.transpose()));
        if (!(lam[1] > spec.tol.admissibility_floor)) rep.singular_w = true;
        // chi gamma_i = phi+_k c^{k,l} w_il: recover chi as the projection on gamma
        Eigen::Vector2d m;
        for (int i = 0; i < 2; ++i) m[i] = beta[0] * w(0, i) + beta[1] * w(1, i);
        rep.chi.push_back(std::abs(m.dot(frame.normal)));

        rep.inner_products.push_back(ip);
        rep.node_ids.push_back(id);
        if (ip < rep.min_inner_product) {
            rep.min_inner_product = ip;
            rep.min_node = id;
        }
    }
    return rep;
}

/// Both sides of the Urbas-type product identity at one boundary node, given
/// the modified Hessian w, the boundary normal and the vector
/// beta_k = phi+_i c^{i,k}. The identity reads
///   (beta . gamma)^2 = (w^{ij} gamma_i gamma_j) (w_kl c^{q,k} c^{r,l} phi+_q phi+_r)
/// and the second factor contracts to beta^T w beta.
struct UrbasSides {
    double lhs = 0.0;
    double rhs = 0.0;

    [[nodiscard]] double relative_residual() const {
        return std::abs(lhs - rhs) / std::max(1e-300, std::abs(lhs));
    }
};

[[nodiscard]] inline UrbasSides urbas_sides(const Eigen::Matrix2d& w, const Eigen::Vector2d& gamma,
                                            const Eigen::Vector2d& beta, double floor = 1e-10) {
    const Eigen::Vector2d lam = detail::sym2_eigenvalues(0.5 * (w + w.transpose()));
    if (!(lam[1] > floor)) throw SingularW("urbas_sides: modified Hessian not invertible");
    UrbasSides s;
    const double bg = beta.dot(gamma);
    s.lhs = bg * bg;
    const Eigen::Matrix2d w_inv = w.inverse();
    s.rhs = (gamma.transpose() * w_inv * gamma)(0, 0) * (beta.transpose() * w * beta)(0, 0);
    return s;
}

/// Max relative residual of the identity over the boundary ring, with w from
/// the (one-sided, diagnostic-grade) discrete second derivatives. The
/// identity holds on fields satisfying the boundary condition; on arbitrary
/// fields the number is reported without meaning.
[[nodiscard]] inline double urbas_identity_check(const PolarGrid& grid, const ProblemSpec& spec,
                                                 const Eigen::VectorXd& u) {
    const FieldDerivatives d = grid.derivatives(u);
    double worst = 0.0;
    for (int id = 0; id < grid.node_count(); ++id) {
        if (!grid.is_boundary(id)) continue;
        const Eigen::Vector2d x = grid.position(id);
        const Eigen::VectorXd y = y_map(spec.cost, x, d.grad[static_cast<size_t>(id)]).y;
        const Eigen::Vector2d gphi = radial_defining_gradient(spec.target, Eigen::Vector2d(y));
        const Eigen::MatrixXd w_inv_xy = spec.cost.inv_xy(x, y);
        Eigen::Vector2d beta;
        for (int k = 0; k < 2; ++k)
            beta[k] = gphi[0] * w_inv_xy(0, k) + gphi[1] * w_inv_xy(1, k);
        const Eigen::MatrixXd a = spec.cost.hess_xx(x, y);
        const Eigen::Matrix2d w =
            0.5 * (d.hess[static_cast<size_t>(id)] + d.hess[static_cast<size_t>(id)].transpose()) -
            Eigen::Matrix2d(0.5 * (a + a.transpose()));
        const BoundaryFrame frame = boundary_frame(spec.source, grid.theta(id));
        worst = std::max(worst,
                         urbas_sides(w, frame.normal, beta, spec.tol.admissibility_floor)
                             .relative_residual());
    }
    return worst;
}

/// Solution and second-derivative bound summary of a computed field.
struct DiagnosticsReport {
    double obliqueness_min = 0.0;
    double urbas_residual_max = 0.0;
    double sup_u = 0.0;
    double inf_u = 0.0;
    double sup_hess_interior = 0.0;
    double sup_hess_boundary = 0.0;
    double interior_to_boundary_ratio = 0.0; // sup|D2u| / (1 + boundary sup)
    double image_hausdorff = 0.0;            // between T_u(boundary) and the target boundary
    double min_lambda_w = 0.0;               // admissibility margin over all nodes
    bool singular_w = false;
};

/// Symmetric Hausdorff distance between the mapped boundary ring and the
/// target boundary polyline.
[[nodiscard]] inline double image_hausdorff_distance(const PolarGrid& grid,
                                                     const ProblemSpec& spec,
                                                     const Eigen::VectorXd& u) {
    const FieldDerivatives d = grid.derivatives(u);
    std::vector<Eigen::Vector2d> image;
    double forward = 0.0;
    for (int id = 0; id < grid.node_count(); ++id) {
        if (!grid.is_boundary(id)) continue;
        const Eigen::VectorXd y = y_map(spec.cost, grid.position(id), d.grad[static_cast<size_t>(id)]).y;
        const Eigen::Vector2d yy(y[0], y[1]);
        image.push_back(yy);
        forward = std::max(forward, std::abs(projected_distance(spec.target, yy).value));
    }
    double backward = 0.0;
    for (const auto& q : spec.target.boundary_polyline()) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : image) best = std::min(best, (q - p).norm());
        backward = std::max(backward, best);
    }
    // the mapped ring is a polyline as well: allow its own node spacing
    return std::max(forward, backward);
}

[[nodiscard]] inline DiagnosticsReport bounds_report(const PolarGrid& grid,
                                                     const ProblemSpec& spec,
                                                     const Eigen::VectorXd& u) {
    DiagnosticsReport rep;
    const FieldDerivatives d = grid.derivatives(u);
    rep.sup_u = u.maxCoeff();
    rep.inf_u = u.minCoeff();
    rep.min_lambda_w = std::numeric_limits<double>::infinity();
    for (int id = 0; id < grid.node_count(); ++id) {
        const Eigen::Matrix2d h = d.hess[static_cast<size_t>(id)];
        const double mag = h.cwiseAbs().maxCoeff();
        if (grid.is_boundary(id))
            rep.sup_hess_boundary = std::max(rep.sup_hess_boundary, mag);
        else
            rep.sup_hess_interior = std::max(rep.sup_hess_interior, mag);
        const Eigen::MatrixXd a =
            a_matrix(spec.cost, grid.position(id), d.grad[static_cast<size_t>(id)]);
        const Eigen::Matrix2d w = 0.5 * (h + h.transpose()) - Eigen::Matrix2d(0.5 * (a + a.transpose()));
        rep.min_lambda_w = std::min(rep.min_lambda_w, detail::sym2_eigenvalues(w)[1]);
    }
    rep.interior_to_boundary_ratio = rep.sup_hess_interior / (1.0 + rep.sup_hess_boundary);

    const ObliquenessReport ob = obliqueness_report(grid, spec, u);
    rep.obliqueness_min = ob.min_inner_product;
    rep.singular_w = ob.singular_w;
    if (!rep.singular_w) rep.urbas_residual_max = urbas_identity_check(grid, spec, u);
    rep.image_hausdorff = image_hausdorff_distance(grid, spec, u);
    return rep;
}

} // namespace qtrans
