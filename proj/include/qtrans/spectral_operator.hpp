#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "qtrans/errors.hpp"
#include "qtrans/symfun.hpp"

// Matrix-level view of the quotient operator:
//
//     F[M] = sigma_{n,l}(eigenvalues of M),
//
// its linearization F^{ij} = dF/dM_ij, and the second-derivative contraction
// F^{ij,kl} Xi_ij Xi_kl used by the concavity argument. M plays the role of
// the modified Hessian w = D^2 u - A; admissibility means positive definite.

namespace qtrans {

/// Positive-definiteness floor used when admitting a modified Hessian:
/// smallest eigenvalue must exceed kAdmissibilityFloor (absolute).
inline constexpr double kAdmissibilityFloor = 1e-12;

/// Symmetric n x n matrix in the role of w = D^2 u - A. Construction
/// symmetrizes and rejects inputs whose asymmetry exceeds 1e-12 * ||M||.
class ModifiedHessian {
public:
    explicit ModifiedHessian(const Eigen::MatrixXd& m) {
        if (m.rows() != m.cols()) throw std::invalid_argument("ModifiedHessian: square matrix required");
        const double norm = m.norm();
        const double asym = (m - m.transpose()).norm();
        if (asym > 1e-12 * std::max(1.0, norm))
            throw std::invalid_argument("ModifiedHessian: matrix is not symmetric");
        entries_ = 0.5 * (m + m.transpose());
    }

    [[nodiscard]] const Eigen::MatrixXd& entries() const { return entries_; }
    [[nodiscard]] int n() const { return static_cast<int>(entries_.rows()); }

private:
    Eigen::MatrixXd entries_;
};

/// Eigen-decomposition M = Q diag(lambda) Q^T with eigenvalues sorted
/// descending and eigenvector columns aligned.
struct SpectralDecomposition {
    Spectrum eigenvalues;
    Eigen::MatrixXd eigenvectors; // columns

    [[nodiscard]] Eigen::MatrixXd reconstruct() const {
        return eigenvectors * eigenvalues.values.asDiagonal() * eigenvectors.transpose();
    }
};

[[nodiscard]] inline SpectralDecomposition decompose(const ModifiedHessian& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.entries());
    if (es.info() != Eigen::Success)
        throw NumericError("decompose: symmetric eigensolver failed");
    const int n = m.n();
    // Eigen returns ascending order; flip to descending.
    Eigen::VectorXd vals(n);
    Eigen::MatrixXd vecs(n, n);
    for (int i = 0; i < n; ++i) {
        vals[i] = es.eigenvalues()[n - 1 - i];
        vecs.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return SpectralDecomposition{Spectrum(vals), vecs};
}

inline void require_admissible(const SpectralDecomposition& d) {
    const double lambda_min = d.eigenvalues.values[d.eigenvalues.n() - 1];
    if (!(lambda_min > kAdmissibilityFloor))
        throw NotAdmissible("operator argument is not positive definite (lambda_min = " +
                            std::to_string(lambda_min) + ")");
}

/// F[M] = sigma_{n,l} of the spectrum of M. Invariant under orthogonal
/// conjugation; requires M positive definite.
[[nodiscard]] inline double eval_F(const ModifiedHessian& m, const QuotientParams& p) {
    const auto d = decompose(m);
    require_admissible(d);
    return sigma_quotient(d.eigenvalues, p);
}

/// Linearization F^{ij} = Q diag(f_1, ..., f_n) Q^T in the eigenbasis of M;
/// symmetric positive definite for admissible M.
[[nodiscard]] inline Eigen::MatrixXd linearization(const ModifiedHessian& m,
                                                   const QuotientParams& p) {
    const auto d = decompose(m);
    require_admissible(d);
    const Eigen::VectorXd f = sigma_grad(d.eigenvalues, p);
    return d.eigenvectors * f.asDiagonal() * d.eigenvectors.transpose();
}

/// Second-derivative contraction
///
///   F^{ij,kl} Xi_ij Xi_kl = sum_{i,j} f_ij Xi~_ii Xi~_jj
///                         + sum_{i != j} (f_i - f_j)/(lambda_i - lambda_j) Xi~_ij^2,
///
/// with Xi~ = Q^T Xi Q the direction rotated into the eigenbasis of M and the
/// divided differences interpreted as analytic limits at coincident
/// eigenvalues. Nonpositive (up to roundoff) for the concave sigma_{n,l}.
[[nodiscard]] inline double second_contraction(const ModifiedHessian& m, const QuotientParams& p,
                                               const Eigen::MatrixXd& xi) {
    if (xi.rows() != m.n() || xi.cols() != m.n())
        throw std::invalid_argument("second_contraction: direction has wrong dimensions");
    if ((xi - xi.transpose()).norm() > 1e-12 * std::max(1.0, xi.norm()))
        throw std::invalid_argument("second_contraction: direction must be symmetric");

    const auto d = decompose(m);
    require_admissible(d);
    const int n = m.n();
    const Eigen::MatrixXd xr = d.eigenvectors.transpose() * xi * d.eigenvectors;

    const Eigen::MatrixXd hess = sigma_hess(d.eigenvalues, p);
    double value = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) value += hess(i, j) * xr(i, i) * xr(j, j);

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dd = sigma_divided_difference(d.eigenvalues, p, i, j);
            value += dd * xr(i, j) * xr(i, j);
        }
    }
    return value;
}

} // namespace qtrans
