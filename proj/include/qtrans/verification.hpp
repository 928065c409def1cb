#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "qtrans/spectral_operator.hpp"
#include "qtrans/symfun.hpp"

// Randomized property suites over the symmetric-function algebra and the
// matrix operator: identities at tight absolute tolerances, inequality
// margins, derivative cross-checks against independent finite-difference
// oracles, concavity, and frame covariance. The command-line `verify`
// subcommand drives these; the figures below are the library's acceptance
// tolerances, pinned here rather than in configuration.

namespace qtrans {

struct SuiteResult {
    std::string suite;
    int samples = 0;
    /// Worst value in the orientation where pass means <= threshold
    /// (residuals) or >= threshold (margins); see `pass`.
    double worst = 0.0;
    double threshold = 0.0;
    bool margin_oriented = false; // true: pass iff worst >= threshold
    bool pass = false;
    std::vector<double> worst_sample; // the lambda that attained `worst`
};

namespace detail {

inline Eigen::VectorXd sample_cone(std::mt19937_64& rng, int n, double lo = 0.1, double hi = 10.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

inline void track_worst_residual(SuiteResult& r, double value, const Eigen::VectorXd& lam) {
    if (value > r.worst) {
        r.worst = value;
        r.worst_sample.assign(lam.data(), lam.data() + lam.size());
    }
}

inline void track_worst_margin(SuiteResult& r, double value, const Eigen::VectorXd& lam) {
    if (value < r.worst) {
        r.worst = value;
        r.worst_sample.assign(lam.data(), lam.data() + lam.size());
    }
}

inline long double sigma_value_ld(const Eigen::VectorXd& v, const QuotientParams& p) {
    const auto s = esf_all(v);
    return powl(s[static_cast<size_t>(p.n)] / esf_pick(s, p.l),
                1.0L / static_cast<long double>(p.n - p.l));
}

} // namespace detail

/// Options shared by the suites: sample counts and the dimensions swept.
struct VerifyOptions {
    int identity_samples = 10000;
    int derivative_samples = 1000;
    int inequality_samples = 10000;
    int contraction_samples = 500;
    std::vector<int> dims = {2, 3, 4, 5, 6, 7, 8};
    /// Test-only harness self-check: negates one term of the restricted-sum
    /// identity so the suite must fail.
    bool inject_bug = false;
};

/// sum_i S_{k;i} = (n-k) S_k, the split identity, and the Euler identity for
/// S_k; absolute residuals <= 1e-10 over the sampling box.
inline SuiteResult suite_esf_identities(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"esf-identities", 0, 0.0, 1e-10, false, false, {}};
    const int per_dim = std::max(1, opt.identity_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                IdentityReport rep = verify_identities(lam, QuotientParams(n, l));
                if (opt.inject_bug) {
                    // flip the sign of the (n - k) S_k term at k = 1
                    const double sk = elem_sym(lam, 1);
                    double sum = 0.0;
                    for (int i = 0; i < n; ++i) sum += elem_sym_restricted(lam, 1, {i});
                    rep.restricted_sum = std::abs(sum + (n - 1) * sk);
                }
                const double worst = std::max({rep.restricted_sum, rep.split, rep.euler_restricted});
                detail::track_worst_residual(r, worst, v);
                ++r.samples;
            }
        }
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Closed forms for sum_i f_i and sum_i f_i lambda_i^2 against the gradient.
inline SuiteResult suite_quotient_trace(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"quotient-trace-identities", 0, 0.0, 1e-10, false, false, {}};
    const int per_dim = std::max(1, opt.identity_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                const IdentityReport rep = verify_identities(lam, QuotientParams(n, l));
                detail::track_worst_residual(r, std::max(rep.grad_trace, rep.grad_second_moment), v);
                ++r.samples;
            }
        }
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Euler identity sum f_i lambda_i = f (relative) and degree-one homogeneity.
inline SuiteResult suite_euler_homogeneity(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"euler-homogeneity", 0, 0.0, 1e-10, false, false, {}};
    std::uniform_real_distribution<double> tdist(0.25, 4.0);
    const int per_dim = std::max(1, opt.identity_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                const QuotientParams p(n, l);
                const double f = sigma_quotient(lam, p);
                const double euler = std::abs(sigma_grad(lam, p).dot(v) - f) / std::abs(f);
                const double t = tdist(rng);
                const double hom =
                    std::abs(sigma_quotient(Spectrum(Eigen::VectorXd(t * v)), p) - t * f) /
                    std::abs(t * f);
                detail::track_worst_residual(r, std::max(euler, hom), v);
                ++r.samples;
            }
        }
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Gradient against central differences (step 1e-5 lambda_i), relative error.
inline SuiteResult suite_gradient_fd(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"gradient-fd", 0, 0.0, 1e-6, false, false, {}};
    const int per_dim = std::max(1, opt.derivative_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                const QuotientParams p(n, l);
                const Eigen::VectorXd g = sigma_grad(lam, p);
                for (int i = 0; i < n; ++i) {
                    const double h = 1e-5 * v[i];
                    Eigen::VectorXd up = v, dn = v;
                    up[i] += h;
                    dn[i] -= h;
                    const double fd = static_cast<double>(
                        (detail::sigma_value_ld(up, p) - detail::sigma_value_ld(dn, p)) / (2 * h));
                    detail::track_worst_residual(r, std::abs(g[i] - fd) / std::abs(fd), v);
                }
                ++r.samples;
            }
        }
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Hessian against Richardson-extrapolated central differences; entrywise
/// error relative to the matrix scale.
inline SuiteResult suite_hessian_fd(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"hessian-fd", 0, 0.0, 1e-6, false, false, {}};
    const int per_dim = std::max(1, opt.derivative_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                const QuotientParams p(n, l);
                const Eigen::MatrixXd hmat = sigma_hess(lam, p);
                auto entry = [&](int i, int j, double hi, double hj) -> long double {
                    Eigen::VectorXd pp = v, pm = v, mp = v, mm = v;
                    pp[i] += hi; pp[j] += hj;
                    pm[i] += hi; pm[j] -= hj;
                    mp[i] -= hi; mp[j] += hj;
                    mm[i] -= hi; mm[j] -= hj;
                    if (i == j)
                        return (detail::sigma_value_ld(pp, p) - 2.0L * detail::sigma_value_ld(v, p) +
                                detail::sigma_value_ld(mm, p)) /
                               (4.0L * static_cast<long double>(hi) * hj);
                    return (detail::sigma_value_ld(pp, p) - detail::sigma_value_ld(pm, p) -
                            detail::sigma_value_ld(mp, p) + detail::sigma_value_ld(mm, p)) /
                           (4.0L * static_cast<long double>(hi) * hj);
                };
                const double scale = hmat.cwiseAbs().maxCoeff();
                for (int i = 0; i < n; ++i) {
                    for (int j = i; j < n; ++j) {
                        const double hi = 1e-4 * v[i], hj = 1e-4 * v[j];
                        const long double coarse = entry(i, j, hi, hj);
                        const long double fine = entry(i, j, hi / 2, hj / 2);
                        const double fd = static_cast<double>((4.0L * fine - coarse) / 3.0L);
                        const double rel =
                            std::abs(hmat(i, j) - fd) / std::max(std::abs(fd), 1e-2 * scale);
                        detail::track_worst_residual(r, rel, v);
                    }
                }
                ++r.samples;
            }
        }
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Largest Hessian eigenvalue over the cone (concavity).
inline SuiteResult suite_hessian_concavity(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"hessian-concavity", 0, -std::numeric_limits<double>::infinity(), 1e-10, false,
                  false, {}};
    const int per_dim = std::max(1, opt.derivative_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_hess(lam, QuotientParams(n, l)));
                detail::track_worst_residual(r, es.eigenvalues().maxCoeff(), v);
                ++r.samples;
            }
        }
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Newton inequality and the trace sandwich, as signed margins >= -1e-12.
inline SuiteResult suite_newton_sandwich(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"newton-sandwich", 0, std::numeric_limits<double>::infinity(), -1e-12, true,
                  false, {}};
    const int per_dim = std::max(1, opt.inequality_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                const InequalityReport rep = verify_inequalities(lam, QuotientParams(n, l));
                detail::track_worst_margin(
                    r, std::min({rep.newton, rep.trace_lower, rep.trace_upper}), v);
                ++r.samples;
            }
        }
    }
    r.pass = r.worst >= r.threshold;
    return r;
}

/// Curvature bounds (top eigenvalue and cross quotients), l >= 1.
inline SuiteResult suite_curvature_margins(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"curvature-margins", 0, std::numeric_limits<double>::infinity(), -1e-12, true,
                  false, {}};
    const int per_dim = std::max(1, opt.inequality_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 1; l < n; ++l) {
                const InequalityReport rep = verify_inequalities(lam, QuotientParams(n, l));
                detail::track_worst_margin(r, std::min(rep.top_curvature, rep.cross_curvature), v);
                ++r.samples;
            }
        }
    }
    r.pass = r.worst >= r.threshold;
    return r;
}

/// Monotonicity sign of the divided differences: the measured quotient
/// (f_i - f_j)/(lambda_i - lambda_j) is nonpositive on the cone.
inline SuiteResult suite_divided_difference_sign(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"divided-difference-sign", 0, std::numeric_limits<double>::infinity(), -1e-12,
                  true, false, {}};
    const int per_dim = std::max(1, opt.inequality_samples / static_cast<int>(opt.dims.size()));
    for (int n : opt.dims) {
        for (int s = 0; s < per_dim; ++s) {
            const Eigen::VectorXd v = detail::sample_cone(rng, n);
            const Spectrum lam(v);
            for (int l = 0; l < n; ++l) {
                const InequalityReport rep = verify_inequalities(lam, QuotientParams(n, l));
                detail::track_worst_margin(r, rep.divided_difference, v);
                ++r.samples;
            }
        }
    }
    r.pass = r.worst >= r.threshold;
    return r;
}

/// Matrix-level second contraction against a Richardson second difference of
/// F along the direction, including near-degenerate spectra.
inline SuiteResult suite_contraction_fd(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"contraction-fd", 0, 0.0, 1e-5, false, false, {}};
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> gap(1e-7, 1e-5);
    for (int s = 0; s < opt.contraction_samples; ++s) {
        const int n = (s % 2 == 0) ? 2 : 3;
        const QuotientParams p(n, 1);
        Eigen::VectorXd vals = detail::sample_cone(rng, n, 0.5, 3.0);
        if (s % 3 == 0) vals[1] = vals[0] - gap(rng); // nearly coincident pair
        Eigen::MatrixXd a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
        Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
        const ModifiedHessian m(q * vals.asDiagonal() * q.transpose());
        Eigen::MatrixXd raw(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) raw(i, j) = gauss(rng);
        const Eigen::MatrixXd xi = 0.5 * (raw + raw.transpose());

        auto g = [&](double h) {
            return eval_F(ModifiedHessian(Eigen::MatrixXd(m.entries() + h * xi)), p);
        };
        const double f0 = eval_F(m, p);
        auto d2 = [&](double h) { return (g(h) - 2.0 * f0 + g(-h)) / (h * h); };
        const double h = 0.02;
        const double r1 = (4.0 * d2(h / 2) - d2(h)) / 3.0;
        const double r2 = (4.0 * d2(h / 4) - d2(h / 2)) / 3.0;
        const double fd = (16.0 * r2 - r1) / 15.0;
        const double value = second_contraction(m, p, xi);
        const double rel = std::abs(value - fd) / std::max(std::abs(fd), 1e-3 * xi.squaredNorm());
        detail::track_worst_residual(r, rel, vals);
        ++r.samples;
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Concavity of the matrix operator: contraction <= 1e-10 ||Xi||_F^2.
inline SuiteResult suite_contraction_concavity(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"contraction-concavity", 0, -std::numeric_limits<double>::infinity(), 1e-10,
                  false, false, {}};
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < opt.contraction_samples; ++s) {
        const int n = 2 + (s % 3);
        const QuotientParams p(n, s % n);
        const Eigen::VectorXd vals = detail::sample_cone(rng, n, 0.2, 5.0);
        Eigen::MatrixXd a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
        Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
        const ModifiedHessian m(q * vals.asDiagonal() * q.transpose());
        Eigen::MatrixXd raw(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) raw(i, j) = gauss(rng);
        const Eigen::MatrixXd xi = 0.5 * (raw + raw.transpose());
        detail::track_worst_residual(r, second_contraction(m, p, xi) / xi.squaredNorm(), vals);
        ++r.samples;
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Frame covariance of the linearization under orthogonal conjugation.
inline SuiteResult suite_frame_covariance(std::mt19937_64& rng, const VerifyOptions& opt) {
    SuiteResult r{"frame-covariance", 0, 0.0, 1e-10, false, false, {}};
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < opt.contraction_samples; ++s) {
        const int n = 2 + (s % 3);
        const QuotientParams p(n, s % n);
        const Eigen::VectorXd vals = detail::sample_cone(rng, n, 0.2, 5.0);
        Eigen::MatrixXd a(n, n), b(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                a(i, j) = gauss(rng);
                b(i, j) = gauss(rng);
            }
        Eigen::MatrixXd q1 = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
        Eigen::MatrixXd q2 = Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ();
        const ModifiedHessian m(q1 * vals.asDiagonal() * q1.transpose());
        const Eigen::MatrixXd lhs =
            linearization(ModifiedHessian(Eigen::MatrixXd(q2.transpose() * m.entries() * q2)), p);
        const Eigen::MatrixXd rhs = q2.transpose() * linearization(m, p) * q2;
        detail::track_worst_residual(r, (lhs - rhs).norm() / rhs.norm(), vals);
        ++r.samples;
    }
    r.pass = r.worst <= r.threshold;
    return r;
}

/// Every suite in a fixed order; deterministic for a fixed engine state.
[[nodiscard]] inline std::vector<SuiteResult> run_verification_suites(std::mt19937_64& rng,
                                                                      const VerifyOptions& opt) {
    std::vector<SuiteResult> out;
    out.push_back(suite_esf_identities(rng, opt));
    out.push_back(suite_quotient_trace(rng, opt));
    out.push_back(suite_euler_homogeneity(rng, opt));
    out.push_back(suite_gradient_fd(rng, opt));
    out.push_back(suite_hessian_fd(rng, opt));
    out.push_back(suite_hessian_concavity(rng, opt));
    out.push_back(suite_newton_sandwich(rng, opt));
    out.push_back(suite_curvature_margins(rng, opt));
    out.push_back(suite_divided_difference_sign(rng, opt));
    out.push_back(suite_contraction_fd(rng, opt));
    out.push_back(suite_contraction_concavity(rng, opt));
    out.push_back(suite_frame_covariance(rng, opt));
    return out;
}

} // namespace qtrans
