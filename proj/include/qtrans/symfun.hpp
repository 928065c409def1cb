#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qtrans/errors.hpp"

// Elementary symmetric functions S_k, their restricted variants S_{k;i},
// S_{k;ij}, and the Hessian quotient
//
//     sigma_{n,l}(lambda) = (S_n / S_l)^{1/(n-l)},   0 <= l < n,
//
// with analytic gradient and Hessian on the open positive cone.
//
// Everything here is a pure function of its inputs. Internals accumulate in
// long double: the identity and inequality reports are held to absolute
// tolerances near 1e-10 while S_k itself can reach 1e8 at the corner of the
// sampling box, which double-precision residuals cannot meet.

namespace qtrans {

/// Open-cone membership: lambda_i > kConeRelTol * max|lambda_j| for all i.
/// Boundary points are rejected (f vanishes there and the quotient loses
/// differentiability).
inline constexpr double kConeRelTol = 1e-14;

/// Two eigenvalues closer than kDegenerateRelTol * max|lambda| are treated as
/// coincident; divided differences switch to their analytic limit.
inline constexpr double kDegenerateRelTol = 1e-8;

/// Eigenvalue vector of a symmetric matrix, 2 <= n <= 12. Entry order is
/// immaterial to every operation below.
struct Spectrum {
    Eigen::VectorXd values;

    Spectrum() = default;

    explicit Spectrum(Eigen::VectorXd v) : values(std::move(v)) {
        if (values.size() < 2 || values.size() > 12)
            throw std::invalid_argument("Spectrum: dimension must be in [2, 12]");
    }

    Spectrum(std::initializer_list<double> v)
        : Spectrum(Eigen::Map<const Eigen::VectorXd>(v.begin(),
                                                     static_cast<Eigen::Index>(v.size()))) {}

    [[nodiscard]] int n() const { return static_cast<int>(values.size()); }

    [[nodiscard]] bool in_positive_cone() const {
        const double floor = kConeRelTol * values.cwiseAbs().maxCoeff();
        return (values.array() > floor).all();
    }

    void require_positive_cone() const {
        if (!in_positive_cone())
            throw ConeViolation("Spectrum: eigenvalue outside the open positive cone");
    }
};

/// Parameters of the quotient sigma_{n,l}. l = 0 selects the pure S_n^{1/n}
/// (determinant-type) case with S_0 = 1.
struct QuotientParams {
    int n = 2;
    int l = 1;

    QuotientParams() = default;
    QuotientParams(int n_, int l_) : n(n_), l(l_) {
        if (n < 2) throw std::invalid_argument("QuotientParams: n >= 2 required");
        if (l < 0 || l >= n) throw std::invalid_argument("QuotientParams: 0 <= l < n required");
    }

    [[nodiscard]] double exponent() const { return 1.0 / static_cast<double>(n - l); }
};

/// Band {mu1 <= f(lambda) <= mu2} inside the cone.
struct ConeBand {
    double mu1 = 1.0;
    double mu2 = 1.0;

    ConeBand() = default;
    ConeBand(double lo, double hi) : mu1(lo), mu2(hi) {
        if (!(0.0 < mu1 && mu1 <= mu2))
            throw std::invalid_argument("ConeBand: 0 < mu1 <= mu2 required");
    }

    [[nodiscard]] bool contains(double f) const { return mu1 <= f && f <= mu2; }
};

namespace detail {

/// All S_0..S_n of the entries by the prefix recurrence
///   S_k^{(m)} = S_k^{(m-1)} + lambda_m * S_{k-1}^{(m-1)}.
/// O(n^2), no cancellation for positive entries.
inline std::vector<long double> esf_all(const Eigen::VectorXd& v) {
    const int n = static_cast<int>(v.size());
    std::vector<long double> s(static_cast<size_t>(n) + 1, 0.0L);
    s[0] = 1.0L;
    for (int m = 0; m < n; ++m) {
        const long double x = static_cast<long double>(v[m]);
        for (int k = m + 1; k >= 1; --k) s[static_cast<size_t>(k)] += x * s[static_cast<size_t>(k) - 1];
    }
    return s;
}

/// Same recurrence with the listed entries set to zero. Re-running the
/// recurrence (instead of dividing the full S_k) avoids 0/0 as entries
/// approach the cone boundary.
inline std::vector<long double> esf_all_omitting(const Eigen::VectorXd& v,
                                                 std::span<const int> omit) {
    const int n = static_cast<int>(v.size());
    for (int idx : omit)
        if (idx < 0 || idx >= n) throw std::out_of_range("esf_all_omitting: index out of range");
    std::vector<long double> s(static_cast<size_t>(n) + 1, 0.0L);
    s[0] = 1.0L;
    for (int m = 0; m < n; ++m) {
        if (std::find(omit.begin(), omit.end(), m) != omit.end()) continue;
        const long double x = static_cast<long double>(v[m]);
        for (int k = m + 1; k >= 1; --k) s[static_cast<size_t>(k)] += x * s[static_cast<size_t>(k) - 1];
    }
    return s;
}

/// S_k with the convention S_k = 0 for k < 0 or k > n, S_0 = 1.
inline long double esf_pick(const std::vector<long double>& s, int k) {
    if (k < 0 || k >= static_cast<int>(s.size())) return 0.0L;
    return s[static_cast<size_t>(k)];
}

/// binomial(n, k) in long double; exact for n <= 12.
inline long double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0L;
    long double r = 1.0L;
    for (int i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    return r;
}

/// Shared scratch for quotient derivatives: full and single-index restricted
/// elementary symmetric functions of one spectrum.
struct QuotientWork {
    int n = 0;
    int l = 0;
    std::vector<long double> full;                    // S_0..S_n
    std::vector<std::vector<long double>> restricted; // restricted[i] = S with lambda_i = 0
    long double ratio = 0.0L;                         // S_n / S_l
    long double sigma = 0.0L;                         // ratio^(1/(n-l))

    QuotientWork(const Spectrum& lambda, const QuotientParams& p) : n(p.n), l(p.l) {
        if (lambda.n() != p.n)
            throw std::invalid_argument("QuotientParams dimension does not match spectrum");
        lambda.require_positive_cone();
        full = esf_all(lambda.values);
        restricted.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int omit[1] = {i};
            restricted.push_back(esf_all_omitting(lambda.values, omit));
        }
        ratio = full[static_cast<size_t>(n)] / esf_pick(full, l);
        sigma = powl(ratio, 1.0L / static_cast<long double>(n - l));
    }

    // Bracket of the first-derivative formula:
    //   g_i = S_{n-1;i}/S_l - S_n S_{l-1;i}/S_l^2,
    // so that f_i = (1/(n-l)) * ratio^{1/(n-l)-1} * g_i.
    [[nodiscard]] long double bracket(int i) const {
        const long double sl = esf_pick(full, l);
        const long double sn = full[static_cast<size_t>(n)];
        const auto& ri = restricted[static_cast<size_t>(i)];
        return esf_pick(ri, n - 1) / sl - sn * esf_pick(ri, l - 1) / (sl * sl);
    }

    [[nodiscard]] long double grad(int i) const {
        const long double m = static_cast<long double>(n - l);
        return powl(ratio, 1.0L / m - 1.0L) / m * bracket(i);
    }

    // Diagonal second derivative, from direct differentiation of the
    // first-derivative formula:
    //   f_ii = (1/m)(1/m - 1) r^{1/m-2} g_i^2
    //        + (2/m) r^{1/m-1} (S_{l-1;i}^2 S_n - S_l S_{l-1;i} S_{n-1;i}) / S_l^3.
    [[nodiscard]] long double hess_diag(int i) const {
        const long double m = static_cast<long double>(n - l);
        const long double sl = esf_pick(full, l);
        const long double sn = full[static_cast<size_t>(n)];
        const auto& ri = restricted[static_cast<size_t>(i)];
        const long double sl1i = esf_pick(ri, l - 1);
        const long double sn1i = esf_pick(ri, n - 1);
        const long double g = bracket(i);
        const long double t1 = (1.0L / m) * (1.0L / m - 1.0L) * powl(ratio, 1.0L / m - 2.0L) * g * g;
        const long double t2 =
            (2.0L / m) * powl(ratio, 1.0L / m - 1.0L) * (sl1i * sl1i * sn - sl * sl1i * sn1i) / (sl * sl * sl);
        return t1 + t2;
    }

    // Off-diagonal second derivative (i != j), assembled from doubly
    // restricted functions:
    //   f_ij = (1/m)(1/m - 1) r^{1/m-2} g_i g_j
    //        + (1/m) r^{1/m-1} [ S_{n-2;ij}/S_l - S_{n-1;i}S_{l-1;j}/S_l^2
    //                            - S_{n-1;j}S_{l-1;i}/S_l^2 - S_n S_{l-2;ij}/S_l^2
    //                            + 2 S_n S_{l-1;i}S_{l-1;j}/S_l^3 ].
    [[nodiscard]] long double hess_offdiag(const Eigen::VectorXd& values, int i, int j) const {
        const long double m = static_cast<long double>(n - l);
        const long double sl = esf_pick(full, l);
        const long double sn = full[static_cast<size_t>(n)];
        const auto& ri = restricted[static_cast<size_t>(i)];
        const auto& rj = restricted[static_cast<size_t>(j)];
        const int omit[2] = {i, j};
        const auto rij = esf_all_omitting(values, omit);
        const long double sl1i = esf_pick(ri, l - 1);
        const long double sl1j = esf_pick(rj, l - 1);
        const long double sn1i = esf_pick(ri, n - 1);
        const long double sn1j = esf_pick(rj, n - 1);
        const long double t1 =
            (1.0L / m) * (1.0L / m - 1.0L) * powl(ratio, 1.0L / m - 2.0L) * bracket(i) * bracket(j);
        const long double inner = esf_pick(rij, n - 2) / sl - sn1i * sl1j / (sl * sl) -
                                  sn1j * sl1i / (sl * sl) - sn * esf_pick(rij, l - 2) / (sl * sl) +
                                  2.0L * sn * sl1i * sl1j / (sl * sl * sl);
        const long double t2 = (1.0L / m) * powl(ratio, 1.0L / m - 1.0L) * inner;
        return t1 + t2;
    }
};

} // namespace detail

/// k-th elementary symmetric function of the spectrum.
/// S_0 = 1; S_k = 0 for k < 0 or k > n.
[[nodiscard]] inline double elem_sym(const Spectrum& lambda, int k) {
    if (k < 0 || k > lambda.n()) return 0.0;
    return static_cast<double>(detail::esf_pick(detail::esf_all(lambda.values), k));
}

/// S_k of the spectrum with the listed (0-based, distinct) entries set to
/// zero. Covers the singly and doubly restricted variants S_{k;i}, S_{k;ij}.
[[nodiscard]] inline double elem_sym_restricted(const Spectrum& lambda, int k,
                                                std::span<const int> omit) {
    if (k < 0 || k > lambda.n()) return 0.0;
    return static_cast<double>(detail::esf_pick(detail::esf_all_omitting(lambda.values, omit), k));
}

[[nodiscard]] inline double elem_sym_restricted(const Spectrum& lambda, int k,
                                                std::initializer_list<int> omit) {
    return elem_sym_restricted(lambda, k, std::span<const int>(omit.begin(), omit.size()));
}

/// The Hessian quotient sigma_{n,l}(lambda) = (S_n/S_l)^{1/(n-l)}.
/// Positive and homogeneous of degree one on the open positive cone.
[[nodiscard]] inline double sigma_quotient(const Spectrum& lambda, const QuotientParams& p) {
    detail::QuotientWork w(lambda, p);
    return static_cast<double>(w.sigma);
}

/// Gradient (f_1, ..., f_n) of sigma_{n,l}; strictly positive on the cone and
/// satisfying the Euler identity sum_i f_i lambda_i = f.
[[nodiscard]] inline Eigen::VectorXd sigma_grad(const Spectrum& lambda, const QuotientParams& p) {
    detail::QuotientWork w(lambda, p);
    Eigen::VectorXd g(p.n);
    for (int i = 0; i < p.n; ++i) g[i] = static_cast<double>(w.grad(i));
    return g;
}

/// Full Hessian [f_ij] of sigma_{n,l}; negative semidefinite on the cone.
[[nodiscard]] inline Eigen::MatrixXd sigma_hess(const Spectrum& lambda, const QuotientParams& p) {
    detail::QuotientWork w(lambda, p);
    Eigen::MatrixXd h(p.n, p.n);
    for (int i = 0; i < p.n; ++i) {
        h(i, i) = static_cast<double>(w.hess_diag(i));
        for (int j = i + 1; j < p.n; ++j) {
            const double v = static_cast<double>(w.hess_offdiag(lambda.values, i, j));
            h(i, j) = v;
            h(j, i) = v;
        }
    }
    return h;
}

/// Divided difference (f_i - f_j)/(lambda_i - lambda_j), replaced by the
/// analytic limit f_ii - f_ij when the two eigenvalues are numerically
/// coincident. `degenerate` reports whether the limit branch was taken.
[[nodiscard]] inline double sigma_divided_difference(const Spectrum& lambda,
                                                     const QuotientParams& p, int i, int j,
                                                     bool* degenerate = nullptr) {
    if (i == j) throw std::invalid_argument("sigma_divided_difference: i != j required");
    detail::QuotientWork w(lambda, p);
    const double scale = lambda.values.cwiseAbs().maxCoeff();
    const double gap = lambda.values[i] - lambda.values[j];
    if (std::abs(gap) <= kDegenerateRelTol * scale) {
        if (degenerate) *degenerate = true;
        return static_cast<double>(w.hess_diag(i) - w.hess_offdiag(lambda.values, i, j));
    }
    if (degenerate) *degenerate = false;
    return static_cast<double>((w.grad(i) - w.grad(j)) / static_cast<long double>(gap));
}

/// Absolute residuals of the exact algebraic identities tying S_k, the
/// restricted functions and the quotient derivatives together. Each entry is
/// the worst absolute residual over the admissible index range.
struct IdentityReport {
    /// sum_i S_{k;i} = (n-k) S_k, worst over k = 0..n.
    double restricted_sum = 0.0;
    /// S_k = lambda_i S_{k-1;i} + S_{k;i}, worst over k, i.
    double split = 0.0;
    /// sum_i lambda_i S_{k-1;i} = k S_k (Euler identity for S_k), worst over k.
    double euler_restricted = 0.0;
    /// sum_i f_i lambda_i^2 = ((l+1)/(n-l)) sigma * S_{l+1}/S_l.
    double grad_second_moment = 0.0;
    /// sum_i f_i against its closed form
    /// (1/(n-l)) (S_n/S_l)^{1/(n-l)-1} (S_{n-1}S_l - (n-l+1) S_n S_{l-1}) / S_l^2.
    double grad_trace = 0.0;

    [[nodiscard]] double max_residual() const {
        return std::max({restricted_sum, split, euler_restricted, grad_second_moment, grad_trace});
    }
};

[[nodiscard]] inline IdentityReport verify_identities(const Spectrum& lambda,
                                                      const QuotientParams& p) {
    detail::QuotientWork w(lambda, p);
    const int n = p.n;
    IdentityReport rep;

    for (int k = 0; k <= n; ++k) {
        long double sum_restricted = 0.0L;
        long double sum_weighted = 0.0L;
        for (int i = 0; i < n; ++i) {
            const auto& ri = w.restricted[static_cast<size_t>(i)];
            sum_restricted += detail::esf_pick(ri, k);
            sum_weighted += static_cast<long double>(lambda.values[i]) * detail::esf_pick(ri, k - 1);
            const long double split = detail::esf_pick(w.full, k) -
                                      (static_cast<long double>(lambda.values[i]) * detail::esf_pick(ri, k - 1) +
                                       detail::esf_pick(ri, k));
            rep.split = std::max(rep.split, static_cast<double>(fabsl(split)));
        }
        const long double sk = detail::esf_pick(w.full, k);
        rep.restricted_sum = std::max(
            rep.restricted_sum,
            static_cast<double>(fabsl(sum_restricted - static_cast<long double>(n - k) * sk)));
        rep.euler_restricted =
            std::max(rep.euler_restricted,
                     static_cast<double>(fabsl(sum_weighted - static_cast<long double>(k) * sk)));
    }

    long double trace = 0.0L;
    long double second_moment = 0.0L;
    for (int i = 0; i < n; ++i) {
        const long double fi = w.grad(i);
        trace += fi;
        second_moment += fi * static_cast<long double>(lambda.values[i]) *
                         static_cast<long double>(lambda.values[i]);
    }
    const long double m = static_cast<long double>(n - p.l);
    const long double sl = detail::esf_pick(w.full, p.l);
    const long double sl1 = detail::esf_pick(w.full, p.l + 1);
    const long double sn = w.full[static_cast<size_t>(n)];
    const long double sn1 = detail::esf_pick(w.full, n - 1);
    const long double second_moment_closed =
        (static_cast<long double>(p.l) + 1.0L) / m * w.sigma * sl1 / sl;
    const long double trace_closed =
        (1.0L / m) * powl(w.ratio, 1.0L / m - 1.0L) * (sn1 * sl - (m + 1.0L) * sn * detail::esf_pick(w.full, p.l - 1)) /
        (sl * sl);
    rep.grad_second_moment = static_cast<double>(fabsl(second_moment - second_moment_closed));
    rep.grad_trace = static_cast<double>(fabsl(trace - trace_closed));
    return rep;
}

/// Signed margins of the structural inequalities, oriented so that >= 0 is
/// the pass condition. The spectrum is sorted descending internally.
struct InequalityReport {
    /// Newton inequality at (k, l) = (n, l):
    /// S_{n-1}/binom(n,n-1) * S_l/binom(n,l) - S_n/binom(n,n) * S_{l-1}/binom(n,l-1).
    double newton = 0.0;
    /// sum_i f_i minus its lower bound (1/n) sigma S_{n-1}/S_n.
    double trace_lower = 0.0;
    /// Upper bound (1/(n-l)) sigma S_{n-1}/S_n minus sum_i f_i.
    double trace_upper = 0.0;
    /// -lambda_1 f_11 - f_1 with lambda sorted descending. Only meaningful for
    /// l >= 1 (the curvature bounds are a structural property of the true
    /// quotients; the determinant-type l = 0 case falls outside their
    /// hypothesis and genuinely violates them).
    double top_curvature = 0.0;
    /// min over r >= 2 of -2 lambda_1 (f_1 - f_r)/(lambda_1 - lambda_r) - f_r.
    double cross_curvature = 0.0;
    /// False when l = 0; the two curvature margins are then excluded from
    /// min_margin().
    bool curvature_applicable = true;
    /// min over i < j of -(f_i - f_j)/(lambda_i - lambda_j); the measured sign
    /// of the divided differences is reported in `divided_difference_sign`.
    double divided_difference = 0.0;
    int divided_difference_sign = 0;
    /// Set when some pair of eigenvalues was within the degeneracy tolerance
    /// and the analytic limit replaced the raw quotient.
    bool degenerate = false;

    [[nodiscard]] double min_margin() const {
        double m = std::min({newton, trace_lower, trace_upper, divided_difference});
        if (curvature_applicable) m = std::min({m, top_curvature, cross_curvature});
        return m;
    }
};

/// Measured ellipticity constants over a band: the infimum of sum_i f_i and
/// of sum_i f_i lambda_i over sampled spectra rescaled (by homogeneity) so
/// that f lands inside [mu1, mu2]. The constants exist but have no closed
/// form; this realizes them as sampled infima. Note sum f_i is homogeneous of
/// degree zero and sum f_i lambda_i = f exactly, so the second infimum
/// reproduces mu1 up to roundoff.
struct BandConstants {
    double sigma0 = 0.0; // inf sum f_i
    double sigma1 = 0.0; // inf sum f_i lambda_i
};

template <typename Rng>
[[nodiscard]] BandConstants measure_band_constants(const ConeBand& band, const QuotientParams& p,
                                                   int samples, Rng& rng) {
    if (samples <= 0) throw std::invalid_argument("measure_band_constants: samples > 0 required");
    std::uniform_real_distribution<double> entry(0.1, 10.0);
    std::uniform_real_distribution<double> level(band.mu1, band.mu2);
    BandConstants out;
    out.sigma0 = std::numeric_limits<double>::infinity();
    out.sigma1 = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd v(p.n);
        for (int i = 0; i < p.n; ++i) v[i] = entry(rng);
        const double f = sigma_quotient(Spectrum(v), p);
        const double mu = level(rng);
        const Spectrum scaled(Eigen::VectorXd((mu / f) * v));
        const Eigen::VectorXd g = sigma_grad(scaled, p);
        out.sigma0 = std::min(out.sigma0, g.sum());
        out.sigma1 = std::min(out.sigma1, g.dot(scaled.values));
    }
    return out;
}

[[nodiscard]] inline InequalityReport verify_inequalities(const Spectrum& lambda,
                                                          const QuotientParams& p) {
    Eigen::VectorXd sorted = lambda.values;
    std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<double>());
    const Spectrum s(sorted);
    detail::QuotientWork w(s, p);
    const int n = p.n;
    const int l = p.l;
    InequalityReport rep;

    const long double sn = w.full[static_cast<size_t>(n)];
    const long double sn1 = detail::esf_pick(w.full, n - 1);
    const long double sl = detail::esf_pick(w.full, l);
    const long double sl_1 = detail::esf_pick(w.full, l - 1);
    // The l = 0 case carries no S_{l-1} term (S_{-1} = 0 by convention).
    const long double newton_rhs =
        (l >= 1) ? sn / detail::binomial(n, n) * sl_1 / detail::binomial(n, l - 1) : 0.0L;
    rep.newton = static_cast<double>(sn1 / detail::binomial(n, n - 1) * sl / detail::binomial(n, l) -
                                     newton_rhs);

    long double trace = 0.0L;
    for (int i = 0; i < n; ++i) trace += w.grad(i);
    const long double lower = (1.0L / static_cast<long double>(n)) * w.sigma * sn1 / sn;
    const long double upper = (1.0L / static_cast<long double>(n - l)) * w.sigma * sn1 / sn;
    rep.trace_lower = static_cast<double>(trace - lower);
    rep.trace_upper = static_cast<double>(upper - trace);

    rep.curvature_applicable = (l >= 1);
    rep.top_curvature = static_cast<double>(-static_cast<long double>(sorted[0]) * w.hess_diag(0) -
                                            w.grad(0));

    const double scale = sorted.cwiseAbs().maxCoeff();
    double cross = std::numeric_limits<double>::infinity();
    for (int r = 1; r < n; ++r) {
        bool deg = false;
        const double dd = sigma_divided_difference(s, p, 0, r, &deg);
        rep.degenerate = rep.degenerate || deg;
        cross = std::min(cross, -2.0 * sorted[0] * dd - static_cast<double>(w.grad(r)));
    }
    rep.cross_curvature = cross;

    double dd_margin = std::numeric_limits<double>::infinity();
    int sign = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            bool deg = false;
            const double dd = sigma_divided_difference(s, p, i, j, &deg);
            rep.degenerate = rep.degenerate || deg;
            dd_margin = std::min(dd_margin, -dd);
            if (std::abs(dd) > kDegenerateRelTol * scale) sign = (dd > 0.0) ? +1 : -1;
        }
    }
    rep.divided_difference = dd_margin;
    rep.divided_difference_sign = sign;
    return rep;
}

} // namespace qtrans
