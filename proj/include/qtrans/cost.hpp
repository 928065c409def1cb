#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qtrans/errors.hpp"

// Cost-function framework: derivative evaluators up to fourth order, the map
// Y(x, p) solving c_x(x, Y) = p, the matrix A(x, p) = D_x^2 c(x, Y(x, p)),
// the fourth-order regularity tensor on orthogonal pairs, transforms and
// generalized segments.
//
// Index convention (fixed throughout): in a mixed derivative the indices
// BEFORE the comma differentiate in x, those AFTER the comma in y. The
// inverse mixed Hessian inv_xy() is the plain matrix inverse of hess_xy();
// its FIRST index contracts against y-type slots and its SECOND against
// x-type slots. The quadratic cost (whose tensor vanishes identically)
// doubles as the convention check in the tests.

namespace qtrans {

/// Axis-aligned box; the declared evaluation region of a cost.
struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    Box() = default;
    Box(Eigen::VectorXd l, Eigen::VectorXd h) : lo(std::move(l)), hi(std::move(h)) {
        if (lo.size() != hi.size() || !(lo.array() <= hi.array()).all())
            throw std::invalid_argument("Box: lo <= hi componentwise required");
    }

    [[nodiscard]] int dim() const { return static_cast<int>(lo.size()); }
    [[nodiscard]] Eigen::VectorXd center() const { return 0.5 * (lo + hi); }
    [[nodiscard]] bool contains(const Eigen::VectorXd& x, double slack = 0.0) const {
        return ((x - lo).array() >= -slack).all() && ((hi - x).array() >= -slack).all();
    }
    [[nodiscard]] Eigen::VectorXd sample(std::mt19937_64& rng) const {
        Eigen::VectorXd x(dim());
        for (int i = 0; i < dim(); ++i) {
            std::uniform_real_distribution<double> d(lo[i], hi[i]);
            x[i] = d(rng);
        }
        return x;
    }
};

/// Third-order derivative block: tensor[k] is the matrix over the two
/// same-side indices, k runs over the opposite side.
using CostTensor3 = std::vector<Eigen::MatrixXd>;
/// Fourth-order block c_{ij,st}: fourth[s][t](i, j).
using CostTensor4 = std::vector<std::vector<Eigen::MatrixXd>>;

namespace detail {

/// Evaluator bundle. Built-ins fill every slot analytically; user costs get
/// nested central differences of the scalar.
struct CostImpl {
    int dim = 2;
    Box region_x;   // covers the source side
    Box region_y;   // covers the target side
    std::string name;

    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> grad_x;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> grad_y;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> hess_xy;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> hess_xx;
    // c_{ij,k}: third_xxy[k](i,j), k a y-index
    std::function<CostTensor3(const Eigen::VectorXd&, const Eigen::VectorXd&)> third_xxy;
    // c_{k,ij}: third_xyy[k](i,j), k an x-index, (i,j) y-indices
    std::function<CostTensor3(const Eigen::VectorXd&, const Eigen::VectorXd&)> third_xyy;
    // c_{ij,st}: fourth[s][t](i,j), (i,j) x-indices, (s,t) y-indices
    std::function<CostTensor4(const Eigen::VectorXd&, const Eigen::VectorXd&)> fourth_xxyy;
};

} // namespace detail

/// Bundle of evaluators for a cost c(x, y) and its derivatives up to fourth
/// order, restricted to a declared bounding region. Value-semantic and cheap
/// to copy (shared immutable implementation).
class CostModel {
public:
    [[nodiscard]] int dim() const { return impl_->dim; }
    [[nodiscard]] const Box& region_x() const { return impl_->region_x; }
    [[nodiscard]] const Box& region_y() const { return impl_->region_y; }
    [[nodiscard]] const std::string& name() const { return impl_->name; }

    [[nodiscard]] double value(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->value(x, y);
    }
    [[nodiscard]] Eigen::VectorXd grad_x(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->grad_x(x, y);
    }
    [[nodiscard]] Eigen::VectorXd grad_y(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->grad_y(x, y);
    }
    /// c_{i,j} = d^2 c / dx_i dy_j; rows are x-indices.
    [[nodiscard]] Eigen::MatrixXd hess_xy(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->hess_xy(x, y);
    }
    /// c_{ij} = d^2 c / dx_i dx_j.
    [[nodiscard]] Eigen::MatrixXd hess_xx(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->hess_xx(x, y);
    }
    [[nodiscard]] CostTensor3 third_xxy(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->third_xxy(x, y);
    }
    [[nodiscard]] CostTensor3 third_xyy(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->third_xyy(x, y);
    }
    [[nodiscard]] CostTensor4 fourth_xxyy(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return impl_->fourth_xxyy(x, y);
    }

    /// Inverse of the mixed Hessian. First index y-type, second x-type.
    /// Throws SingularJacobian below the determinant floor (an (A2) witness).
    [[nodiscard]] Eigen::MatrixXd inv_xy(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        const Eigen::MatrixXd m = hess_xy(x, y);
        if (std::abs(m.determinant()) < 1e-12)
            throw SingularJacobian("cost: |det c_{i,j}| below 1e-12");
        return m.inverse();
    }

    /// The adjoint cost c*(x, y) = c(y, x) with every evaluator re-indexed
    /// accordingly; used for the target-side convexity checks.
    [[nodiscard]] CostModel swapped() const;

    /// Quadratic cost |x - y|^2 / 2 on the given regions. All third and
    /// fourth derivatives vanish.
    static CostModel quadratic(Box region_x, Box region_y);

    /// Quadratic cost perturbed by eps * (x . y)^3. Exercises both signs of
    /// the regularity tensor depending on eps and the regions.
    static CostModel perturbed_quadratic(double eps, Box region_x, Box region_y);

    /// User-supplied scalar cost; every derivative by nested central
    /// differences with steps h2 = 1e-4 * scale, h3 = 1e-3 * scale,
    /// h4 = 5e-3 * scale. Fourth-derivative noise makes these evaluators the
    /// least accurate path; reports that consume them carry wider tolerances.
    static CostModel from_scalar(std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> c,
                                 Box region_x, Box region_y, double scale = 1.0,
                                 std::string name = "user");

private:
    explicit CostModel(std::shared_ptr<const detail::CostImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const detail::CostImpl> impl_;
};

inline CostModel CostModel::quadratic(Box region_x, Box region_y) {
    auto impl = std::make_shared<detail::CostImpl>();
    const int d = region_x.dim();
    impl->dim = d;
    impl->region_x = std::move(region_x);
    impl->region_y = std::move(region_y);
    impl->name = "quadratic";
    impl->value = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return 0.5 * (x - y).squaredNorm();
    };
    impl->grad_x = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return Eigen::VectorXd(x - y);
    };
    impl->grad_y = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return Eigen::VectorXd(y - x);
    };
    impl->hess_xy = [d](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return Eigen::MatrixXd(-Eigen::MatrixXd::Identity(d, d));
    };
    impl->hess_xx = [d](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d));
    };
    impl->third_xxy = [d](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return CostTensor3(d, Eigen::MatrixXd::Zero(d, d));
    };
    impl->third_xyy = [d](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return CostTensor3(d, Eigen::MatrixXd::Zero(d, d));
    };
    impl->fourth_xxyy = [d](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return CostTensor4(d, std::vector<Eigen::MatrixXd>(d, Eigen::MatrixXd::Zero(d, d)));
    };
    return CostModel(std::move(impl));
}

inline CostModel CostModel::perturbed_quadratic(double eps, Box region_x, Box region_y) {
    auto impl = std::make_shared<detail::CostImpl>();
    const int d = region_x.dim();
    impl->dim = d;
    impl->region_x = std::move(region_x);
    impl->region_y = std::move(region_y);
    impl->name = "perturbed_quadratic";
    // c = |x-y|^2/2 + eps s^3 with s = x.y
    impl->value = [eps](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        const double s = x.dot(y);
        return 0.5 * (x - y).squaredNorm() + eps * s * s * s;
    };
    impl->grad_x = [eps](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        const double s = x.dot(y);
        return Eigen::VectorXd(x - y + 3.0 * eps * s * s * y);
    };
    impl->grad_y = [eps](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        const double s = x.dot(y);
        return Eigen::VectorXd(y - x + 3.0 * eps * s * s * x);
    };
    impl->hess_xy = [eps, d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        const double s = x.dot(y);
        // d/dy_j [ (x - y)_i + 3 eps s^2 y_i ] = -(1 - 3 eps s^2) delta_ij + 6 eps s y_i x_j
        Eigen::MatrixXd m = -(1.0 - 3.0 * eps * s * s) * Eigen::MatrixXd::Identity(d, d);
        m += 6.0 * eps * s * y * x.transpose();
        return m;
    };
    impl->hess_xx = [eps, d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        const double s = x.dot(y);
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(d, d);
        m += 6.0 * eps * s * y * y.transpose();
        return m;
    };
    impl->third_xxy = [eps, d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        // c_{ij,k} = 6 eps (x_k y_i y_j + s delta_ik y_j + s y_i delta_jk)
        const double s = x.dot(y);
        CostTensor3 t(d, Eigen::MatrixXd::Zero(d, d));
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    t[k](i, j) = 6.0 * eps *
                                 (x[k] * y[i] * y[j] + s * (i == k ? y[j] : 0.0) +
                                  s * (j == k ? y[i] : 0.0));
        return t;
    };
    impl->third_xyy = [eps, d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        // c_{k,ij} = 6 eps (y_k x_i x_j + s delta_ki x_j + s x_i delta_kj)
        const double s = x.dot(y);
        CostTensor3 t(d, Eigen::MatrixXd::Zero(d, d));
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    t[k](i, j) = 6.0 * eps *
                                 (y[k] * x[i] * x[j] + s * (k == i ? x[j] : 0.0) +
                                  s * (k == j ? x[i] : 0.0));
        return t;
    };
    impl->fourth_xxyy = [eps, d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        // c_{ij,st} = 6 eps (x_s (delta_it y_j + y_i delta_jt) + x_t (delta_is y_j + y_i delta_js)
        //                    + s (delta_is delta_jt + delta_it delta_js))
        const double s = x.dot(y);
        CostTensor4 t(d, std::vector<Eigen::MatrixXd>(d, Eigen::MatrixXd::Zero(d, d)));
        for (int si = 0; si < d; ++si)
            for (int ti = 0; ti < d; ++ti)
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        t[si][ti](i, j) =
                            6.0 * eps *
                            (x[si] * ((i == ti ? y[j] : 0.0) + (j == ti ? y[i] : 0.0)) +
                             x[ti] * ((i == si ? y[j] : 0.0) + (j == si ? y[i] : 0.0)) +
                             s * ((i == si && j == ti ? 1.0 : 0.0) +
                                  (i == ti && j == si ? 1.0 : 0.0)));
        return t;
    };
    return CostModel(std::move(impl));
}

namespace detail {

/// One leg of a tensor-product central-difference stencil: which side of the
/// cost to shift, along which axis, by which step.
struct DiffDir {
    bool on_y = false;
    int axis = 0;
    double step = 0.0;
};

/// Mixed central difference of the scalar cost along the given directions:
/// the full tensor-product stencil of 2^m evaluations divided by prod(2 h_i).
/// Direct stencils (rather than differences of differences) keep the
/// roundoff at eps / prod(h_i), which the default steps are sized against.
inline double mixed_central(const std::function<double(const Eigen::VectorXd&,
                                                       const Eigen::VectorXd&)>& c,
                            const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            std::span<const DiffDir> dirs) {
    const int m = static_cast<int>(dirs.size());
    double acc = 0.0;
    double denom = 1.0;
    for (const auto& d : dirs) denom *= 2.0 * d.step;
    for (int mask = 0; mask < (1 << m); ++mask) {
        Eigen::VectorXd xx = x, yy = y;
        double sign = 1.0;
        for (int b = 0; b < m; ++b) {
            const double s = (mask >> b) & 1 ? 1.0 : -1.0;
            sign *= s;
            (dirs[static_cast<size_t>(b)].on_y ? yy : xx)[dirs[static_cast<size_t>(b)].axis] +=
                s * dirs[static_cast<size_t>(b)].step;
        }
        acc += sign * c(xx, yy);
    }
    return acc / denom;
}

} // namespace detail

inline CostModel CostModel::from_scalar(
    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> c, Box region_x,
    Box region_y, double scale, std::string name) {
    auto impl = std::make_shared<detail::CostImpl>();
    const int d = region_x.dim();
    impl->dim = d;
    impl->region_x = std::move(region_x);
    impl->region_y = std::move(region_y);
    impl->name = std::move(name);
    impl->value = c;

    const double h2 = 1e-4 * scale;
    const double h3 = 1e-3 * scale;
    const double h4 = 5e-3 * scale;
    using detail::DiffDir;
    using detail::mixed_central;

    impl->grad_x = [c, d, h2](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        Eigen::VectorXd g(d);
        for (int i = 0; i < d; ++i) {
            const DiffDir dirs[1] = {{false, i, h2}};
            g[i] = mixed_central(c, x, y, dirs);
        }
        return g;
    };
    impl->grad_y = [c, d, h2](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        Eigen::VectorXd g(d);
        for (int i = 0; i < d; ++i) {
            const DiffDir dirs[1] = {{true, i, h2}};
            g[i] = mixed_central(c, x, y, dirs);
        }
        return g;
    };
    impl->hess_xy = [c, d, h2](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        Eigen::MatrixXd m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const DiffDir dirs[2] = {{false, i, h2}, {true, j, h2}};
                m(i, j) = mixed_central(c, x, y, dirs);
            }
        return m;
    };
    impl->hess_xx = [c, d, h2](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        Eigen::MatrixXd m(d, d);
        const double c0 = c(x, y);
        for (int i = 0; i < d; ++i) {
            Eigen::VectorXd up = x, dn = x;
            up[i] += h2;
            dn[i] -= h2;
            m(i, i) = (c(up, y) - 2 * c0 + c(dn, y)) / (h2 * h2);
            for (int j = i + 1; j < d; ++j) {
                const DiffDir dirs[2] = {{false, i, h2}, {false, j, h2}};
                m(i, j) = m(j, i) = mixed_central(c, x, y, dirs);
            }
        }
        return m;
    };
    impl->third_xxy = [c, d, h3](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        CostTensor3 t(d, Eigen::MatrixXd::Zero(d, d));
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    const DiffDir dirs[3] = {{false, i, h3}, {false, j, h3}, {true, k, h3}};
                    t[k](i, j) = mixed_central(c, x, y, dirs);
                }
        return t;
    };
    impl->third_xyy = [c, d, h3](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        CostTensor3 t(d, Eigen::MatrixXd::Zero(d, d));
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    const DiffDir dirs[3] = {{false, k, h3}, {true, i, h3}, {true, j, h3}};
                    t[k](i, j) = mixed_central(c, x, y, dirs);
                }
        return t;
    };
    impl->fourth_xxyy = [c, d, h4](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        CostTensor4 t(d, std::vector<Eigen::MatrixXd>(d, Eigen::MatrixXd::Zero(d, d)));
        for (int si = 0; si < d; ++si)
            for (int ti = 0; ti < d; ++ti)
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) {
                        const DiffDir dirs[4] = {
                            {false, i, h4}, {false, j, h4}, {true, si, h4}, {true, ti, h4}};
                        t[si][ti](i, j) = mixed_central(c, x, y, dirs);
                    }
        return t;
    };
    return CostModel(std::move(impl));
}

inline CostModel CostModel::swapped() const {
    auto base = impl_;
    auto impl = std::make_shared<detail::CostImpl>();
    impl->dim = base->dim;
    impl->region_x = base->region_y;
    impl->region_y = base->region_x;
    impl->name = base->name + "*";
    impl->value = [base](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return base->value(y, x);
    };
    impl->grad_x = [base](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return base->grad_y(y, x);
    };
    impl->grad_y = [base](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return base->grad_x(y, x);
    };
    impl->hess_xy = [base](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return Eigen::MatrixXd(base->hess_xy(y, x).transpose());
    };
    // hess_xx of the swapped cost is d^2 c(y, x)/dx^2, the y-side second
    // derivative of the base, which the base bundle does not carry. Assemble
    // it from grad_y by central differences; only the convexity checkers
    // consume this slot.
    auto grad_y_base = base->grad_y;
    const int d = base->dim;
    impl->hess_xx = [grad_y_base, d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        const double h = 1e-5 * std::max(1.0, x.norm());
        Eigen::MatrixXd m(d, d);
        for (int i = 0; i < d; ++i) {
            Eigen::VectorXd up = x, dn = x;
            up[i] += h;
            dn[i] -= h;
            m.col(i) = (grad_y_base(y, up) - grad_y_base(y, dn)) / (2 * h);
        }
        return Eigen::MatrixXd(0.5 * (m + m.transpose()));
    };
    impl->third_xxy = [base](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        // c*_{ij,k}(x,y) = c_{k,ij}(y,x)
        return base->third_xyy(y, x);
    };
    impl->third_xyy = [base](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return base->third_xxy(y, x);
    };
    impl->fourth_xxyy = [base, d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        // c*_{ij,st}(x,y) = c_{st,ij}(y,x): transpose index pairs.
        const CostTensor4 f = base->fourth_xxyy(y, x);
        CostTensor4 t(d, std::vector<Eigen::MatrixXd>(d, Eigen::MatrixXd::Zero(d, d)));
        for (int si = 0; si < d; ++si)
            for (int ti = 0; ti < d; ++ti)
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) t[si][ti](i, j) = f[i][j](si, ti);
        return t;
    };
    return CostModel(std::move(impl));
}

/// Result of the target map: the point Y with c_x(x, Y) = p, plus iteration
/// metadata.
struct YMapResult {
    Eigen::VectorXd y;
    int iterations = 0;
    double residual = 0.0;
};

/// Solves c_x(x, y) = p for y by Newton iteration (Jacobian c_{i,j}).
/// Seeds at the center of the declared y-region unless a guess is given.
/// Throws NoConvergence after 50 iterations and SingularJacobian when the
/// mixed Hessian degenerates at an iterate.
[[nodiscard]] inline YMapResult y_map(const CostModel& model, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& p,
                                      std::optional<Eigen::VectorXd> guess = std::nullopt) {
    constexpr int kMaxIter = 50;
    constexpr double kTol = 1e-10;
    Eigen::VectorXd y = guess.value_or(model.region_y().center());
    const double span = (model.region_y().hi - model.region_y().lo).norm() + 1.0;
    for (int it = 0; it < kMaxIter; ++it) {
        const Eigen::VectorXd r = model.grad_x(x, y) - p;
        if (r.norm() <= kTol) {
            // A converged target far outside the declared region means p was
            // outside the admissible gradient range; treat as a failure of
            // the solvability precondition rather than a usable answer.
            if (!model.region_y().contains(y, 0.5 * span))
                throw NoConvergence("y_map: solution left the declared target region");
            return {y, it, r.norm()};
        }
        const Eigen::MatrixXd j = model.hess_xy(x, y);
        if (std::abs(j.determinant()) < 1e-12)
            throw SingularJacobian("y_map: mixed Hessian singular at iterate");
        Eigen::VectorXd step = j.partialPivLu().solve(Eigen::VectorXd(-r));
        // keep iterates from running off to infinity on bad seeds
        if (step.norm() > span) step *= span / step.norm();
        y += step;
    }
    throw NoConvergence("y_map: no convergence within 50 iterations");
}

/// A(x, p) = D_x^2 c(x, Y(x, p)); symmetric by construction.
[[nodiscard]] inline Eigen::MatrixXd a_matrix(const CostModel& model, const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& p,
                                              std::optional<Eigen::VectorXd> guess = std::nullopt) {
    const Eigen::VectorXd y = y_map(model, x, p, std::move(guess)).y;
    const Eigen::MatrixXd a = model.hess_xx(x, y);
    return 0.5 * (a + a.transpose());
}

/// dA_ij/dp_k by central differences through a_matrix; result[k] is the
/// matrix derivative in direction p_k.
[[nodiscard]] inline CostTensor3 a_matrix_grad_p_fd(const CostModel& model,
                                                    const Eigen::VectorXd& x,
                                                    const Eigen::VectorXd& p,
                                                    std::optional<Eigen::VectorXd> guess = std::nullopt,
                                                    double step = 0.0) {
    const int d = model.dim();
    const double h = (step > 0.0) ? step : 1e-5 * std::max(1.0, p.norm());
    const Eigen::VectorXd y0 = y_map(model, x, p, guess).y;
    CostTensor3 t(d, Eigen::MatrixXd::Zero(d, d));
    for (int k = 0; k < d; ++k) {
        Eigen::VectorXd up = p, dn = p;
        up[k] += h;
        dn[k] -= h;
        t[k] = (a_matrix(model, x, up, y0) - a_matrix(model, x, dn, y0)) / (2 * h);
    }
    return t;
}

/// Analytic chain rule dA_ij/dp_k = c_{ij,m}(x, Y) c^{m,k}(x, Y); the
/// finite-difference version above is its independent cross-check.
[[nodiscard]] inline CostTensor3 a_matrix_grad_p(const CostModel& model, const Eigen::VectorXd& x,
                                                 const Eigen::VectorXd& p,
                                                 std::optional<Eigen::VectorXd> guess = std::nullopt) {
    const int d = model.dim();
    const Eigen::VectorXd y = y_map(model, x, p, std::move(guess)).y;
    const CostTensor3 txx = model.third_xxy(x, y);
    const Eigen::MatrixXd w = model.inv_xy(x, y);
    CostTensor3 t(d, Eigen::MatrixXd::Zero(d, d));
    for (int k = 0; k < d; ++k)
        for (int m = 0; m < d; ++m) t[k] += txx[m] * w(m, k);
    return t;
}

/// One evaluation point of the fourth-order regularity tensor: base pair
/// (x, y) and a unit orthogonal direction pair.
struct MtwSample {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd xi;
    Eigen::VectorXd eta;

    void validate() const {
        if (std::abs(xi.norm() - 1.0) > 1e-12 || std::abs(eta.norm() - 1.0) > 1e-12)
            throw NotOrthogonal("MtwSample: xi and eta must be unit vectors");
        if (std::abs(xi.dot(eta)) > 1e-10)
            throw NotOrthogonal("MtwSample: xi and eta must be orthogonal");
    }
};

/// The regularity tensor contraction
///   (c_{ij,st} - c^{q,r} c_{ij,q} c_{r,st}) c^{s,k} c^{t,l} xi_i xi_j eta_k eta_l.
/// Nonnegative on orthogonal pairs exactly when the cost satisfies the weak
/// fourth-order condition; identically zero for the quadratic cost.
[[nodiscard]] inline double mtw_contraction(const CostModel& model, const MtwSample& s) {
    s.validate();
    const int d = model.dim();
    const Eigen::MatrixXd w = model.inv_xy(s.x, s.y); // w(q, r): q y-type, r x-type
    const CostTensor4 c4 = model.fourth_xxyy(s.x, s.y);
    const CostTensor3 cxxy = model.third_xxy(s.x, s.y); // c_{ij,q} = cxxy[q](i,j)
    const CostTensor3 cxyy = model.third_xyy(s.x, s.y); // c_{r,st} = cxyy[r](s,t)

    // eta~_s = c^{s,k} eta_k
    Eigen::VectorXd eta_t(d);
    for (int si = 0; si < d; ++si) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += w(si, k) * s.eta[k];
        eta_t[si] = acc;
    }

    double value = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            for (int si = 0; si < d; ++si) {
                for (int ti = 0; ti < d; ++ti) {
                    double dterm = c4[si][ti](i, j);
                    for (int q = 0; q < d; ++q)
                        for (int r = 0; r < d; ++r)
                            dterm -= w(q, r) * cxxy[q](i, j) * cxyy[r](si, ti);
                    value += dterm * s.xi[i] * s.xi[j] * eta_t[si] * eta_t[ti];
                }
            }
        }
    }
    return value;
}

/// Outcome of sampling the regularity tensor over a region pair.
enum class A3Class { kStrong, kWeakOnly, kViolated };

struct A3Classification {
    A3Class label = A3Class::kWeakOnly;
    double min_value = 0.0; // the measured infimum; the reported c_0 when positive
    MtwSample witness;      // minimizing sample
    int samples = 0;
    double min_abs_det_xy = 0.0; // (A2) witness over the sample set
    int y_map_max_iterations = 0; // (A1) constructive check
};

[[nodiscard]] inline const char* to_string(A3Class c) {
    switch (c) {
        case A3Class::kStrong: return "A3";
        case A3Class::kWeakOnly: return "A3w-only";
        case A3Class::kViolated: return "violated";
    }
    return "?";
}

/// Samples the tensor over (x, y) in the two boxes with random orthogonal
/// unit pairs and classifies by the measured minimum: strong if it clears
/// +1e-8, weak-only within +-1e-8, violated below -1e-8. (A1) and (A2) are
/// verified constructively on every sampled pair first.
[[nodiscard]] inline A3Classification classify_a3(const CostModel& model, int sample_budget,
                                                  const Box& omega_minus, const Box& omega_plus,
                                                  std::mt19937_64& rng) {
    if (sample_budget <= 0) throw EmptySampleSet("classify_a3: sample budget must be positive");
    const int d = model.dim();
    std::normal_distribution<double> gauss(0.0, 1.0);

    A3Classification out;
    out.samples = sample_budget;
    out.min_value = std::numeric_limits<double>::infinity();
    out.min_abs_det_xy = std::numeric_limits<double>::infinity();

    for (int k = 0; k < sample_budget; ++k) {
        MtwSample s;
        s.x = omega_minus.sample(rng);
        s.y = omega_plus.sample(rng);

        // (A2) on the pair, then (A1) constructively: the target map must
        // recover y from p = c_x(x, y) starting at the fixed seed.
        const double det = std::abs(model.hess_xy(s.x, s.y).determinant());
        out.min_abs_det_xy = std::min(out.min_abs_det_xy, det);
        if (det < 1e-12) throw SingularJacobian("classify_a3: (A2) violated at a sampled pair");
        const YMapResult ym = y_map(model, s.x, model.grad_x(s.x, s.y));
        out.y_map_max_iterations = std::max(out.y_map_max_iterations, ym.iterations);

        Eigen::VectorXd xi(d);
        do {
            for (int i = 0; i < d; ++i) xi[i] = gauss(rng);
        } while (xi.norm() < 1e-8);
        xi.normalize();
        Eigen::VectorXd eta(d);
        if (d == 2) {
            eta << -xi[1], xi[0];
        } else {
            do {
                for (int i = 0; i < d; ++i) eta[i] = gauss(rng);
                eta -= eta.dot(xi) * xi;
            } while (eta.norm() < 1e-8);
            eta.normalize();
        }
        s.xi = xi;
        s.eta = eta;

        const double v = mtw_contraction(model, s);
        if (v < out.min_value) {
            out.min_value = v;
            out.witness = s;
        }
    }

    if (out.min_value < -1e-8)
        out.label = A3Class::kViolated;
    else if (out.min_value <= 1e-8)
        out.label = A3Class::kWeakOnly;
    else
        out.label = A3Class::kStrong;
    return out;
}

/// Ball on the target side used by the transform seed construction.
struct TargetBall {
    Eigen::VectorXd center;
    double radius = 0.5;
};

struct CTransformResult {
    double value = 0.0;
    Eigen::VectorXd contact; // the maximizing y (the support contact point)
};

/// sup over a dense polar grid on the ball of c(x, y) - psi(y), with the grid
/// argmax refined by one local quadratic fit per parameter axis. Returns the
/// value and the contact point.
[[nodiscard]] inline CTransformResult c_transform(
    const CostModel& model, const TargetBall& ball,
    const std::function<double(const Eigen::VectorXd&)>& psi, const Eigen::VectorXd& x,
    int n_radial = 64, int n_angular = 64) {
    if (n_radial < 2 || n_angular < 3) throw EmptySampleSet("c_transform: grid too small");
    if (model.dim() != 2) throw std::invalid_argument("c_transform: planar target side required");

    auto point = [&](double rho, double phi) {
        Eigen::VectorXd y = ball.center;
        y[0] += rho * std::cos(phi);
        y[1] += rho * std::sin(phi);
        return y;
    };
    auto objective = [&](double rho, double phi) {
        const Eigen::VectorXd y = point(rho, phi);
        return model.value(x, y) - psi(y);
    };

    // Grid includes the center (i = 0) and the rim (i = n_radial - 1).
    double best = -std::numeric_limits<double>::infinity();
    int bi = 0, bj = 0;
    for (int i = 0; i < n_radial; ++i) {
        const double rho = ball.radius * static_cast<double>(i) / (n_radial - 1);
        for (int j = 0; j < (i == 0 ? 1 : n_angular); ++j) {
            const double phi = 2.0 * M_PI * j / n_angular;
            const double v = objective(rho, phi);
            if (v > best) {
                best = v;
                bi = i;
                bj = j;
            }
        }
    }

    double rho = ball.radius * static_cast<double>(bi) / (n_radial - 1);
    double phi = 2.0 * M_PI * bj / n_angular;
    // One quadratic-fit refinement per axis, skipped on the rim and at the
    // center where the polar parametrization degenerates.
    if (bi > 0 && bi + 1 < n_radial) {
        const double dr = ball.radius / (n_radial - 1);
        const double fm = objective(rho - dr, phi), f0 = objective(rho, phi),
                     fp = objective(rho + dr, phi);
        const double denom = fm - 2 * f0 + fp;
        if (denom < 0.0) rho += 0.5 * dr * (fm - fp) / denom;
    }
    if (bi > 0) {
        const double dp = 2.0 * M_PI / n_angular;
        const double fm = objective(rho, phi - dp), f0 = objective(rho, phi),
                     fp = objective(rho, phi + dp);
        const double denom = fm - 2 * f0 + fp;
        if (denom < 0.0) phi += 0.5 * dp * (fm - fp) / denom;
    }
    const double refined = objective(rho, phi);
    CTransformResult out;
    if (refined >= best) {
        out.value = refined;
        out.contact = point(rho, phi);
    } else {
        out.value = best;
        out.contact = point(ball.radius * static_cast<double>(bi) / (n_radial - 1),
                            2.0 * M_PI * bj / n_angular);
    }
    return out;
}

/// Generalized segment: solves D_y c(x, anchor) = z for x along the straight
/// segment [z0, z1] sampled at `steps` points (endpoints included). Each
/// solve continues from the previous solution.
[[nodiscard]] inline std::vector<Eigen::VectorXd> c_segment(const CostModel& model,
                                                            const Eigen::VectorXd& anchor_y,
                                                            const Eigen::VectorXd& z0,
                                                            const Eigen::VectorXd& z1, int steps) {
    if (steps < 2) throw std::invalid_argument("c_segment: steps >= 2 required");
    constexpr int kMaxIter = 50;
    constexpr double kTol = 1e-10;
    std::vector<Eigen::VectorXd> polyline;
    polyline.reserve(static_cast<size_t>(steps));
    Eigen::VectorXd x = model.region_x().center();
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / (steps - 1);
        const Eigen::VectorXd z = (1.0 - t) * z0 + t * z1;
        bool done = false;
        for (int it = 0; it < kMaxIter; ++it) {
            const Eigen::VectorXd r = model.grad_y(x, anchor_y) - z;
            if (r.norm() <= kTol) {
                done = true;
                break;
            }
            // Jacobian d(c_y)_i / dx_j = c_{j,i}
            const Eigen::MatrixXd j = model.hess_xy(x, anchor_y).transpose();
            if (std::abs(j.determinant()) < 1e-12)
                throw SingularJacobian("c_segment: mixed Hessian singular at iterate");
            x += j.partialPivLu().solve(Eigen::VectorXd(-r));
        }
        if (!done) throw NoConvergence("c_segment: Newton failed at a sample point");
        polyline.push_back(x);
    }
    return polyline;
}

/// The adjoint-segment variant: solves D_x c(anchor_x, y) = z for y, i.e. the
/// same construction with the roles of x and y exchanged.
[[nodiscard]] inline std::vector<Eigen::VectorXd> c_star_segment(const CostModel& model,
                                                                 const Eigen::VectorXd& anchor_x,
                                                                 const Eigen::VectorXd& z0,
                                                                 const Eigen::VectorXd& z1,
                                                                 int steps) {
    return c_segment(model.swapped(), anchor_x, z0, z1, steps);
}

} // namespace qtrans
