#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace rcspa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/**
 * Second-order forward jet of a scalar quantity with respect to a fixed set
 * of outer variables: the value, its gradient and its (symmetric) Hessian.
 *
 * Every jet taking part in one computation must share the same outer
 * dimension; mixing dimensions is a programming error caught by Eigen's
 * assertions in debug builds.
 */
struct TaylorScalar {
    double value = 0.0;
    Vector grad;
    Matrix hess;

    TaylorScalar() = default;
    TaylorScalar(double v, Vector g, Matrix h)
        : value(v), grad(std::move(g)), hess(std::move(h)) {}

    static TaylorScalar constant(double v, Eigen::Index dim);
    /// The outer variable `index` itself, evaluated at `v`.
    static TaylorScalar variable(double v, Eigen::Index index, Eigen::Index dim);

    Eigen::Index dim() const noexcept { return grad.size(); }

    TaylorScalar& operator+=(const TaylorScalar& o);
    TaylorScalar& operator-=(const TaylorScalar& o);
    TaylorScalar& operator*=(const TaylorScalar& o);
    TaylorScalar& operator+=(double c) { value += c; return *this; }
    TaylorScalar& operator-=(double c) { value -= c; return *this; }
    TaylorScalar& operator*=(double c);
    /// this += c * o, without a temporary.
    TaylorScalar& add_scaled(double c, const TaylorScalar& o);
};

TaylorScalar operator+(TaylorScalar a, const TaylorScalar& b);
TaylorScalar operator-(TaylorScalar a, const TaylorScalar& b);
TaylorScalar operator*(const TaylorScalar& a, const TaylorScalar& b);
TaylorScalar operator+(TaylorScalar a, double c);
TaylorScalar operator-(TaylorScalar a, double c);
TaylorScalar operator*(TaylorScalar a, double c);
TaylorScalar operator*(double c, TaylorScalar a);
TaylorScalar operator-(TaylorScalar a);

/// Apply a scalar function f given f(u), f'(u), f''(u) at u = a.value.
TaylorScalar apply_unary(const TaylorScalar& a, double f, double df, double d2f);

TaylorScalar exp(const TaylorScalar& a);
TaylorScalar log(const TaylorScalar& a);

/**
 * Chain rule for a multivariate outer function F evaluated at the values of
 * `inner`: given F, its gradient and Hessian with respect to its own
 * arguments, returns F(inner) as a jet in the outer variables of `inner`.
 */
TaylorScalar compose(double value, const Vector& grad, const Matrix& hess,
                     std::span<const TaylorScalar> inner);

/// Identity seeds: one jet per coordinate of `s`, differentiated w.r.t. `s` itself.
std::vector<TaylorScalar> identity_seeds(const Vector& s);

/// Values of a vector of jets.
Vector values_of(std::span<const TaylorScalar> jets);

}  // namespace rcspa
