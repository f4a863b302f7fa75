#include "rcspa/taylor.hpp"

#include <cmath>

namespace rcspa {

TaylorScalar TaylorScalar::constant(double v, Eigen::Index dim) {
    return {v, Vector::Zero(dim), Matrix::Zero(dim, dim)};
}

TaylorScalar TaylorScalar::variable(double v, Eigen::Index index, Eigen::Index dim) {
    TaylorScalar t = constant(v, dim);
    t.grad[index] = 1.0;
    return t;
}

TaylorScalar& TaylorScalar::operator+=(const TaylorScalar& o) {
    value += o.value;
    grad += o.grad;
    hess += o.hess;
    return *this;
}

TaylorScalar& TaylorScalar::operator-=(const TaylorScalar& o) {
    value -= o.value;
    grad -= o.grad;
    hess -= o.hess;
    return *this;
}

TaylorScalar& TaylorScalar::operator*=(const TaylorScalar& o) {
    // (ab)'' = a''b + ab'' + a'b'^T + b'a'^T
    hess = hess * o.value + o.hess * value;
    hess.noalias() += grad * o.grad.transpose();
    hess.noalias() += o.grad * grad.transpose();
    grad = grad * o.value + o.grad * value;
    value *= o.value;
    return *this;
}

TaylorScalar& TaylorScalar::operator*=(double c) {
    value *= c;
    grad *= c;
    hess *= c;
    return *this;
}

TaylorScalar& TaylorScalar::add_scaled(double c, const TaylorScalar& o) {
    if (c == 0.0) return *this;
    value += c * o.value;
    grad.noalias() += c * o.grad;
    hess.noalias() += c * o.hess;
    return *this;
}

TaylorScalar operator+(TaylorScalar a, const TaylorScalar& b) { return a += b; }
TaylorScalar operator-(TaylorScalar a, const TaylorScalar& b) { return a -= b; }
TaylorScalar operator*(const TaylorScalar& a, const TaylorScalar& b) {
    TaylorScalar r = a;
    return r *= b;
}
TaylorScalar operator+(TaylorScalar a, double c) { return a += c; }
TaylorScalar operator-(TaylorScalar a, double c) { return a -= c; }
TaylorScalar operator*(TaylorScalar a, double c) { return a *= c; }
TaylorScalar operator*(double c, TaylorScalar a) { return a *= c; }
TaylorScalar operator-(TaylorScalar a) { return a *= -1.0; }

TaylorScalar apply_unary(const TaylorScalar& a, double f, double df, double d2f) {
    TaylorScalar r;
    r.value = f;
    r.grad = df * a.grad;
    r.hess = df * a.hess;
    r.hess.noalias() += d2f * a.grad * a.grad.transpose();
    return r;
}

TaylorScalar exp(const TaylorScalar& a) {
    const double e = std::exp(a.value);
    return apply_unary(a, e, e, e);
}

TaylorScalar log(const TaylorScalar& a) {
    const double inv = 1.0 / a.value;
    return apply_unary(a, std::log(a.value), inv, -inv * inv);
}

TaylorScalar compose(double value, const Vector& grad, const Matrix& hess,
                     std::span<const TaylorScalar> inner) {
    const auto k = static_cast<Eigen::Index>(inner.size());
    const Eigen::Index dim = inner.empty() ? 0 : inner.front().dim();
    TaylorScalar r = TaylorScalar::constant(value, dim);
    if (k == 0) return r;

    // Jacobian of the inner map, one column per argument of F.
    Matrix jac(dim, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        jac.col(j) = inner[j].grad;
        if (grad[j] != 0.0) r.hess.noalias() += grad[j] * inner[j].hess;
    }
    r.grad.noalias() = jac * grad;
    r.hess.noalias() += jac * hess * jac.transpose();
    return r;
}

std::vector<TaylorScalar> identity_seeds(const Vector& s) {
    std::vector<TaylorScalar> seeds;
    seeds.reserve(static_cast<std::size_t>(s.size()));
    for (Eigen::Index i = 0; i < s.size(); ++i)
        seeds.push_back(TaylorScalar::variable(s[i], i, s.size()));
    return seeds;
}

Vector values_of(std::span<const TaylorScalar> jets) {
    Vector v(static_cast<Eigen::Index>(jets.size()));
    for (std::size_t i = 0; i < jets.size(); ++i) v[static_cast<Eigen::Index>(i)] = jets[i].value;
    return v;
}

}  // namespace rcspa
