#pragma once

#include "rcspa/cgf.hpp"
#include "rcspa/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace support {

using rcspa::Matrix;
using rcspa::Vector;

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& s,
                          double h = 1e-5) {
    Vector g(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        Vector a = s, b = s;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2 * h);
    }
    return g;
}

/// Rows are outputs, columns inputs.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& s,
                          double h = 1e-5) {
    const Vector f0 = f(s);
    Matrix J(f0.size(), s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        Vector a = s, b = s;
        a[i] += h;
        b[i] -= h;
        J.col(i) = (f(a) - f(b)) / (2 * h);
    }
    return J;
}

inline double rel_gap(const Matrix& got, const Matrix& want) {
    const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
    return (got - want).cwiseAbs().maxCoeff() / scale;
}

inline double rel_gap(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// Uniform point in [-radius, radius]^dim accepted by `ok`.
inline Vector random_point(Eigen::Index dim, double radius, rcspa::Rng& rng,
                           const std::function<bool(const Vector&)>& ok) {
    std::uniform_real_distribution<double> u(-radius, radius);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vector s(dim);
        for (Eigen::Index i = 0; i < dim; ++i) s[i] = u(rng);
        if (ok(s)) return s;
    }
    return Vector::Zero(dim);
}

/// FD check of value -> gradient and gradient -> Hessian.
struct DerivativeGap {
    double grad = 0.0;
    double hess = 0.0;
};

inline DerivativeGap derivative_gap(const std::function<rcspa::TaylorScalar(const Vector&)>& eval,
                                    const Vector& s, double h = 1e-5) {
    const rcspa::TaylorScalar at = eval(s);
    const Vector g = fd_gradient([&](const Vector& p) { return eval(p).value; }, s, h);
    const Matrix H = fd_jacobian([&](const Vector& p) { return eval(p).grad; }, s, h);
    return {rel_gap(g, at.grad), rel_gap(H, at.hess)};
}

/// Same, with the step shrunk where the gradient changes on a scale shorter
/// than one: h = h0 / max(1, |K''|_inf / max(1, |K'|_inf)). Nested branching
/// CGFs reach values like 1e80 inside the domain, where a fixed step measures
/// the third derivative rather than the derivatives under test.
inline DerivativeGap derivative_gap_scaled(const std::function<rcspa::TaylorScalar(const Vector&)>& eval,
                                           const Vector& s, double h0 = 1e-5) {
    const rcspa::TaylorScalar at = eval(s);
    const double rho = at.hess.cwiseAbs().maxCoeff() / std::max(1.0, at.grad.cwiseAbs().maxCoeff());
    return derivative_gap(eval, s, h0 / std::max(1.0, rho));
}

}  // namespace support
