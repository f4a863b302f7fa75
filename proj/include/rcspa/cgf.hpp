#pragma once

#include "rcspa/error.hpp"
#include "rcspa/pmf.hpp"
#include "rcspa/random.hpp"
#include "rcspa/taylor.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rcspa {

/// Open box {s : lower < s < upper} (bounds may be infinite).
struct Domain {
    Vector lower;
    Vector upper;

    static Domain whole(Eigen::Index dim);
    Eigen::Index dim() const noexcept { return lower.size(); }
    bool contains(const Eigen::Ref<const Vector>& s) const noexcept;
    Domain intersect(const Domain& other) const;
    Domain shifted(const Vector& by) const;
    std::string to_string() const;
};

class CgfExpr;

/// Structural description of a CGF expression: enough to rebuild it through
/// make_builtin, and what the spec-file writer serializes.
struct CgfDescriptor {
    std::string kind;
    std::vector<double> params;
    std::vector<CgfExpr> children;
};

/// Smallest support point of a distribution that carries an atom there.
struct LowerAtom {
    double point;
    double log_mass;
};

/// Evaluator behind a CgfExpr. Implementations are immutable.
class CgfNode {
public:
    explicit CgfNode(Domain domain) : domain_(std::move(domain)) {}
    virtual ~CgfNode() = default;

    Eigen::Index dim() const noexcept { return domain_.dim(); }
    const Domain& domain() const noexcept { return domain_; }

    /// K, K' and K'' at an in-domain point; results may be non-finite on overflow.
    virtual TaylorScalar eval(const Eigen::Ref<const Vector>& s) const = 0;
    virtual CgfDescriptor descriptor() const = 0;

    /// One draw from the distribution.
    virtual Vector sample(Rng& rng) const;
    /// One draw of the t-fold convolution power (Z(t) for a unit Z(1)).
    /// The default handles nonnegative integer t by summing draws.
    virtual Vector sample_sum(double t, Rng& rng) const;
    virtual bool infinitely_divisible() const { return false; }

    /// Exact or truncated pmf for scalar integer-valued distributions.
    virtual std::optional<PmfTable> pmf(double tail_mass) const;
    virtual std::optional<LowerAtom> lower_atom() const { return std::nullopt; }

private:
    Domain domain_;
};

/**
 * A cumulant generating function K(s) = log E exp(s X) of a d-dimensional
 * random vector, with exact first and second derivatives.
 *
 * Value type; copies share the immutable evaluator and are safe to use from
 * several threads at once. Evaluation outside the domain, or at a point where
 * the result overflows, throws DomainViolation.
 */
class CgfExpr {
public:
    CgfExpr() = default;
    explicit CgfExpr(std::shared_ptr<const CgfNode> node) : node_(std::move(node)) {}

    explicit operator bool() const noexcept { return static_cast<bool>(node_); }
    Eigen::Index dim() const noexcept { return node_->dim(); }
    const Domain& domain() const noexcept { return node_->domain(); }
    const CgfNode& node() const noexcept { return *node_; }
    bool in_domain(const Eigen::Ref<const Vector>& s) const noexcept;

    /// K(s) with gradient and Hessian w.r.t. s.
    TaylorScalar evaluate(const Eigen::Ref<const Vector>& s) const;
    std::optional<TaylorScalar> try_evaluate(const Eigen::Ref<const Vector>& s) const;
    double value(const Eigen::Ref<const Vector>& s) const;

    /// Scalar convenience overloads for one-dimensional expressions.
    TaylorScalar evaluate(double s) const { return evaluate(Vector::Constant(1, s)); }
    double value(double s) const { return value(Vector::Constant(1, s)); }

    Vector mean() const;
    Matrix covariance() const;

    CgfDescriptor descriptor() const { return node_->descriptor(); }

private:
    std::shared_ptr<const CgfNode> node_;
};

/**
 * Build a named CGF. Kinds always available:
 *
 *   constant(c_1..c_d)            K = s.c
 *   gaussian(mu, var)             K = mu s + var s^2 / 2
 *   poisson(rate)                 K = rate (e^s - 1)
 *   bernoulli(p)                  K = log(1 - p + p e^s)
 *   binomial(n, p)
 *   geometric(p)                  failures before the first success, s < -log(1-p)
 *   negative-binomial(r, p)       failures before the r-th success
 *   gamma(shape, rate)            s < rate
 *   multinomial(n, p_1..p_k)
 *   compound-poisson(rate)        child: jump CGF
 *   independent()                 children stacked as independent blocks
 *   sum()                         children summed
 *   scale(t)                      child scaled
 *   tilted(s_1..s_d)              child tilted by s
 *
 * Throws InvalidParameter for unknown kinds or out-of-range parameters.
 */
CgfExpr make_builtin(const std::string& kind, std::span<const double> params,
                     std::span<const CgfExpr> children = {});

using CgfFactory = std::function<CgfExpr(std::span<const double>, std::span<const CgfExpr>)>;

/// Add a kind to the factory table used by make_builtin and the spec-file reader.
void register_builtin(const std::string& kind, CgfFactory factory);
bool has_builtin(const std::string& kind);

// Named constructors for the common families.
CgfExpr constant_cgf(const Vector& c);
CgfExpr constant_cgf(double c);
CgfExpr gaussian_cgf(double mean, double variance);
CgfExpr poisson_cgf(double rate);
CgfExpr bernoulli_cgf(double p);
CgfExpr binomial_cgf(std::int64_t n, double p);
CgfExpr geometric_cgf(double p);
CgfExpr negative_binomial_cgf(double r, double p);
CgfExpr gamma_cgf(double shape, double rate);
CgfExpr compound_poisson_cgf(double rate, CgfExpr jump);
CgfExpr multinomial_cgf(std::int64_t n, const Vector& probs);
CgfExpr independent_cgf(std::span<const CgfExpr> blocks);

/// K = sum of parts. An empty list gives the zero CGF of dimension `dim`.
CgfExpr cgf_sum(std::span<const CgfExpr> parts, Eigen::Index dim = 1);
/// K = t * base. The caller is responsible for t being admissible for the base.
CgfExpr cgf_scale(const CgfExpr& base, double t);
/// sigma -> K(s + sigma) - K(s): the CGF of the exponentially tilted distribution.
CgfExpr cgf_tilted(const CgfExpr& base, const Vector& s);
CgfExpr zero_cgf(Eigen::Index dim);

/**
 * Evaluate K at the values of `seeds`, returning the result as a jet in the
 * seeds' outer variables (chain rule through K' and K'').
 */
TaylorScalar taylor_eval(const CgfExpr& expr, std::span<const TaylorScalar> seeds);

}  // namespace rcspa
