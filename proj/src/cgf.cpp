#include "rcspa/cgf.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

namespace rcspa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool all_finite(const TaylorScalar& t) {
    return std::isfinite(t.value) && t.grad.allFinite() && t.hess.allFinite();
}

TaylorScalar scalar_result(double k, double dk, double d2k) {
    return {k, Vector::Constant(1, dk), Matrix::Constant(1, 1, d2k)};
}

bool is_nonneg_integer(double t) { return t >= 0.0 && std::floor(t) == t; }

std::string fmt_params(std::span<const double> params) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < params.size(); ++i) os << (i ? ", " : "") << params[i];
    return os.str();
}

double log_choose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// ---------------------------------------------------------------------------
// Builtin families

class ConstantNode final : public CgfNode {
public:
    explicit ConstantNode(Vector c) : CgfNode(Domain::whole(c.size())), c_(std::move(c)) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        return {s.dot(c_), c_, Matrix::Zero(c_.size(), c_.size())};
    }
    CgfDescriptor descriptor() const override {
        return {"constant", {c_.data(), c_.data() + c_.size()}, {}};
    }
    Vector sample(Rng&) const override { return c_; }
    Vector sample_sum(double t, Rng&) const override { return t * c_; }
    bool infinitely_divisible() const override { return true; }
    std::optional<PmfTable> pmf(double) const override {
        if (c_.size() != 1 || std::floor(c_[0]) != c_[0]) return std::nullopt;
        return PmfTable::point_mass(static_cast<std::int64_t>(c_[0]));
    }
    std::optional<LowerAtom> lower_atom() const override {
        if (c_.size() != 1) return std::nullopt;
        return LowerAtom{c_[0], 0.0};
    }

private:
    Vector c_;
};

class GaussianNode final : public CgfNode {
public:
    GaussianNode(double mu, double var) : CgfNode(Domain::whole(1)), mu_(mu), var_(var) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        const double x = s[0];
        return scalar_result(mu_ * x + 0.5 * var_ * x * x, mu_ + var_ * x, var_);
    }
    CgfDescriptor descriptor() const override { return {"gaussian", {mu_, var_}, {}}; }
    Vector sample(Rng& rng) const override { return sample_sum(1.0, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        if (t < 0.0) throw InvalidParameter("gaussian: negative time");
        if (var_ == 0.0 || t == 0.0) return Vector::Constant(1, mu_ * t);
        std::normal_distribution<double> d(mu_ * t, std::sqrt(var_ * t));
        return Vector::Constant(1, d(rng));
    }
    bool infinitely_divisible() const override { return true; }

private:
    double mu_, var_;
};

class PoissonNode final : public CgfNode {
public:
    explicit PoissonNode(double rate) : CgfNode(Domain::whole(1)), rate_(rate) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        const double e = std::exp(s[0]);
        return scalar_result(rate_ * std::expm1(s[0]), rate_ * e, rate_ * e);
    }
    CgfDescriptor descriptor() const override { return {"poisson", {rate_}, {}}; }
    Vector sample(Rng& rng) const override { return sample_sum(1.0, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        if (t < 0.0) throw InvalidParameter("poisson: negative time");
        const double m = rate_ * t;
        if (m == 0.0) return Vector::Zero(1);
        std::poisson_distribution<long long> d(m);
        return Vector::Constant(1, static_cast<double>(d(rng)));
    }
    bool infinitely_divisible() const override { return true; }

    std::optional<PmfTable> pmf(double tail_mass) const override {
        PmfTable t;
        double p = std::exp(-rate_);
        for (std::int64_t k = 0;; ++k) {
            t.probs.push_back(p);
            const double next = p * rate_ / static_cast<double>(k + 1);
            // P(X > k) <= p(k+1) / (1 - rate/(k+2)) once k+2 > rate.
            const double ratio = rate_ / static_cast<double>(k + 2);
            if (ratio < 1.0) {
                const double bound = next / (1.0 - ratio);
                if (bound <= tail_mass) {
                    t.leftover = bound;
                    return t;
                }
            }
            if (k > 100'000'000) throw TruncationFailure("poisson pmf: support too large");
            p = next;
        }
    }
    std::optional<LowerAtom> lower_atom() const override { return LowerAtom{0.0, -rate_}; }

private:
    double rate_;
};

/// n independent Bernoulli(p) trials; n = 1 is the Bernoulli family.
class BinomialNode final : public CgfNode {
public:
    BinomialNode(std::int64_t n, double p, bool bernoulli)
        : CgfNode(Domain::whole(1)), n_(n), p_(p), bernoulli_(bernoulli) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        const double x = s[0];
        const double n = static_cast<double>(n_);
        if (p_ == 0.0) return scalar_result(0.0, 0.0, 0.0);
        if (p_ == 1.0) return scalar_result(n * x, n, 0.0);
        double k, pi, one_minus_pi;
        if (x <= 0.0) {
            const double e = std::exp(x);
            const double denom = 1.0 - p_ + p_ * e;
            k = std::log1p(p_ * std::expm1(x));
            pi = p_ * e / denom;
            one_minus_pi = (1.0 - p_) / denom;
        } else {
            const double e = std::exp(-x);
            const double denom = (1.0 - p_) * e + p_;
            k = x + std::log(denom);
            pi = p_ / denom;
            one_minus_pi = (1.0 - p_) * e / denom;
        }
        return scalar_result(n * k, n * pi, n * pi * one_minus_pi);
    }
    CgfDescriptor descriptor() const override {
        if (bernoulli_) return {"bernoulli", {p_}, {}};
        return {"binomial", {static_cast<double>(n_), p_}, {}};
    }
    Vector sample(Rng& rng) const override { return sample_sum(1.0, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        if (!is_nonneg_integer(t))
            throw UnsupportedKind("binomial: convolution power needs a nonnegative integer");
        const auto trials = static_cast<long long>(t) * n_;
        if (trials == 0) return Vector::Zero(1);
        std::binomial_distribution<long long> d(trials, p_);
        return Vector::Constant(1, static_cast<double>(d(rng)));
    }
    std::optional<PmfTable> pmf(double) const override {
        PmfTable t;
        const double n = static_cast<double>(n_);
        for (std::int64_t k = 0; k <= n_; ++k) {
            const double kk = static_cast<double>(k);
            double pk;
            if (p_ == 0.0) pk = k == 0 ? 1.0 : 0.0;
            else if (p_ == 1.0) pk = k == n_ ? 1.0 : 0.0;
            else pk = std::exp(log_choose(n, kk) + kk * std::log(p_) + (n - kk) * std::log1p(-p_));
            t.probs.push_back(pk);
        }
        return t;
    }
    std::optional<LowerAtom> lower_atom() const override {
        if (p_ == 1.0) return LowerAtom{static_cast<double>(n_), 0.0};
        return LowerAtom{0.0, static_cast<double>(n_) * std::log1p(-p_)};
    }

private:
    std::int64_t n_;
    double p_;
    bool bernoulli_;
};

Domain geometric_domain(double p) {
    Domain d = Domain::whole(1);
    if (p < 1.0) d.upper[0] = -std::log1p(-p);
    return d;
}

/// Failures before the r-th success; r = 1 is the geometric family.
class NegBinomialNode final : public CgfNode {
public:
    NegBinomialNode(double r, double p, bool geometric)
        : CgfNode(geometric_domain(p)), r_(r), p_(p), geometric_(geometric) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        if (p_ == 1.0) return scalar_result(0.0, 0.0, 0.0);
        const double log_q = std::log1p(-p_);
        const double u = std::exp(s[0] + log_q);
        const double one_minus_u = -std::expm1(s[0] + log_q);
        const double k = std::log(p_) - std::log(one_minus_u);
        const double d1 = u / one_minus_u;
        return scalar_result(r_ * k, r_ * d1, r_ * d1 / one_minus_u);
    }
    CgfDescriptor descriptor() const override {
        if (geometric_) return {"geometric", {p_}, {}};
        return {"negative-binomial", {r_, p_}, {}};
    }
    Vector sample(Rng& rng) const override { return sample_sum(1.0, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        if (t < 0.0) throw InvalidParameter("negative-binomial: negative time");
        const double shape = r_ * t;
        if (shape == 0.0 || p_ == 1.0) return Vector::Zero(1);
        // Gamma-Poisson mixture handles non-integer shape.
        std::gamma_distribution<double> g(shape, (1.0 - p_) / p_);
        const double lambda = g(rng);
        if (lambda <= 0.0) return Vector::Zero(1);
        std::poisson_distribution<long long> d(lambda);
        return Vector::Constant(1, static_cast<double>(d(rng)));
    }
    bool infinitely_divisible() const override { return true; }

    std::optional<PmfTable> pmf(double tail_mass) const override {
        if (p_ == 1.0) return PmfTable::point_mass(0);
        const double q = 1.0 - p_;
        PmfTable t;
        double pk = std::exp(r_ * std::log(p_));
        for (std::int64_t k = 0;; ++k) {
            t.probs.push_back(pk);
            const double kk = static_cast<double>(k);
            const double next = pk * q * (kk + r_) / (kk + 1.0);
            // Successive ratios q (j + r)/(j + 1) are bounded by rho for j > k.
            const double rho = std::max(q, q * (kk + 1.0 + r_) / (kk + 2.0));
            if (rho < 1.0) {
                const double bound = next / (1.0 - rho);
                if (bound <= tail_mass) {
                    t.leftover = bound;
                    return t;
                }
            }
            if (k > 100'000'000) throw TruncationFailure("negative-binomial pmf: support too large");
            pk = next;
        }
    }
    std::optional<LowerAtom> lower_atom() const override {
        return LowerAtom{0.0, r_ * std::log(p_)};
    }

private:
    double r_, p_;
    bool geometric_;
};

class GammaNode final : public CgfNode {
public:
    GammaNode(double shape, double rate)
        : CgfNode([&] {
              Domain d = Domain::whole(1);
              d.upper[0] = rate;
              return d;
          }()),
          shape_(shape), rate_(rate) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        const double gap = rate_ - s[0];
        const double d1 = shape_ / gap;
        return scalar_result(-shape_ * std::log1p(-s[0] / rate_), d1, d1 / gap);
    }
    CgfDescriptor descriptor() const override { return {"gamma", {shape_, rate_}, {}}; }
    Vector sample(Rng& rng) const override { return sample_sum(1.0, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        if (t < 0.0) throw InvalidParameter("gamma: negative time");
        if (t == 0.0) return Vector::Zero(1);
        std::gamma_distribution<double> d(shape_ * t, 1.0 / rate_);
        return Vector::Constant(1, d(rng));
    }
    bool infinitely_divisible() const override { return true; }

private:
    double shape_, rate_;
};

class MultinomialNode final : public CgfNode {
public:
    MultinomialNode(std::int64_t n, Vector probs)
        : CgfNode(Domain::whole(probs.size())), n_(n), probs_(std::move(probs)) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        const Eigen::Index d = probs_.size();
        double top = -kInf;
        for (Eigen::Index j = 0; j < d; ++j)
            if (probs_[j] > 0.0) top = std::max(top, s[j] + std::log(probs_[j]));
        Vector pi = Vector::Zero(d);
        for (Eigen::Index j = 0; j < d; ++j)
            if (probs_[j] > 0.0) pi[j] = std::exp(s[j] + std::log(probs_[j]) - top);
        const double total = pi.sum();
        pi /= total;
        const double n = static_cast<double>(n_);
        Matrix h = n * Matrix(pi.asDiagonal());
        h.noalias() -= n * pi * pi.transpose();
        return {n * (top + std::log(total)), n * pi, h};
    }
    CgfDescriptor descriptor() const override {
        std::vector<double> p{static_cast<double>(n_)};
        p.insert(p.end(), probs_.data(), probs_.data() + probs_.size());
        return {"multinomial", p, {}};
    }
    Vector sample(Rng& rng) const override { return sample_sum(1.0, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        if (!is_nonneg_integer(t))
            throw UnsupportedKind("multinomial: convolution power needs a nonnegative integer");
        long long left = static_cast<long long>(t) * n_;
        double mass = 1.0;
        Vector out = Vector::Zero(probs_.size());
        for (Eigen::Index j = 0; j < probs_.size() && left > 0; ++j) {
            if (j + 1 == probs_.size() || mass <= probs_[j]) {
                out[j] = static_cast<double>(left);
                break;
            }
            std::binomial_distribution<long long> b(left, std::min(1.0, probs_[j] / mass));
            const long long k = b(rng);
            out[j] = static_cast<double>(k);
            left -= k;
            mass -= probs_[j];
        }
        return out;
    }

private:
    std::int64_t n_;
    Vector probs_;
};

class CompoundPoissonNode final : public CgfNode {
public:
    CompoundPoissonNode(double rate, CgfExpr jump)
        : CgfNode(jump.domain()), rate_(rate), jump_(std::move(jump)) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        TaylorScalar j = jump_.node().eval(s);
        const double e = std::exp(j.value);
        TaylorScalar r;
        r.value = rate_ * std::expm1(j.value);
        r.hess = rate_ * e * j.hess;
        r.hess.noalias() += rate_ * e * j.grad * j.grad.transpose();
        r.grad = rate_ * e * j.grad;
        return r;
    }
    CgfDescriptor descriptor() const override { return {"compound-poisson", {rate_}, {jump_}}; }
    Vector sample(Rng& rng) const override { return sample_sum(1.0, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        if (t < 0.0) throw InvalidParameter("compound-poisson: negative time");
        Vector out = Vector::Zero(dim());
        const double m = rate_ * t;
        if (m == 0.0) return out;
        std::poisson_distribution<long long> d(m);
        const long long count = d(rng);
        for (long long i = 0; i < count; ++i) out += jump_.node().sample(rng);
        return out;
    }
    bool infinitely_divisible() const override { return true; }
    std::optional<LowerAtom> lower_atom() const override {
        auto a = jump_.node().lower_atom();
        if (!a || a->point <= 0.0) return std::nullopt;
        return LowerAtom{0.0, -rate_};
    }

private:
    double rate_;
    CgfExpr jump_;
};

// ---------------------------------------------------------------------------
// Composition nodes

Domain stacked_domain(std::span<const CgfExpr> blocks) {
    Eigen::Index d = 0;
    for (const auto& b : blocks) d += b.dim();
    Domain out{Vector(d), Vector(d)};
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        out.lower.segment(at, b.dim()) = b.domain().lower;
        out.upper.segment(at, b.dim()) = b.domain().upper;
        at += b.dim();
    }
    return out;
}

class IndependentNode final : public CgfNode {
public:
    explicit IndependentNode(std::vector<CgfExpr> blocks)
        : CgfNode(stacked_domain(blocks)), blocks_(std::move(blocks)) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        TaylorScalar r = TaylorScalar::constant(0.0, dim());
        Eigen::Index at = 0;
        for (const auto& b : blocks_) {
            const Eigen::Index d = b.dim();
            TaylorScalar part = b.node().eval(s.segment(at, d));
            r.value += part.value;
            r.grad.segment(at, d) = part.grad;
            r.hess.block(at, at, d, d) = part.hess;
            at += d;
        }
        return r;
    }
    CgfDescriptor descriptor() const override { return {"independent", {}, blocks_}; }
    Vector sample(Rng& rng) const override {
        Vector out(dim());
        Eigen::Index at = 0;
        for (const auto& b : blocks_) {
            out.segment(at, b.dim()) = b.node().sample(rng);
            at += b.dim();
        }
        return out;
    }
    Vector sample_sum(double t, Rng& rng) const override {
        Vector out(dim());
        Eigen::Index at = 0;
        for (const auto& b : blocks_) {
            out.segment(at, b.dim()) = b.node().sample_sum(t, rng);
            at += b.dim();
        }
        return out;
    }
    bool infinitely_divisible() const override {
        for (const auto& b : blocks_)
            if (!b.node().infinitely_divisible()) return false;
        return true;
    }

private:
    std::vector<CgfExpr> blocks_;
};

class SumNode final : public CgfNode {
public:
    SumNode(std::vector<CgfExpr> parts, Domain domain)
        : CgfNode(std::move(domain)), parts_(std::move(parts)) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        TaylorScalar r = TaylorScalar::constant(0.0, dim());
        for (const auto& p : parts_) r += p.node().eval(s);
        return r;
    }
    CgfDescriptor descriptor() const override { return {"sum", {}, parts_}; }
    Vector sample(Rng& rng) const override {
        Vector out = Vector::Zero(dim());
        for (const auto& p : parts_) out += p.node().sample(rng);
        return out;
    }
    Vector sample_sum(double t, Rng& rng) const override {
        Vector out = Vector::Zero(dim());
        for (const auto& p : parts_) out += p.node().sample_sum(t, rng);
        return out;
    }
    bool infinitely_divisible() const override {
        for (const auto& p : parts_)
            if (!p.node().infinitely_divisible()) return false;
        return true;
    }
    std::optional<LowerAtom> lower_atom() const override {
        LowerAtom acc{0.0, 0.0};
        for (const auto& p : parts_) {
            auto a = p.node().lower_atom();
            if (!a) return std::nullopt;
            acc.point += a->point;
            acc.log_mass += a->log_mass;
        }
        return acc;
    }

private:
    std::vector<CgfExpr> parts_;
};

class ScaleNode final : public CgfNode {
public:
    ScaleNode(CgfExpr base, double t) : CgfNode(base.domain()), base_(std::move(base)), t_(t) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& s) const override {
        TaylorScalar r = base_.node().eval(s);
        return r *= t_;
    }
    CgfDescriptor descriptor() const override { return {"scale", {t_}, {base_}}; }
    Vector sample(Rng& rng) const override { return base_.node().sample_sum(t_, rng); }
    Vector sample_sum(double t, Rng& rng) const override {
        return base_.node().sample_sum(t_ * t, rng);
    }
    bool infinitely_divisible() const override { return base_.node().infinitely_divisible(); }
    std::optional<LowerAtom> lower_atom() const override {
        auto a = base_.node().lower_atom();
        if (!a || t_ < 0.0) return std::nullopt;
        return LowerAtom{t_ * a->point, t_ * a->log_mass};
    }

private:
    CgfExpr base_;
    double t_;
};

class TiltedNode final : public CgfNode {
public:
    TiltedNode(CgfExpr base, Vector s, double k_at_s)
        : CgfNode(base.domain().shifted(-s)), base_(std::move(base)), s_(std::move(s)), k_(k_at_s) {}

    TaylorScalar eval(const Eigen::Ref<const Vector>& sigma) const override {
        TaylorScalar r = base_.node().eval(s_ + sigma);
        r.value -= k_;
        return r;
    }
    CgfDescriptor descriptor() const override {
        return {"tilted", {s_.data(), s_.data() + s_.size()}, {base_}};
    }
    Vector sample(Rng&) const override {
        throw UnsupportedKind("tilted distributions are evaluators only; sampling is not supported");
    }
    Vector sample_sum(double, Rng&) const override {
        throw UnsupportedKind("tilted distributions are evaluators only; sampling is not supported");
    }
    bool infinitely_divisible() const override { return base_.node().infinitely_divisible(); }

private:
    CgfExpr base_;
    Vector s_;
    double k_;
};

// ---------------------------------------------------------------------------
// Factory table

void require(bool ok, const std::string& kind, const std::string& what,
             std::span<const double> params) {
    if (!ok)
        throw InvalidParameter(kind + "(" + fmt_params(params) + "): " + what);
}

void require_count(const std::string& kind, std::span<const double> params, std::size_t n) {
    require(params.size() == n, kind, "expected " + std::to_string(n) + " parameter(s)", params);
}

void require_no_children(const std::string& kind, std::span<const CgfExpr> children,
                         std::span<const double> params) {
    require(children.empty(), kind, "takes no child expressions", params);
}

bool is_prob(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

std::map<std::string, CgfFactory>& table() {
    static std::map<std::string, CgfFactory> t = [] {
        std::map<std::string, CgfFactory> m;
        m["constant"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("constant", c, p);
            require(!p.empty(), "constant", "needs at least one value", p);
            Vector v(static_cast<Eigen::Index>(p.size()));
            for (std::size_t i = 0; i < p.size(); ++i) {
                require(std::isfinite(p[i]), "constant", "values must be finite", p);
                v[static_cast<Eigen::Index>(i)] = p[i];
            }
            return constant_cgf(v);
        };
        m["gaussian"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("gaussian", c, p);
            require_count("gaussian", p, 2);
            require(std::isfinite(p[0]), "gaussian", "mean must be finite", p);
            require(std::isfinite(p[1]) && p[1] >= 0.0, "gaussian", "variance must be >= 0", p);
            return CgfExpr(std::make_shared<GaussianNode>(p[0], p[1]));
        };
        m["poisson"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("poisson", c, p);
            require_count("poisson", p, 1);
            require(std::isfinite(p[0]) && p[0] > 0.0, "poisson", "rate must be > 0", p);
            return CgfExpr(std::make_shared<PoissonNode>(p[0]));
        };
        m["bernoulli"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("bernoulli", c, p);
            require_count("bernoulli", p, 1);
            require(is_prob(p[0]), "bernoulli", "probability must lie in [0, 1]", p);
            return CgfExpr(std::make_shared<BinomialNode>(1, p[0], true));
        };
        m["binomial"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("binomial", c, p);
            require_count("binomial", p, 2);
            require(is_nonneg_integer(p[0]), "binomial", "n must be a nonnegative integer", p);
            require(is_prob(p[1]), "binomial", "probability must lie in [0, 1]", p);
            return CgfExpr(
                std::make_shared<BinomialNode>(static_cast<std::int64_t>(p[0]), p[1], false));
        };
        m["geometric"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("geometric", c, p);
            require_count("geometric", p, 1);
            require(std::isfinite(p[0]) && p[0] > 0.0 && p[0] <= 1.0, "geometric",
                    "probability must lie in (0, 1]", p);
            return CgfExpr(std::make_shared<NegBinomialNode>(1.0, p[0], true));
        };
        m["negative-binomial"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("negative-binomial", c, p);
            require_count("negative-binomial", p, 2);
            require(std::isfinite(p[0]) && p[0] > 0.0, "negative-binomial", "r must be > 0", p);
            require(std::isfinite(p[1]) && p[1] > 0.0 && p[1] <= 1.0, "negative-binomial",
                    "probability must lie in (0, 1]", p);
            return CgfExpr(std::make_shared<NegBinomialNode>(p[0], p[1], false));
        };
        m["gamma"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("gamma", c, p);
            require_count("gamma", p, 2);
            require(std::isfinite(p[0]) && p[0] > 0.0, "gamma", "shape must be > 0", p);
            require(std::isfinite(p[1]) && p[1] > 0.0, "gamma", "rate must be > 0", p);
            return CgfExpr(std::make_shared<GammaNode>(p[0], p[1]));
        };
        m["multinomial"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_no_children("multinomial", c, p);
            require(p.size() >= 2, "multinomial", "expected n followed by probabilities", p);
            require(is_nonneg_integer(p[0]), "multinomial", "n must be a nonnegative integer", p);
            Vector probs(static_cast<Eigen::Index>(p.size() - 1));
            for (std::size_t i = 1; i < p.size(); ++i) {
                require(is_prob(p[i]), "multinomial", "probabilities must lie in [0, 1]", p);
                probs[static_cast<Eigen::Index>(i - 1)] = p[i];
            }
            require(std::abs(probs.sum() - 1.0) <= 1e-12, "multinomial",
                    "probabilities must sum to 1", p);
            return CgfExpr(
                std::make_shared<MultinomialNode>(static_cast<std::int64_t>(p[0]), probs));
        };
        m["compound-poisson"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_count("compound-poisson", p, 1);
            require(std::isfinite(p[0]) && p[0] > 0.0, "compound-poisson", "rate must be > 0", p);
            require(c.size() == 1, "compound-poisson", "needs exactly one jump expression", p);
            return compound_poisson_cgf(p[0], c[0]);
        };
        m["independent"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require(p.empty(), "independent", "takes no parameters", p);
            require(!c.empty(), "independent", "needs at least one block", p);
            return independent_cgf(c);
        };
        m["sum"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require(p.empty(), "sum", "takes no parameters", p);
            require(!c.empty(), "sum", "needs at least one part", p);
            return cgf_sum(c, c.front().dim());
        };
        m["scale"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require_count("scale", p, 1);
            require(std::isfinite(p[0]), "scale", "factor must be finite", p);
            require(c.size() == 1, "scale", "needs exactly one child", p);
            return cgf_scale(c[0], p[0]);
        };
        m["tilted"] = [](std::span<const double> p, std::span<const CgfExpr> c) {
            require(c.size() == 1, "tilted", "needs exactly one child", p);
            require(static_cast<Eigen::Index>(p.size()) == c[0].dim(), "tilted",
                    "tilt length must match the child dimension", p);
            Vector s(c[0].dim());
            for (std::size_t i = 0; i < p.size(); ++i) s[static_cast<Eigen::Index>(i)] = p[i];
            return cgf_tilted(c[0], s);
        };
        return m;
    }();
    return t;
}

std::mutex& table_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain

Domain Domain::whole(Eigen::Index dim) {
    return {Vector::Constant(dim, -kInf), Vector::Constant(dim, kInf)};
}

bool Domain::contains(const Eigen::Ref<const Vector>& s) const noexcept {
    if (s.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (!std::isfinite(s[i]) || !(lower[i] < s[i] && s[i] < upper[i])) return false;
    return true;
}

Domain Domain::intersect(const Domain& other) const {
    if (other.dim() != dim()) throw DimensionMismatch("domain intersection: dimension mismatch");
    return {lower.cwiseMax(other.lower), upper.cwiseMin(other.upper)};
}

Domain Domain::shifted(const Vector& by) const { return {lower + by, upper + by}; }

std::string Domain::to_string() const {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index i = 0; i < dim(); ++i) os << (i ? " x " : "") << "(" << lower[i] << ", " << upper[i] << ")";
    return os.str();
}

// ---------------------------------------------------------------------------
// CgfNode defaults

Vector CgfNode::sample(Rng& rng) const { return sample_sum(1.0, rng); }

Vector CgfNode::sample_sum(double t, Rng& rng) const {
    if (!is_nonneg_integer(t))
        throw UnsupportedKind(descriptor().kind +
                              ": convolution power needs a nonnegative integer for this family");
    Vector out = Vector::Zero(dim());
    for (double i = 0; i < t; ++i) out += sample(rng);
    return out;
}

std::optional<PmfTable> CgfNode::pmf(double) const { return std::nullopt; }

// ---------------------------------------------------------------------------
// CgfExpr

bool CgfExpr::in_domain(const Eigen::Ref<const Vector>& s) const noexcept {
    return node_->domain().contains(s);
}

std::optional<TaylorScalar> CgfExpr::try_evaluate(const Eigen::Ref<const Vector>& s) const {
    if (!in_domain(s)) return std::nullopt;
    TaylorScalar r = node_->eval(s);
    if (!all_finite(r)) return std::nullopt;
    return r;
}

TaylorScalar CgfExpr::evaluate(const Eigen::Ref<const Vector>& s) const {
    if (s.size() != dim())
        throw DimensionMismatch("CGF of dimension " + std::to_string(dim()) +
                                " evaluated at a point of dimension " + std::to_string(s.size()));
    if (!in_domain(s)) {
        std::ostringstream os;
        os.precision(17);
        os << descriptor().kind << ": tilt (" << s.transpose() << ") outside domain "
           << domain().to_string();
        throw DomainViolation(os.str());
    }
    TaylorScalar r = node_->eval(s);
    if (!all_finite(r)) throw DomainViolation(descriptor().kind + ": non-finite CGF value");
    return r;
}

double CgfExpr::value(const Eigen::Ref<const Vector>& s) const { return evaluate(s).value; }

Vector CgfExpr::mean() const { return evaluate(Vector::Zero(dim())).grad; }

Matrix CgfExpr::covariance() const { return evaluate(Vector::Zero(dim())).hess; }

// ---------------------------------------------------------------------------
// Factories

CgfExpr make_builtin(const std::string& kind, std::span<const double> params,
                     std::span<const CgfExpr> children) {
    CgfFactory f;
    {
        std::lock_guard lock(table_mutex());
        auto it = table().find(kind);
        if (it == table().end()) throw InvalidParameter("unknown CGF kind '" + kind + "'");
        f = it->second;
    }
    return f(params, children);
}

void register_builtin(const std::string& kind, CgfFactory factory) {
    std::lock_guard lock(table_mutex());
    table()[kind] = std::move(factory);
}

bool has_builtin(const std::string& kind) {
    std::lock_guard lock(table_mutex());
    return table().count(kind) > 0;
}

CgfExpr constant_cgf(const Vector& c) { return CgfExpr(std::make_shared<ConstantNode>(c)); }
CgfExpr constant_cgf(double c) { return constant_cgf(Vector::Constant(1, c)); }

CgfExpr gaussian_cgf(double mean, double variance) {
    const double p[] = {mean, variance};
    return make_builtin("gaussian", p);
}
CgfExpr poisson_cgf(double rate) {
    const double p[] = {rate};
    return make_builtin("poisson", p);
}
CgfExpr bernoulli_cgf(double prob) {
    const double p[] = {prob};
    return make_builtin("bernoulli", p);
}
CgfExpr binomial_cgf(std::int64_t n, double prob) {
    const double p[] = {static_cast<double>(n), prob};
    return make_builtin("binomial", p);
}
CgfExpr geometric_cgf(double prob) {
    const double p[] = {prob};
    return make_builtin("geometric", p);
}
CgfExpr negative_binomial_cgf(double r, double prob) {
    const double p[] = {r, prob};
    return make_builtin("negative-binomial", p);
}
CgfExpr gamma_cgf(double shape, double rate) {
    const double p[] = {shape, rate};
    return make_builtin("gamma", p);
}
CgfExpr compound_poisson_cgf(double rate, CgfExpr jump) {
    if (!(std::isfinite(rate) && rate > 0.0))
        throw InvalidParameter("compound-poisson: rate must be > 0");
    return CgfExpr(std::make_shared<CompoundPoissonNode>(rate, std::move(jump)));
}
CgfExpr multinomial_cgf(std::int64_t n, const Vector& probs) {
    std::vector<double> p{static_cast<double>(n)};
    p.insert(p.end(), probs.data(), probs.data() + probs.size());
    return make_builtin("multinomial", p);
}
CgfExpr independent_cgf(std::span<const CgfExpr> blocks) {
    if (blocks.empty()) throw InvalidParameter("independent: needs at least one block");
    return CgfExpr(std::make_shared<IndependentNode>(
        std::vector<CgfExpr>(blocks.begin(), blocks.end())));
}

CgfExpr zero_cgf(Eigen::Index dim) { return constant_cgf(Vector::Zero(dim)); }

CgfExpr cgf_sum(std::span<const CgfExpr> parts, Eigen::Index dim) {
    if (parts.empty()) return zero_cgf(dim);
    Domain d = parts.front().domain();
    for (const auto& p : parts) {
        if (p.dim() != parts.front().dim())
            throw DimensionMismatch("cgf_sum: parts have dimensions " +
                                    std::to_string(parts.front().dim()) + " and " +
                                    std::to_string(p.dim()));
        d = d.intersect(p.domain());
    }
    if (parts.size() == 1) return parts.front();
    return CgfExpr(std::make_shared<SumNode>(std::vector<CgfExpr>(parts.begin(), parts.end()),
                                             std::move(d)));
}

CgfExpr cgf_scale(const CgfExpr& base, double t) {
    if (!std::isfinite(t)) throw InvalidParameter("cgf_scale: factor must be finite");
    return CgfExpr(std::make_shared<ScaleNode>(base, t));
}

CgfExpr cgf_tilted(const CgfExpr& base, const Vector& s) {
    // Constants are tilt-invariant; keeping the node lets linear units stay linear.
    if (base.descriptor().kind == "constant") {
        if (s.size() != base.dim()) throw DimensionMismatch("cgf_tilted: tilt length mismatch");
        return base;
    }
    const double k = base.evaluate(s).value;
    return CgfExpr(std::make_shared<TiltedNode>(base, s, k));
}

TaylorScalar taylor_eval(const CgfExpr& expr, std::span<const TaylorScalar> seeds) {
    if (static_cast<Eigen::Index>(seeds.size()) != expr.dim())
        throw DimensionMismatch("taylor_eval: " + std::to_string(seeds.size()) +
                                " seeds for a CGF of dimension " + std::to_string(expr.dim()));
    const Vector at = values_of(seeds);
    const TaylorScalar k = expr.evaluate(at);
    return compose(k.value, k.grad, k.hess, seeds);
}

}  // namespace rcspa
