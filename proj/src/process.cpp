#include "rcspa/process.hpp"

#include <cmath>

namespace rcspa {
namespace {

bool satisfies(ValueType t, double v) {
    if (!std::isfinite(v)) return false;
    switch (t) {
    case ValueType::Integer: return v >= 0.0 && std::floor(v) == v;
    case ValueType::NonnegativeReal: return v >= 0.0;
    case ValueType::Real: return true;
    }
    return false;
}

bool kind_accepts(ContributionKind k, ValueType source) {
    switch (k) {
    case ContributionKind::IidSum: return source == ValueType::Integer;
    case ContributionKind::Levy: return source != ValueType::Real;
    case ContributionKind::Linear: return true;
    }
    return false;
}

std::string where(int n, std::size_t c) {
    return "step " + std::to_string(n) + " contribution " + std::to_string(c);
}

Vector block(const Vector& joint, const ProcessSpec& p, int n) {
    return joint.segment(p.offset(n), p.dim(n));
}

}  // namespace

std::string to_string(ValueType t) {
    switch (t) {
    case ValueType::Integer: return "integer";
    case ValueType::NonnegativeReal: return "nonnegative-real";
    case ValueType::Real: return "real";
    }
    return "?";
}

std::string to_string(ContributionKind k) {
    switch (k) {
    case ContributionKind::IidSum: return "iid-sum";
    case ContributionKind::Levy: return "levy";
    case ContributionKind::Linear: return "linear";
    }
    return "?";
}

ValueType value_type_from_string(const std::string& s) {
    if (s == "integer") return ValueType::Integer;
    if (s == "nonnegative-real") return ValueType::NonnegativeReal;
    if (s == "real") return ValueType::Real;
    throw InvalidParameter("unknown value type '" + s + "'");
}

ContributionKind contribution_kind_from_string(const std::string& s) {
    if (s == "iid-sum") return ContributionKind::IidSum;
    if (s == "levy") return ContributionKind::Levy;
    if (s == "linear") return ContributionKind::Linear;
    throw InvalidParameter("unknown contribution kind '" + s + "'");
}

// ---------------------------------------------------------------------------

ProcessSpec::ProcessSpec(Vector x0, std::vector<ValueType> x0_types, std::vector<StepSpec> step_specs,
                         std::string name)
    : name_(std::move(name)), x0_(std::move(x0)), x0_types_(std::move(x0_types)),
      steps_(std::move(step_specs)) {
    if (x0_.size() < 1) throw InvalidParameter("process: d0 must be positive");
    if (static_cast<Eigen::Index>(x0_types_.size()) != x0_.size())
        throw DimensionMismatch("process: x0 has " + std::to_string(x0_.size()) +
                                " entries but " + std::to_string(x0_types_.size()) + " type tags");
    for (Eigen::Index i = 0; i < x0_.size(); ++i)
        if (!satisfies(x0_types_[static_cast<std::size_t>(i)], x0_[i]))
            throw InvalidParameter("process: x0[" + std::to_string(i) + "] violates its " +
                                   to_string(x0_types_[static_cast<std::size_t>(i)]) + " tag");
    if (steps_.empty()) throw InvalidParameter("process: needs at least one step");

    const int N = steps();
    offsets_.assign(static_cast<std::size_t>(N + 1), 0);
    grouped_.resize(static_cast<std::size_t>(N));
    depends_.assign(static_cast<std::size_t>(N), std::vector<char>(static_cast<std::size_t>(N), 0));
    for (int n = 1; n <= N; ++n) {
        const StepSpec& st = steps_[static_cast<std::size_t>(n - 1)];
        if (st.dim < 1) throw InvalidParameter("step " + std::to_string(n) + ": dim must be positive");
        if (!st.innovation || st.innovation.dim() != st.dim)
            throw DimensionMismatch("step " + std::to_string(n) +
                                    ": innovation dimension does not match dim");
        if (static_cast<int>(st.types.size()) != st.dim)
            throw DimensionMismatch("step " + std::to_string(n) + ": expected " +
                                    std::to_string(st.dim) + " type tags");
        offsets_[static_cast<std::size_t>(n - 1)] = total_dim_;
        total_dim_ += st.dim;
    }
    offsets_[static_cast<std::size_t>(N)] = total_dim_;

    for (int n = 1; n <= N; ++n) {
        const StepSpec& st = steps_[static_cast<std::size_t>(n - 1)];
        auto& g = grouped_[static_cast<std::size_t>(n - 1)];
        g.resize(static_cast<std::size_t>(n));
        for (int m = 0; m < n; ++m) g[static_cast<std::size_t>(m)].resize(static_cast<std::size_t>(dim(m)));
        for (std::size_t c = 0; c < st.contributions.size(); ++c) {
            const Contribution& ct = st.contributions[c];
            if (ct.source_step < 0 || ct.source_step >= n)
                throw InvalidParameter(where(n, c) + ": source step must be an earlier step");
            if (ct.source_coord < 0 || ct.source_coord >= dim(ct.source_step))
                throw InvalidParameter(where(n, c) + ": source coordinate out of range");
            if (!ct.unit || ct.unit.dim() != st.dim)
                throw DimensionMismatch(where(n, c) + ": unit CGF must have dimension d_n");
            const ValueType src = types(ct.source_step)[static_cast<std::size_t>(ct.source_coord)];
            if (!kind_accepts(ct.kind, src))
                throw InvalidParameter(where(n, c) + ": " + to_string(ct.kind) +
                                       " contribution cannot read a " + to_string(src) +
                                       " coordinate");
            if (ct.kind == ContributionKind::Linear && ct.unit.descriptor().kind != "constant")
                throw InvalidParameter(where(n, c) + ": linear contribution needs a constant unit");
            if (ct.kind == ContributionKind::Levy && !ct.unit.node().infinitely_divisible())
                throw InvalidParameter(where(n, c) +
                                       ": levy contribution needs an infinitely divisible unit");
            CgfExpr& slot = g[static_cast<std::size_t>(ct.source_step)]
                             [static_cast<std::size_t>(ct.source_coord)];
            if (slot) {
                const CgfExpr both[] = {slot, ct.unit};
                slot = cgf_sum(both);
            } else {
                slot = ct.unit;
            }
            depends_[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(ct.source_step)] = 1;
        }
    }
}

int ProcessSpec::dim(int n) const {
    if (n == 0) return static_cast<int>(x0_.size());
    return step(n).dim;
}

int ProcessSpec::offset(int n) const {
    if (n < 1 || n > steps()) throw InvalidParameter("offset: step index out of range");
    return offsets_[static_cast<std::size_t>(n - 1)];
}

const std::vector<ValueType>& ProcessSpec::types(int n) const {
    if (n == 0) return x0_types_;
    return step(n).types;
}

const StepSpec& ProcessSpec::step(int n) const {
    if (n < 1 || n > steps())
        throw InvalidParameter("step index " + std::to_string(n) + " out of range 1.." +
                               std::to_string(steps()));
    return steps_[static_cast<std::size_t>(n - 1)];
}

const std::vector<CgfExpr>& ProcessSpec::units(int n, int m) const {
    if (m < 0 || m >= n) throw InvalidParameter("units: source must precede the step");
    step(n);
    return grouped_[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(m)];
}

bool ProcessSpec::depends_on(int n, int m) const {
    if (m < 0 || m >= n) return false;
    step(n);
    return depends_[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(m)] != 0;
}

void ProcessSpec::check_path(const SamplePath& path) const {
    if (static_cast<int>(path.size()) != steps())
        throw DimensionMismatch("path has " + std::to_string(path.size()) + " steps, process has " +
                                std::to_string(steps()));
    for (int n = 1; n <= steps(); ++n)
        if (path[static_cast<std::size_t>(n - 1)].size() != dim(n))
            throw DimensionMismatch("path block " + std::to_string(n) + " has wrong dimension");
}

Vector ProcessSpec::flatten(const SamplePath& path) const {
    check_path(path);
    Vector v(total_dim_);
    for (int n = 1; n <= steps(); ++n) v.segment(offset(n), dim(n)) = path[static_cast<std::size_t>(n - 1)];
    return v;
}

SamplePath ProcessSpec::unflatten(const Vector& joint) const {
    if (joint.size() != total_dim_) throw DimensionMismatch("unflatten: wrong joint length");
    SamplePath p;
    for (int n = 1; n <= steps(); ++n) p.push_back(block(joint, *this, n));
    return p;
}

// ---------------------------------------------------------------------------

Vector g_map(const ProcessSpec& process, int n, int m, const Vector& s_n) {
    const auto& units = process.units(n, m);
    Vector g = Vector::Zero(process.dim(m));
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!units[i]) continue;
        try {
            g[static_cast<Eigen::Index>(i)] = units[i].value(s_n);
        } catch (const DomainViolation& e) {
            throw DomainViolation(std::string("g map of step ") + std::to_string(n) + ": " + e.what(), n);
        }
    }
    return g;
}

std::vector<TaylorScalar> g_map(const ProcessSpec& process, int n, int m,
                                std::span<const TaylorScalar> s_n) {
    const auto& units = process.units(n, m);
    const Eigen::Index dim = s_n.empty() ? 0 : s_n.front().dim();
    std::vector<TaylorScalar> g;
    g.reserve(units.size());
    for (const auto& u : units) {
        if (!u) {
            g.push_back(TaylorScalar::constant(0.0, dim));
            continue;
        }
        try {
            g.push_back(taylor_eval(u, s_n));
        } catch (const DomainViolation& e) {
            throw DomainViolation(std::string("g map of step ") + std::to_string(n) + ": " + e.what(), n);
        }
    }
    return g;
}

CgfExpr step_cgf(const ProcessSpec& process, int n, std::span<const Vector> history,
                 StepCgfOptions options) {
    const StepSpec& st = process.step(n);
    if (static_cast<int>(history.size()) != n)
        throw DimensionMismatch("step_cgf: step " + std::to_string(n) + " needs " +
                                std::to_string(n) + " history blocks, got " +
                                std::to_string(history.size()));
    for (int m = 0; m < n; ++m)
        if (history[static_cast<std::size_t>(m)].size() != process.dim(m))
            throw DimensionMismatch("step_cgf: history block " + std::to_string(m) +
                                    " has wrong dimension");

    std::vector<CgfExpr> parts{st.innovation};
    for (const Contribution& c : st.contributions) {
        const double x = history[static_cast<std::size_t>(c.source_step)][c.source_coord];
        if (options.strict) {
            const bool ok = c.kind == ContributionKind::Linear ||
                            (c.kind == ContributionKind::Levy && x >= 0.0) ||
                            (c.kind == ContributionKind::IidSum && x >= 0.0 && std::floor(x) == x);
            if (!ok)
                throw InvalidParameter("step_cgf (strict): " + to_string(c.kind) +
                                       " contribution of step " + std::to_string(n) +
                                       " driven by inadmissible value " + std::to_string(x));
        }
        if (x == 0.0) continue;
        parts.push_back(cgf_scale(c.unit, x));
    }
    return cgf_sum(parts, st.dim);
}

CgfExpr step_cgf_on_path(const ProcessSpec& process, int n, const SamplePath& path,
                 StepCgfOptions options) {
    if (n < 1 || n - 1 > static_cast<int>(path.size()))
        throw DimensionMismatch("step_cgf_on_path: path too short for step " + std::to_string(n));
    std::vector<Vector> history{process.x0()};
    for (int m = 1; m < n; ++m) history.push_back(path[static_cast<std::size_t>(m - 1)]);
    return step_cgf(process, n, std::span<const Vector>(history), options);
}

// ---------------------------------------------------------------------------

std::vector<Vector> tau_map(const ProcessSpec& process, const Vector& s0, const Vector& s) {
    if (s.size() != process.total_dim())
        throw DimensionMismatch("tau_map: joint tilt has length " + std::to_string(s.size()) +
                                ", expected " + std::to_string(process.total_dim()));
    if (s0.size() != process.dim(0)) throw DimensionMismatch("tau_map: s0 has wrong length");
    const int N = process.steps();
    std::vector<Vector> tau(static_cast<std::size_t>(N + 1));
    for (int m = N; m >= 0; --m) {
        Vector t = m == 0 ? s0 : block(s, process, m);
        for (int n = m + 1; n <= N; ++n)
            if (process.depends_on(n, m)) t += g_map(process, n, m, tau[static_cast<std::size_t>(n)]);
        tau[static_cast<std::size_t>(m)] = std::move(t);
    }
    return tau;
}

std::vector<Vector> tau_map(const ProcessSpec& process, const Vector& s) {
    return tau_map(process, Vector::Zero(process.dim(0)), s);
}

Vector T_map(const ProcessSpec& process, const Vector& s) {
    const auto tau = tau_map(process, s);
    Vector out(process.total_dim());
    for (int n = 1; n <= process.steps(); ++n)
        out.segment(process.offset(n), process.dim(n)) = tau[static_cast<std::size_t>(n)];
    return out;
}

std::vector<std::vector<TaylorScalar>> tau_map_jets(const ProcessSpec& process, const Vector& s) {
    if (s.size() != process.total_dim())
        throw DimensionMismatch("tau_map: joint tilt has length " + std::to_string(s.size()) +
                                ", expected " + std::to_string(process.total_dim()));
    const int N = process.steps();
    const Eigen::Index D = process.total_dim();
    std::vector<std::vector<TaylorScalar>> tau(static_cast<std::size_t>(N + 1));
    // Back to front: every tau_n is complete before any tau_m, m < n, reads it.
    for (int m = N; m >= 0; --m) {
        std::vector<TaylorScalar> t;
        t.reserve(static_cast<std::size_t>(process.dim(m)));
        for (int i = 0; i < process.dim(m); ++i) {
            if (m == 0) t.push_back(TaylorScalar::constant(0.0, D));
            else t.push_back(TaylorScalar::variable(s[process.offset(m) + i], process.offset(m) + i, D));
        }
        for (int n = m + 1; n <= N; ++n) {
            if (!process.depends_on(n, m)) continue;
            const auto g = g_map(process, n, m, tau[static_cast<std::size_t>(n)]);
            for (std::size_t i = 0; i < t.size(); ++i) t[i] += g[i];
        }
        tau[static_cast<std::size_t>(m)] = std::move(t);
    }
    return tau;
}

Matrix T_jacobian(const ProcessSpec& process, const Vector& s) {
    const auto tau = tau_map_jets(process, s);
    Matrix J(process.total_dim(), process.total_dim());
    for (int n = 1; n <= process.steps(); ++n)
        for (int i = 0; i < process.dim(n); ++i)
            J.col(process.offset(n) + i) = tau[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)].grad;
    return J;
}

TaylorScalar joint_cgf(const ProcessSpec& process, const Vector& s) {
    const auto tau = tau_map_jets(process, s);
    TaylorScalar k = TaylorScalar::constant(0.0, process.total_dim());
    // K_{X_0}(tau_0) = tau_0 . x0 for the degenerate initial state.
    const Vector& x0 = process.x0();
    for (Eigen::Index i = 0; i < x0.size(); ++i) k.add_scaled(x0[i], tau[0][static_cast<std::size_t>(i)]);
    for (int n = 1; n <= process.steps(); ++n) {
        try {
            k += taylor_eval(process.step(n).innovation, tau[static_cast<std::size_t>(n)]);
        } catch (const DomainViolation& e) {
            throw DomainViolation(std::string("innovation of step ") + std::to_string(n) + ": " + e.what(), n);
        }
    }
    return k;
}

TaylorScalar product_cgf(const ProcessSpec& process, const SamplePath& path, const Vector& s) {
    process.check_path(path);
    if (s.size() != process.total_dim()) throw DimensionMismatch("product_cgf: wrong tilt length");
    const Eigen::Index D = process.total_dim();
    TaylorScalar k = TaylorScalar::constant(0.0, D);
    for (int n = 1; n <= process.steps(); ++n) {
        const int at = process.offset(n), d = process.dim(n);
        TaylorScalar b;
        try {
            b = step_cgf_on_path(process, n, path).evaluate(s.segment(at, d));
        } catch (const DomainViolation& e) {
            throw DomainViolation(std::string("block ") + std::to_string(n) + ": " + e.what(), n);
        }
        k.value += b.value;
        k.grad.segment(at, d) = b.grad;
        k.hess.block(at, at, d, d) = b.hess;
    }
    return k;
}

Vector G_map(const ProcessSpec& process, const Vector& tau) {
    if (tau.size() != process.total_dim()) throw DimensionMismatch("G_map: wrong length");
    const int N = process.steps();
    Vector G = Vector::Zero(tau.size());
    for (int m = 1; m < N; ++m)
        for (int n = m + 1; n <= N; ++n)
            if (process.depends_on(n, m))
                G.segment(process.offset(m), process.dim(m)) += g_map(process, n, m, block(tau, process, n));
    return G;
}

Vector T_inverse(const ProcessSpec& process, const Vector& tau) { return tau - G_map(process, tau); }

}  // namespace rcspa
