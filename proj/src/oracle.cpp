#include "rcspa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rcspa {
namespace {

bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

std::vector<Vector> history_of(const ProcessSpec& process, const SamplePath& path, int n) {
    std::vector<Vector> h{process.x0()};
    for (int m = 1; m < n; ++m) h.push_back(path[static_cast<std::size_t>(m - 1)]);
    return h;
}

// Source (step, coord) of lag j for step n when x_0 stores the p most recent
// starting values, most recent first.
std::pair<int, int> lag_source(int n, int j) {
    if (n - j >= 1) return {n - j, 0};
    return {0, j - n};
}

}  // namespace

PmfTable exact_step_pmf(const ProcessSpec& process, int n, std::span<const Vector> history,
                        double truncation) {
    if (!(truncation > 0.0)) throw InvalidParameter("exact_step_pmf: truncation must be positive");
    const StepSpec& st = process.step(n);
    if (st.dim != 1) throw UnsupportedKind("exact_step_pmf: only scalar steps are enumerable");
    if (static_cast<int>(history.size()) != n)
        throw DimensionMismatch("exact_step_pmf: step " + std::to_string(n) + " needs " +
                                std::to_string(n) + " history blocks");

    std::vector<std::pair<const Contribution*, double>> active;
    for (const Contribution& c : st.contributions) {
        const double x = history[static_cast<std::size_t>(c.source_step)][c.source_coord];
        if (c.kind == ContributionKind::Levy)
            throw UnsupportedKind("exact_step_pmf: levy contributions have no enumerable law");
        if (x == 0.0) continue;
        active.emplace_back(&c, x);
    }
    const double share = truncation / static_cast<double>(active.size() + 1);

    auto table_of = [](const CgfExpr& e, double budget, const char* what) {
        auto t = e.node().pmf(budget);
        if (!t) throw UnsupportedKind(std::string("exact_step_pmf: ") + what + " " +
                                      e.descriptor().kind + " is not a lattice law");
        return *t;
    };

    PmfTable acc = table_of(st.innovation, share, "innovation");
    for (const auto& [c, x] : active) {
        if (c->kind == ContributionKind::Linear) {
            const double shift = c->unit.mean()[0] * x;
            if (!is_integer(shift))
                throw UnsupportedKind("exact_step_pmf: linear contribution shifts off the lattice");
            acc.offset += static_cast<std::int64_t>(shift);
            continue;
        }
        if (!is_integer(x) || x < 0.0)
            throw UnsupportedKind("exact_step_pmf: iid-sum multiplier " + std::to_string(x) +
                                  " is not a nonnegative integer");
        const auto count = static_cast<std::int64_t>(x);
        const PmfTable unit = table_of(c->unit, share / static_cast<double>(count), "unit");
        acc = convolve(acc, convolve_power(unit, count));
    }
    if (acc.leftover > truncation)
        throw TruncationFailure("exact_step_pmf: leftover mass " + std::to_string(acc.leftover) +
                                " exceeds the bound");
    return acc;
}

ExactPathResult exact_path_logpmf(const ProcessSpec& process, const SamplePath& path,
                                  double truncation) {
    process.check_path(path);
    ExactPathResult r;
    for (int n = 1; n <= process.steps(); ++n) {
        const double x = path[static_cast<std::size_t>(n - 1)][0];
        if (!is_integer(x)) throw InvalidParameter("exact_path_logpmf: path value is not an integer");
        const auto h = history_of(process, path, n);
        const PmfTable t = exact_step_pmf(process, n, h, truncation);
        r.leftover += t.leftover;
        const double p = t.at(static_cast<std::int64_t>(x));
        if (!(p > 0.0)) {
            r.zero_probability = true;
            r.log_pmf = -std::numeric_limits<double>::infinity();
            return r;
        }
        r.log_pmf += std::log(p);
    }
    return r;
}

SamplePath simulate_path(const ProcessSpec& process, std::uint64_t seed) {
    Rng rng(seed);
    SamplePath path;
    std::vector<Vector> h{process.x0()};
    for (int n = 1; n <= process.steps(); ++n) {
        const StepSpec& st = process.step(n);
        Vector x = st.innovation.node().sample(rng);
        for (const Contribution& c : st.contributions) {
            const double t = h[static_cast<std::size_t>(c.source_step)][c.source_coord];
            if (t == 0.0) continue;
            x += c.unit.node().sample_sum(t, rng);
        }
        path.push_back(x);
        h.push_back(std::move(x));
    }
    return path;
}

ProcessSpec make_gw(const CgfExpr& offspring, double x0, int N, std::string name) {
    if (N < 1) throw InvalidParameter("make_gw: N must be positive");
    std::vector<StepSpec> steps;
    for (int n = 1; n <= N; ++n) {
        StepSpec st;
        st.innovation = constant_cgf(0.0);
        st.contributions.push_back({n - 1, 0, ContributionKind::IidSum, offspring});
        st.types = {ValueType::Integer};
        steps.push_back(std::move(st));
    }
    return ProcessSpec(Vector::Constant(1, x0), {ValueType::Integer}, std::move(steps), std::move(name));
}

ProcessSpec make_inar(const std::vector<double>& alphas, const CgfExpr& innovation,
                      const Vector& initial, int N, std::string name) {
    const int p = static_cast<int>(alphas.size());
    if (N < 1) throw InvalidParameter("make_inar: N must be positive");
    if (p == 0) {
        if (initial.size() < 1) throw InvalidParameter("make_inar: need at least one starting value");
    } else if (initial.size() != p) {
        throw DimensionMismatch("make_inar: need exactly p starting values");
    }
    std::vector<StepSpec> steps;
    for (int n = 1; n <= N; ++n) {
        StepSpec st;
        st.innovation = innovation;
        for (int j = 1; j <= p; ++j) {
            const double a = alphas[static_cast<std::size_t>(j - 1)];
            if (!(a >= 0.0 && a <= 1.0)) throw InvalidParameter("make_inar: thinning outside [0, 1]");
            const auto [m, i] = lag_source(n, j);
            st.contributions.push_back({m, i, ContributionKind::IidSum, bernoulli_cgf(a)});
        }
        st.types = {ValueType::Integer};
        steps.push_back(std::move(st));
    }
    return ProcessSpec(initial, std::vector<ValueType>(static_cast<std::size_t>(initial.size()), ValueType::Integer),
                       std::move(steps), std::move(name));
}

std::vector<ProcessSpec> builtin_zoo() {
    std::vector<ProcessSpec> zoo;
    zoo.push_back(make_gw(poisson_cgf(1.5), 5.0, 6, "gw-poisson"));
    zoo.push_back(make_gw(binomial_cgf(3, 0.55), 4.0, 6, "gw-binomial"));
    zoo.push_back(make_gw(geometric_cgf(0.4), 4.0, 6, "gw-geometric"));

    Vector i1(1), i2(2), i3(3);
    i1 << 3;
    i2 << 3, 2;
    i3 << 4, 2, 3;
    zoo.push_back(make_inar({0.5}, poisson_cgf(2.0), i1, 6, "inar1"));
    zoo.push_back(make_inar({0.3, 0.25}, poisson_cgf(1.5), i2, 6, "inar2"));
    zoo.push_back(make_inar({0.25, 0.2, 0.15}, geometric_cgf(0.4), i3, 6, "inar3"));

    {
        // Two types; type-0 parents produce correlated offspring pairs.
        const CgfExpr pair_jump[] = {bernoulli_cgf(0.6), bernoulli_cgf(0.4)};
        const CgfExpr type0 = compound_poisson_cgf(1.5, independent_cgf(pair_jump));
        const CgfExpr t1[] = {poisson_cgf(0.5), binomial_cgf(2, 0.45)};
        const CgfExpr type1 = independent_cgf(t1);
        const CgfExpr imm[] = {poisson_cgf(0.3), poisson_cgf(0.3)};
        const CgfExpr immigration = independent_cgf(imm);
        std::vector<StepSpec> steps;
        for (int n = 1; n <= 5; ++n) {
            StepSpec st;
            st.dim = 2;
            st.innovation = immigration;
            st.contributions.push_back({n - 1, 0, ContributionKind::IidSum, type0});
            st.contributions.push_back({n - 1, 1, ContributionKind::IidSum, type1});
            st.types = {ValueType::Integer, ValueType::Integer};
            steps.push_back(std::move(st));
        }
        Vector x0(2);
        x0 << 3, 2;
        zoo.emplace_back(x0, std::vector<ValueType>{ValueType::Integer, ValueType::Integer},
                         std::move(steps), "two-type");
    }
    {
        // Gamma subordinator and linear feedback from lag 1, compound Poisson from lag 2.
        const CgfExpr gamma_unit = gamma_cgf(0.5, 1.0);
        const CgfExpr cp_unit = compound_poisson_cgf(0.5, gamma_cgf(1.0, 2.0));
        std::vector<StepSpec> steps;
        for (int n = 1; n <= 6; ++n) {
            StepSpec st;
            st.innovation = gamma_cgf(2.0, 4.0);
            const auto [m1, i1s] = lag_source(n, 1);
            const auto [m2, i2s] = lag_source(n, 2);
            st.contributions.push_back({m1, i1s, ContributionKind::Levy, gamma_unit});
            st.contributions.push_back({m1, i1s, ContributionKind::Linear, constant_cgf(0.2)});
            st.contributions.push_back({m2, i2s, ContributionKind::Levy, cp_unit});
            st.types = {ValueType::NonnegativeReal};
            steps.push_back(std::move(st));
        }
        Vector x0(2);
        x0 << 2.0, 1.5;
        zoo.emplace_back(x0, std::vector<ValueType>(2, ValueType::NonnegativeReal), std::move(steps),
                         "levy-linear");
    }
    {
        std::vector<StepSpec> steps;
        for (int n = 1; n <= 6; ++n) {
            StepSpec st;
            st.innovation = gaussian_cgf(0.2, 1.0);
            const auto [m1, i1s] = lag_source(n, 1);
            const auto [m2, i2s] = lag_source(n, 2);
            st.contributions.push_back({m1, i1s, ContributionKind::Linear, constant_cgf(0.6)});
            st.contributions.push_back({m2, i2s, ContributionKind::Linear, constant_cgf(-0.2)});
            st.types = {ValueType::Real};
            steps.push_back(std::move(st));
        }
        Vector x0(2);
        x0 << 0.5, -0.3;
        zoo.emplace_back(x0, std::vector<ValueType>(2, ValueType::Real), std::move(steps), "gauss-ar2");
    }
    return zoo;
}

std::vector<SamplePath> select_paths(const ProcessSpec& process, int count, std::uint64_t seed) {
    if (count < 0) throw InvalidParameter("select_paths: negative count");
    const int n_tail = count / 2;
    const int n_sim = count - n_tail;
    std::vector<SamplePath> out;
    for (int j = 0; j < n_sim; ++j) out.push_back(simulate_path(process, split_seed(seed, static_cast<std::uint64_t>(j))));

    for (int j = 0; j < n_tail; ++j) {
        // All up, all down, then random signs per step. A displacement that
        // leaves the mean range is pulled back toward the mean until the
        // conditional step has a saddlepoint.
        Rng rng(split_seed(seed ^ 0x7a11ULL, static_cast<std::uint64_t>(j)));
        std::bernoulli_distribution coin(0.5);
        SamplePath path;
        std::vector<Vector> h{process.x0()};
        for (int n = 1; n <= process.steps(); ++n) {
            const CgfExpr K = step_cgf(process, n, std::span<const Vector>(h));
            const TaylorScalar k = K.evaluate(Vector::Zero(process.dim(n)));
            Vector sign(process.dim(n));
            for (Eigen::Index i = 0; i < sign.size(); ++i)
                sign[i] = j == 0 ? 1.0 : j == 1 ? -1.0 : (coin(rng) ? 1.0 : -1.0);
            Vector x;
            for (int shrink = 0; shrink <= 12; ++shrink) {
                const double width = 3.0 * (1.0 - shrink / 12.0);
                x = k.grad;
                for (Eigen::Index i = 0; i < x.size(); ++i) {
                    x[i] += sign[i] * width * std::sqrt(std::max(k.hess(i, i), 0.0));
                    if (process.types(n)[static_cast<std::size_t>(i)] == ValueType::Integer)
                        x[i] = std::round(x[i]);
                }
                if (solve_saddlepoint(K, x).converged()) break;
            }
            path.push_back(x);
            h.push_back(std::move(x));
        }
        out.push_back(std::move(path));
    }
    return out;
}

VerificationRecord verify_path(const ProcessSpec& process, const SamplePath& path,
                               const VerifyOptions& opts) {
    VerificationRecord rec;
    rec.model = process.name();
    rec.path = process.flatten(path);

    CgfEvaluator K = joint_evaluator(process);
    if (opts.inject_hessian_bug) {
        K = [inner = std::move(K)](const Vector& s) {
            auto k = inner(s);
            if (k) k->hess(0, 0) *= 1.0 + 1e-3;
            return k;
        };
    }
    const SaddlepointResult lhs = solve_saddlepoint(K, rec.path, opts.solver);
    const StepwiseResult rhs = spa_stepwise(process, path, opts.solver);
    rec.status_lhs = lhs.status;
    rec.status_rhs = rhs.status;
    if (lhs.converged()) rec.lhs_log = lhs.log_spa;
    if (rhs.converged()) rec.rhs_log = rhs.log_spa;
    if (lhs.converged() && rhs.converged()) {
        rec.rel_gap = std::abs(rec.lhs_log - rec.rhs_log) / (1.0 + std::abs(rec.rhs_log));
        const Vector d = T_map(process, lhs.shat) - rhs.tau_hat();
        rec.corr_gap = d.cwiseAbs().maxCoeff();
    }
    if (opts.exact) {
        try {
            const ExactPathResult e = exact_path_logpmf(process, path);
            rec.exact_log = e.log_pmf;
        } catch (const Error&) {
        }
    }
    return rec;
}

VerificationSummary verify_factorization(const std::vector<ProcessSpec>& zoo, int paths_per_model,
                                         std::uint64_t seed, const VerifyOptions& opts) {
    VerificationSummary sum;
    for (std::size_t m = 0; m < zoo.size(); ++m) {
        const auto paths = select_paths(zoo[m], paths_per_model, split_seed(seed, m));
        for (const auto& p : paths) {
            VerificationRecord r = verify_path(zoo[m], p, opts);
            if (!r.status_agrees()) ++sum.status_disagreements;
            if (r.status_lhs == SolveStatus::Converged && r.status_rhs == SolveStatus::Converged) {
                ++sum.converged;
                sum.max_rel_gap = std::max(sum.max_rel_gap, r.rel_gap);
                if (!(r.rel_gap <= opts.tol)) ++sum.gap_violations;
            }
            sum.records.push_back(std::move(r));
        }
    }
    return sum;
}

}  // namespace rcspa
