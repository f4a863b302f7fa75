#include "rcspa/fit.hpp"

#include "rcspa/oracle.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace rcspa {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Stand-in for an undefined objective inside the simplex search.
constexpr double kPenalty = 1e300;

void check_series(const std::vector<double>& series, int p) {
    if (p < 0) throw InvalidParameter("inar: order must be nonnegative");
    if (static_cast<int>(series.size()) <= p)
        throw InvalidParameter("inar: series must be longer than the order");
    for (double v : series)
        if (!(v >= 0.0) || std::floor(v) != v)
            throw InvalidParameter("inar: series values must be nonnegative integers");
}

CgfExpr step_of(const std::vector<double>& series, std::size_t t, const std::vector<double>& alphas,
                const CgfExpr& innovation) {
    std::vector<CgfExpr> parts{innovation};
    for (std::size_t j = 1; j <= alphas.size(); ++j) {
        const double x = series[t - j];
        if (x != 0.0) parts.push_back(cgf_scale(bernoulli_cgf(alphas[j - 1]), x));
    }
    return cgf_sum(parts);
}

// Exact log mass when x is the bottom support point, nullopt otherwise.
std::optional<double> boundary_term(const CgfExpr& K, double x) {
    const auto a = K.node().lower_atom();
    if (a && a->point == x) return a->log_mass;
    return std::nullopt;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double logit(double a) { return std::log(a / (1.0 - a)); }

struct Problem {
    const std::vector<double>* series;
    int p;
    std::string family;
    SolverConfig solver;

    void unpack(const gsl_vector* v, std::vector<double>& alphas, std::vector<double>& inn) const {
        alphas.resize(static_cast<std::size_t>(p));
        for (int j = 0; j < p; ++j) alphas[static_cast<std::size_t>(j)] = logistic(gsl_vector_get(v, j));
        inn.clear();
        if (family == "poisson") {
            inn.push_back(std::exp(gsl_vector_get(v, p)));
        } else if (family == "geometric") {
            const double mu = std::exp(gsl_vector_get(v, p));
            inn.push_back(1.0 / (1.0 + mu));
        } else {
            const double r = std::exp(gsl_vector_get(v, p));
            const double mu = std::exp(gsl_vector_get(v, p + 1));
            inn.push_back(r);
            inn.push_back(r / (r + mu));
        }
    }

    double loglik(const gsl_vector* v) const {
        std::vector<double> a, inn;
        unpack(v, a, inn);
        try {
            return inar_loglik(*series, a, innovation_cgf(family, inn), solver);
        } catch (const Error&) {
            return kNegInf;
        }
    }
};

double neg_loglik(const gsl_vector* v, void* params) {
    const double ll = static_cast<const Problem*>(params)->loglik(v);
    return std::isfinite(ll) ? -ll : kPenalty;
}

}  // namespace

int innovation_param_count(const std::string& family) {
    if (family == "poisson" || family == "geometric") return 1;
    if (family == "negative-binomial") return 2;
    throw InvalidParameter("unknown innovation family '" + family + "'");
}

CgfExpr innovation_cgf(const std::string& family, const std::vector<double>& params) {
    if (static_cast<int>(params.size()) != innovation_param_count(family))
        throw InvalidParameter(family + ": wrong number of parameters");
    if (family == "poisson") return poisson_cgf(params[0]);
    if (family == "geometric") return geometric_cgf(params[0]);
    return negative_binomial_cgf(params[0], params[1]);
}

double inar_loglik(const std::vector<double>& series, const std::vector<double>& alphas,
                   const CgfExpr& innovation, const SolverConfig& cfg) {
    const int p = static_cast<int>(alphas.size());
    check_series(series, p);
    double ll = 0.0;
    for (std::size_t t = static_cast<std::size_t>(p); t < series.size(); ++t) {
        const CgfExpr K = step_of(series, t, alphas, innovation);
        if (auto b = boundary_term(K, series[t])) {
            ll += *b;
            continue;
        }
        const SaddlepointResult r = solve_saddlepoint(K, Vector::Constant(1, series[t]), cfg);
        if (!r.converged()) return kNegInf;
        ll += r.log_spa;
    }
    return ll;
}

double inar_loglik_joint(const std::vector<double>& series, const std::vector<double>& alphas,
                         const CgfExpr& innovation, const SolverConfig& cfg) {
    const int p = static_cast<int>(alphas.size());
    check_series(series, p);
    double ll = 0.0;
    std::size_t t = static_cast<std::size_t>(p);
    while (t < series.size()) {
        const CgfExpr K = step_of(series, t, alphas, innovation);
        if (auto b = boundary_term(K, series[t])) {
            ll += *b;
            ++t;
            continue;
        }
        std::size_t end = t + 1;
        while (end < series.size() && !boundary_term(step_of(series, end, alphas, innovation), series[end]))
            ++end;
        Vector initial = Vector::Zero(std::max(p, 1));
        for (int j = 1; j <= p; ++j) initial[j - 1] = series[t - static_cast<std::size_t>(j)];
        const ProcessSpec run = make_inar(alphas, innovation, initial, static_cast<int>(end - t), "run");
        SamplePath path;
        for (std::size_t k = t; k < end; ++k) path.push_back(Vector::Constant(1, series[k]));
        const SaddlepointResult r = spa_joint(run, path, cfg);
        if (!r.converged()) return kNegInf;
        ll += r.log_spa;
        t = end;
    }
    return ll;
}

FitResult fit_inar(const std::vector<double>& series, const FitOptions& opts) {
    const int p = opts.order;
    check_series(series, p);
    const int k = innovation_param_count(opts.family);
    const std::size_t dim = static_cast<std::size_t>(p + k);
    FitResult res;

    const bool constant = std::all_of(series.begin(), series.end(), [&](double v) { return v == series[0]; });
    if (constant) res.diagnostics.push_back("constant series: thinning coefficients are not identifiable");

    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(series.size());

    Problem prob{&series, p, opts.family, opts.solver};
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(dim), gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(dim), gsl_vector_free);
    const double a0 = p > 0 ? std::min(0.3, 0.6 / p) : 0.0;
    for (int j = 0; j < p; ++j) gsl_vector_set(x.get(), j, logit(a0));
    const double inn_mean = std::max(mean * (1.0 - a0 * p), 0.1);
    gsl_vector_set(x.get(), p, std::log(inn_mean));
    if (opts.family == "negative-binomial") {
        gsl_vector_set(x.get(), p, 0.0);
        gsl_vector_set(x.get(), p + 1, std::log(inn_mean));
    }
    gsl_vector_set_all(step.get(), 0.5);

    gsl_multimin_function fn{&neg_loglik, dim, &prob};
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> nm(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim), gsl_multimin_fminimizer_free);
    gsl_set_error_handler_off();
    gsl_multimin_fminimizer_set(nm.get(), &fn, x.get(), step.get());

    std::vector<double> alphas, inn;
    auto record = [&](int iter, double size) {
        prob.unpack(nm->x, alphas, inn);
        FitTraceEntry e;
        e.iteration = iter;
        e.loglik = nm->fval >= kPenalty ? kNegInf : -nm->fval;
        e.params = alphas;
        e.params.insert(e.params.end(), inn.begin(), inn.end());
        e.simplex_size = size;
        res.trace.push_back(std::move(e));
    };

    int it = 0;
    int status = GSL_CONTINUE;
    while (status == GSL_CONTINUE && it < opts.max_iters) {
        ++it;
        if (gsl_multimin_fminimizer_iterate(nm.get()) != GSL_SUCCESS) break;
        const double size = gsl_multimin_fminimizer_size(nm.get());
        status = gsl_multimin_test_size(size, opts.size_tol);
        record(it, size);
    }
    res.iterations = it;
    res.converged = status == GSL_SUCCESS && nm->fval < kPenalty;
    prob.unpack(nm->x, res.alphas, res.innovation_params);
    res.loglik = nm->fval >= kPenalty ? kNegInf : -nm->fval;
    if (!res.converged)
        res.diagnostics.push_back(std::isfinite(res.loglik) ? "simplex did not shrink within the iteration budget"
                                                            : "objective undefined at every simplex vertex");

    for (double a : res.alphas)
        if (a < 1e-3 || a > 1.0 - 1e-3) res.at_boundary = true;
    if (res.at_boundary) res.diagnostics.push_back("thinning estimate on the boundary of [0, 1]");

    // A ridge: over the second half of the run the likelihood barely moved
    // while the parameters did.
    if (res.trace.size() >= 20) {
        const FitTraceEntry& mid = res.trace[res.trace.size() / 2];
        const FitTraceEntry& last = res.trace.back();
        double moved = 0.0;
        for (std::size_t i = 0; i < last.params.size(); ++i)
            moved = std::max(moved, std::abs(last.params[i] - mid.params[i]));
        if (std::isfinite(last.loglik) && std::isfinite(mid.loglik) &&
            std::abs(last.loglik - mid.loglik) <= 1e-6 * (1.0 + std::abs(last.loglik)) && moved > 1e-2)
            res.flat_trace = true;
    }
    if (res.flat_trace) res.diagnostics.push_back("flat likelihood trace: parameters drift without improvement");
    return res;
}

std::vector<double> simulate_inar(const std::vector<double>& alphas, const CgfExpr& innovation,
                                  int length, std::uint64_t seed) {
    const int p = static_cast<int>(alphas.size());
    if (length <= p) throw InvalidParameter("simulate_inar: length must exceed the order");
    double s = 0.0;
    for (double a : alphas) s += a;
    const double mu = s < 1.0 ? innovation.mean()[0] / (1.0 - s) : innovation.mean()[0];
    const double start = std::round(mu);
    const Vector initial = Vector::Constant(std::max(p, 1), start);
    const ProcessSpec proc = make_inar(alphas, innovation, initial, length - p, "inar");
    const SamplePath path = simulate_path(proc, seed);
    std::vector<double> out(static_cast<std::size_t>(p), start);
    for (const Vector& v : path) out.push_back(v[0]);
    return out;
}

}  // namespace rcspa
