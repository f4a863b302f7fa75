#include "rcspa/oracle.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rcspa;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

SamplePath scalar_path(std::initializer_list<double> v) {
    SamplePath p;
    for (double x : v) p.push_back(Vector::Constant(1, x));
    return p;
}

double poisson_log_pmf(double lam, double x) { return x * std::log(lam) - lam - std::lgamma(x + 1.0); }

const ProcessSpec& zoo_model(const std::string& name) {
    static const std::vector<ProcessSpec> zoo = builtin_zoo();
    for (const ProcessSpec& p : zoo)
        if (p.name() == name) return p;
    throw std::runtime_error("no model " + name);
}

}  // namespace

TEST_CASE("two bernoulli(0.5) offspring give binomial(2, 0.5)") {
    const ProcessSpec gw = make_gw(bernoulli_cgf(0.5), 2.0, 1);
    const std::vector<Vector> h{Vector::Constant(1, 2.0)};
    const PmfTable t = exact_step_pmf(gw, 1, h);
    CHECK(t.min_support() == 0);
    CHECK(t.max_support() == 2);
    CHECK(t.at(0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(t.at(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t.at(2) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("zero history gives the innovation pmf") {
    const ProcessSpec inar = make_inar({0.5}, binomial_cgf(3, 0.2), vec({0}), 1);
    const std::vector<Vector> h{Vector::Constant(1, 0.0)};
    const PmfTable t = exact_step_pmf(inar, 1, h);
    const PmfTable want = *binomial_cgf(3, 0.2).node().pmf(0.0);
    for (std::int64_t k = 0; k <= 3; ++k) CHECK(t.at(k) == doctest::Approx(want.at(k)).epsilon(1e-15));
}

TEST_CASE("truncated poisson(2) certifies its leftover") {
    const ProcessSpec inar = make_inar({0.5}, poisson_cgf(2.0), vec({0}), 1);
    const std::vector<Vector> h{Vector::Constant(1, 0.0)};
    const PmfTable t = exact_step_pmf(inar, 1, h, 1e-12);
    CHECK(t.leftover <= 1e-12);
    CHECK(t.total() + t.leftover == doctest::Approx(1.0).epsilon(1e-14));
    double tail = 0.0;
    for (std::int64_t k = t.max_support() + 1; k < t.max_support() + 60; ++k)
        tail += std::exp(poisson_log_pmf(2.0, static_cast<double>(k)));
    CHECK(tail <= 1e-12);
    // and it does not stop absurdly late
    CHECK(t.max_support() <= 25);
}

TEST_CASE("levy and vector steps have no lattice oracle") {
    const ProcessSpec& mixed = zoo_model("levy-linear");
    SamplePath path = simulate_path(mixed, 1);
    for (Vector& x : path) x = x.array().round().abs().matrix();
    CHECK_THROWS_AS(exact_path_logpmf(mixed, path), UnsupportedKind);
    const ProcessSpec& tt = zoo_model("two-type");
    CHECK_THROWS_AS(exact_path_logpmf(tt, simulate_path(tt, 1)), UnsupportedKind);
}

TEST_CASE("branching path probability is the product of poisson masses") {
    const ProcessSpec gw = make_gw(poisson_cgf(1.5), 1.0, 2);
    const ExactPathResult r = exact_path_logpmf(gw, scalar_path({2, 3}));
    CHECK_FALSE(r.zero_probability);
    CHECK(r.log_pmf == doctest::Approx(poisson_log_pmf(1.5, 2) + poisson_log_pmf(3.0, 3)).epsilon(1e-12));
    CHECK(r.leftover <= 2e-12);
}

TEST_CASE("impossible paths are flagged") {
    const ProcessSpec gw = make_gw(bernoulli_cgf(0.5), 1.0, 2);
    const ExactPathResult r = exact_path_logpmf(gw, scalar_path({3, 1}));
    CHECK(r.zero_probability);
    CHECK(std::isinf(r.log_pmf));
    CHECK(r.log_pmf < 0);
}

TEST_CASE("all-zero path sums the log masses at zero") {
    // geometric innovations put 40% of their mass on zero
    const ProcessSpec inar = make_inar({0.5}, geometric_cgf(0.4), vec({0}), 4);
    const ExactPathResult r = exact_path_logpmf(inar, scalar_path({0, 0, 0, 0}));
    CHECK_FALSE(r.zero_probability);
    CHECK(r.log_pmf == doctest::Approx(4 * std::log(0.4)).epsilon(1e-13));
}

TEST_CASE("exact step moments match the step CGF") {
    for (const char* name : {"gw-poisson", "gw-binomial", "gw-geometric", "inar1", "inar2", "inar3"}) {
        CAPTURE(name);
        const ProcessSpec& p = zoo_model(name);
        const SamplePath path = simulate_path(p, 23);
        for (int n = 1; n <= p.steps(); ++n) {
            std::vector<Vector> h{p.x0()};
            for (int m = 1; m < n; ++m) h.push_back(path[static_cast<std::size_t>(m - 1)]);
            const PmfTable t = exact_step_pmf(p, n, h);
            const CgfExpr K = step_cgf(p, n, h);
            CHECK(t.mean() == doctest::Approx(K.mean()[0]).epsilon(1e-9));
            CHECK(t.variance() == doctest::Approx(K.covariance()(0, 0)).epsilon(1e-9));
        }
    }
}

TEST_CASE("SPA and exact mass agree in order of magnitude near the mean") {
    for (const char* name : {"gw-poisson", "gw-binomial", "gw-geometric", "inar1", "inar2", "inar3"}) {
        CAPTURE(name);
        const ProcessSpec& p = zoo_model(name);
        std::vector<Vector> h{p.x0()};
        const CgfExpr K = step_cgf(p, 1, h);
        const PmfTable t = exact_step_pmf(p, 1, h);
        const double mu = K.mean()[0], sd = std::sqrt(K.covariance()(0, 0));
        for (double x = std::ceil(mu - 2 * sd); x <= mu + 2 * sd; x += 1.0) {
            if (x <= static_cast<double>(t.min_support())) continue;
            const SaddlepointResult r = solve_saddlepoint(K, Vector::Constant(1, x));
            if (!r.converged()) continue;
            const double ratio = r.spa / t.at(static_cast<std::int64_t>(x));
            CHECK(ratio >= 0.5);
            CHECK(ratio <= 2.0);
        }
    }
}

TEST_CASE("simulation is deterministic under the seed") {
    for (const ProcessSpec& p : builtin_zoo()) {
        const SamplePath a = simulate_path(p, 42), b = simulate_path(p, 42);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
        p.check_path(a);
    }
}

TEST_CASE("subcritical branching goes extinct for some seeds") {
    const ProcessSpec gw = make_gw(poisson_cgf(0.6), 3.0, 40);
    int extinct = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed)
        if (simulate_path(gw, seed).back()[0] == 0.0) ++extinct;
    CHECK(extinct > 0);
}

TEST_CASE("linear recursion without noise is deterministic") {
    std::vector<StepSpec> steps;
    for (int n = 1; n <= 4; ++n) {
        StepSpec st;
        st.innovation = constant_cgf(1.0);
        st.types = {ValueType::Real};
        st.contributions.push_back({n - 1, 0, ContributionKind::Linear, constant_cgf(-0.5)});
        steps.push_back(st);
    }
    const ProcessSpec p(Vector::Constant(1, 2.0), {ValueType::Real}, steps, "affine");
    const SamplePath a = simulate_path(p, 1), b = simulate_path(p, 999);
    double x = 2.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        x = 1.0 - 0.5 * x;
        CHECK(a[i][0] == doctest::Approx(x).epsilon(1e-15));
        CHECK(a[i][0] == b[i][0]);
    }
}

TEST_CASE("simulated step means match K'(0)") {
    for (const char* name : {"inar1", "gw-binomial", "levy-linear", "two-type"}) {
        CAPTURE(name);
        const ProcessSpec& p = zoo_model(name);
        const std::vector<Vector> h{p.x0()};
        const CgfExpr K = step_cgf(p, 1, h);
        const int n = 100000;
        Vector sum = Vector::Zero(p.dim(1));
        for (int i = 0; i < n; ++i) sum += simulate_path(p, split_seed(77, static_cast<std::uint64_t>(i)))[0];
        const Vector mean = sum / n;
        for (Eigen::Index j = 0; j < mean.size(); ++j) {
            const double se = std::sqrt(K.covariance()(j, j) / n);
            CHECK(std::abs(mean[j] - K.mean()[j]) <= 5 * se);
        }
    }
}

TEST_CASE("path selection mixes simulated and tail paths") {
    const ProcessSpec& p = zoo_model("inar2");
    const auto a = select_paths(p, 50, 7), b = select_paths(p, 50, 7);
    REQUIRE(a.size() == 50);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(p.flatten(a[i]) == p.flatten(b[i]));
    // the first tail path sits above the conditional mean at every step
    const SamplePath& up = a[25];
    for (int n = 1; n <= p.steps(); ++n) {
        std::vector<Vector> h{p.x0()};
        for (int m = 1; m < n; ++m) h.push_back(up[static_cast<std::size_t>(m - 1)]);
        CHECK(up[static_cast<std::size_t>(n - 1)][0] >= step_cgf(p, n, h).mean()[0]);
    }
}

TEST_CASE("factorization holds on the standard zoo") {
    const VerificationSummary s = verify_factorization(builtin_zoo(), 12, 5);
    CHECK(s.ok());
    CHECK(s.max_rel_gap <= 1e-10);
    CHECK(s.status_disagreements == 0);
    CHECK(s.converged > 0);
    for (const VerificationRecord& r : s.records) {
        CHECK(r.status_agrees());
        if (r.status_lhs == SolveStatus::Converged) {
            CHECK(std::isfinite(r.rel_gap));
            CHECK(r.corr_gap <= 1e-8);
        }
    }
}

TEST_CASE("gaussian model: both sides equal the exact density") {
    const ProcessSpec& p = zoo_model("gauss-ar2");
    VerifyOptions opts;
    for (const SamplePath& path : select_paths(p, 6, 3)) {
        const VerificationRecord r = verify_path(p, path, opts);
        REQUIRE(r.status_lhs == SolveStatus::Converged);
        // exact Gaussian conditional density of X_n given the two previous values
        double exact = 0.0;
        double prev1 = p.x0()[0], prev2 = p.x0()[1];
        for (const Vector& v : path) {
            const double z = v[0] - 0.2 - 0.6 * prev1 + 0.2 * prev2;
            exact += -0.5 * std::log(2 * M_PI) - 0.5 * z * z;
            prev2 = prev1;
            prev1 = v[0];
        }
        CHECK(std::abs(std::expm1(r.lhs_log - exact)) <= 1e-12);
        CHECK(std::abs(std::expm1(r.rhs_log - exact)) <= 1e-12);
    }
}

TEST_CASE("forced zero-variance step is degenerate on both sides") {
    std::vector<StepSpec> steps(2);
    steps[0].innovation = poisson_cgf(2.0);
    steps[0].types = {ValueType::Integer};
    steps[1].innovation = constant_cgf(1.0);
    steps[1].types = {ValueType::Integer};
    const ProcessSpec p(Vector::Constant(1, 0.0), {ValueType::Integer}, steps, "flat");
    const VerificationRecord r = verify_path(p, scalar_path({3, 1}));
    CHECK(r.status_rhs == SolveStatus::DegenerateHessian);
    CHECK(r.status_lhs != SolveStatus::Converged);
    CHECK(r.status_agrees());
}

TEST_CASE("a perturbed Hessian is detected") {
    VerifyOptions opts;
    opts.inject_hessian_bug = true;
    const VerificationSummary s = verify_factorization({zoo_model("inar1")}, 10, 1, opts);
    CHECK_FALSE(s.ok());
    CHECK(s.gap_violations > 0);
}

TEST_CASE("the enumeration oracle fills exact_log where it applies") {
    VerifyOptions opts;
    opts.exact = true;
    const ProcessSpec& p = zoo_model("gw-poisson");
    const VerificationRecord r = verify_path(p, simulate_path(p, 2), opts);
    CHECK(std::isfinite(r.exact_log));
    const ProcessSpec& l = zoo_model("levy-linear");
    CHECK(std::isnan(verify_path(l, simulate_path(l, 2), opts).exact_log));
}
