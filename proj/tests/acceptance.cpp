// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include "rcspa/cli.hpp"
#include "rcspa/fit.hpp"
#include "rcspa/oracle.hpp"
#include "rcspa/tilting.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

using namespace rcspa;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Line {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            if (ok) detail += " first failure: " + what + ";";
            ok = false;
        }
    }
};

int failures = 0;

void report(int id, const char* title, const Line& l) {
    std::printf("criterion %d %s: %s |%s\n", id, title, l.ok ? "PASS" : "FAIL", l.detail.c_str());
    std::fflush(stdout);
    if (!l.ok) ++failures;
}

std::string num(double v) { return format_double(v); }

bool joint_ok(const ProcessSpec& p, const Vector& s) {
    try {
        joint_cgf(p, s);
        return true;
    } catch (const DomainViolation&) {
        return false;
    }
}

std::vector<Vector> history_of(const ProcessSpec& p, const SamplePath& path, int n) {
    std::vector<Vector> h{p.x0()};
    for (int m = 1; m < n; ++m) h.push_back(path[static_cast<std::size_t>(m - 1)]);
    return h;
}

// The first two steps of a model as a model of its own.
ProcessSpec first_two_steps(const ProcessSpec& p) {
    return ProcessSpec(p.x0(), p.types(0), {p.step(1), p.step(2)}, p.name() + "-2");
}

SolverConfig long_solver() {
    SolverConfig c;
    c.max_iters = 500;
    return c;
}

// --- 1 ---------------------------------------------------------------------

void factorization() {
    Line l;
    const auto zoo = builtin_zoo();
    const auto t0 = std::chrono::steady_clock::now();
    const VerificationSummary s = verify_factorization(zoo, 50, 7);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    l.require(s.records.size() == zoo.size() * 50, "record count");
    l.require(s.max_rel_gap <= 1e-10, "max relative gap " + num(s.max_rel_gap));
    l.require(s.status_disagreements == 0, "status disagreements");
    l.require(secs < 60.0, "runtime");
    int max_n = 0;
    for (const auto& p : zoo) max_n = std::max(max_n, p.steps());
    l.detail = " models=" + std::to_string(zoo.size()) + " paths=" + std::to_string(s.records.size()) +
               " (half at +-3 sd) converged=" + std::to_string(s.converged) + " max_N=" + std::to_string(max_n) +
               " max_rel_gap=" + num(s.max_rel_gap) + " disagreements=" + std::to_string(s.status_disagreements) +
               " seconds=" + num(secs) + l.detail;
    report(1, "factorization identity", l);
}

// --- 2 ---------------------------------------------------------------------

// Differencing T loses eps*|tau|/h, so take the widest step the domain allows.
Matrix fd_T_jacobian(const ProcessSpec& p, const Vector& s) {
    for (double h : {1e-5, 1e-6, 1e-7}) {
        try {
            return support::fd_jacobian([&](const Vector& v) { return T_map(p, v); }, s, h);
        } catch (const DomainViolation&) {
        }
    }
    throw DomainViolation("no finite-difference step fits inside the domain");
}

void change_of_variables() {
    Line l;
    double identity = 0, det = 0, hess = 0, corr = 0;
    int points = 0, saddles = 0;
    Rng rng(2002);
    for (const ProcessSpec& p : builtin_zoo()) {
        const SamplePath path = simulate_path(p, 1);
        const Vector x = p.flatten(path);
        for (int k = 0; k < 100; ++k) {
            const Vector s = support::random_point(p.total_dim(), 0.2, rng,
                                                   [&](const Vector& v) { return joint_ok(p, v); });
            const Vector tau = T_map(p, s);
            const double lhs = joint_cgf(p, s).value - s.dot(x);
            const double rhs = product_cgf(p, path, tau).value - tau.dot(x);
            identity = std::max(identity, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
            det = std::max(det, std::abs(fd_T_jacobian(p, s).determinant() - 1.0));
            ++points;
        }
        for (const SamplePath& sp : select_paths(p, 50, 7)) {
            const CorrespondenceReport r = saddle_correspondence(p, sp, long_solver());
            if (!r.both_converged) continue;
            ++saddles;
            corr = std::max(corr, r.saddle_gap);
            const Matrix Tp = T_jacobian(p, r.joint.shat);
            const Matrix HQ = product_cgf(p, sp, r.T_of_shat).hess;
            const Matrix HX = joint_cgf(p, r.joint.shat).hess;
            hess = std::max(hess, (Tp * HQ * Tp.transpose() - HX).norm() / HX.norm());
        }
    }
    l.require(identity <= 1e-10, "function identity");
    l.require(det <= 1e-8, "det T'");
    l.require(hess <= 1e-8, "Hessian relation");
    l.require(corr <= 1e-8, "saddle correspondence");
    l.detail = " random_points=" + std::to_string(points) + " max_identity_rel=" + num(identity) +
               " max_|detT'-1|=" + num(det) + " saddles=" + std::to_string(saddles) +
               " max_hessian_rel_frob=" + num(hess) + " max_saddle_gap=" + num(corr) + l.detail;
    report(2, "change of variables", l);
}

// --- 3 ---------------------------------------------------------------------

void tilting_suite() {
    Line l;
    double relent_gap = 0, route = 0, commute = 0, decomp = 0, detgap = 0;
    int witnesses = 0;

    for (const CgfExpr& K : {bernoulli_cgf(0.3), binomial_cgf(4, 0.3), binomial_cgf(12, 0.65),
                             binomial_cgf(30, 0.1), constant_cgf(3.0)}) {
        const PmfTable t = *K.node().pmf(0.0);
        for (double s = -2.0; s <= 2.0; s += 0.25)
            relent_gap = std::max(relent_gap, std::abs(relent_direct(t, s) - tilt(K, s).relent));
    }

    Rng rng(3003);
    const SolverConfig cfg = long_solver();
    for (const ProcessSpec& p : builtin_zoo()) {
        for (const SamplePath& sp : select_paths(p, 50, 7)) {
            const SaddlepointResult a = spa_joint(p, sp, cfg);
            if (!a.converged()) continue;
            const SaddlepointResult b = spa_via_tilting(joint_evaluator(p), p.flatten(sp), cfg);
            l.require(b.converged(), "tilting route did not converge");
            route = std::max(route, std::abs(a.log_spa - b.log_spa));
            const TiltedProcessReport r = tilt_process(p, a.shat);
            decomp = std::max(decomp, r.decomposition_gap / std::max(1.0, r.total_relent_joint));
            for (int n = 1; n <= p.steps(); ++n) {
                const CgfExpr Kn = step_cgf(p, n, history_of(p, sp, n));
                const SaddlepointResult sa = solve_saddlepoint(Kn, sp[static_cast<std::size_t>(n - 1)], cfg);
                const SaddlepointResult sb = spa_via_tilting(Kn, sp[static_cast<std::size_t>(n - 1)], cfg);
                if (sa.converged()) route = std::max(route, std::abs(sa.log_spa - sb.log_spa));
            }
        }
        const SamplePath sp = simulate_path(p, 3);
        for (int k = 0; k < 20; ++k) {
            const Vector s = support::random_point(p.total_dim(), 0.2, rng,
                                                   [&](const Vector& v) { return joint_ok(p, v); });
            const TiltedProcessReport r = tilt_process(p, s);
            decomp = std::max(decomp, r.decomposition_gap / std::max(1.0, r.total_relent_joint));
            const int n = 1 + k % p.steps();
            const Vector s_n = s.segment(p.offset(n), p.dim(n));
            const auto h = history_of(p, sp, n);
            const TiltedStep t = tilt_step(p, n, h, s_n);
            const CgfExpr direct = cgf_tilted(step_cgf(p, n, h), s_n);
            for (const Vector& sig : probe_points(p.dim(n), 16, 0.05, 0x5eed + static_cast<unsigned>(k))) {
                const double va = t.compound_cgf.value(sig), vb = direct.value(sig);
                commute = std::max(commute, std::abs(va - vb) / std::max(1.0, std::abs(vb)));
            }
        }
        const ProcessSpec two = first_two_steps(p);
        for (const SamplePath& sp2 : select_paths(two, 10, 9)) {
            if (!spa_joint(two, sp2, cfg).converged()) continue;
            const DeterminantWitness w = determinant_witness(two, sp2, cfg);
            detgap = std::max(detgap, w.det_rel_gap);
            ++witnesses;
        }
    }
    l.require(relent_gap <= 1e-12, "direct vs analytic relative entropy");
    l.require(route <= 1e-12, "route equivalence");
    l.require(commute <= 1e-12, "tilt/compound commutation");
    l.require(decomp <= 1e-10, "entropy decomposition");
    l.require(detgap <= 1e-8 && witnesses > 0, "determinant identity");
    l.detail = " max_relent_gap=" + num(relent_gap) + " max_route_log_gap=" + num(route) +
               " max_commutation_gap=" + num(commute) + " max_decomposition_rel=" + num(decomp) +
               " two_step_witnesses=" + std::to_string(witnesses) + " max_det_rel_gap=" + num(detgap) + l.detail;
    report(3, "tilting", l);
}

// --- 4 ---------------------------------------------------------------------

void closed_forms() {
    Line l;
    double gauss = 0;
    for (double mu : {-2.0, 0.0, 1.5})
        for (double var : {0.1, 1.0, 4.0})
            for (double x : {-3.0, -0.5, 0.0, 0.7, 5.0}) {
                const SaddlepointResult r = solve_saddlepoint(gaussian_cgf(mu, var), Vector::Constant(1, x));
                const double exact = -0.5 * (kLog2Pi + std::log(var)) - (x - mu) * (x - mu) / (2 * var);
                gauss = std::max(gauss, std::abs(std::expm1(r.log_spa - exact)));
            }
    // Gaussian autoregression from the zoo: both sides against the exact density
    for (const ProcessSpec& p : builtin_zoo()) {
        if (p.name() != "gauss-ar2") continue;
        for (const SamplePath& sp : select_paths(p, 20, 7)) {
            double exact = 0.0, prev1 = p.x0()[0], prev2 = p.x0()[1];
            for (const Vector& v : sp) {
                const double z = v[0] - 0.2 - 0.6 * prev1 + 0.2 * prev2;
                exact += -0.5 * kLog2Pi - 0.5 * z * z;
                prev2 = prev1;
                prev1 = v[0];
            }
            gauss = std::max(gauss, std::abs(std::expm1(spa_joint(p, sp).log_spa - exact)));
            gauss = std::max(gauss, std::abs(std::expm1(spa_stepwise(p, sp).log_spa - exact)));
        }
    }
    double lo = 1e300, hi_excess = -1e300;
    for (double lam : {0.5, 2.0, 7.5, 20.0})
        for (int x = 1; x <= 30; ++x) {
            const SaddlepointResult r = solve_saddlepoint(poisson_cgf(lam), Vector::Constant(1, x));
            const double lr = r.log_spa - (x * std::log(lam) - lam - std::lgamma(x + 1.0));
            lo = std::min(lo, lr);
            hi_excess = std::max(hi_excess, lr - 1.0 / (12.0 * x));
            l.require(r.converged(), "poisson solve");
        }
    l.require(gauss <= 1e-12, "gaussian exactness");
    // log ratio in [0, 1/(12x)], allowing only rounding in the logs
    l.require(lo >= -1e-13 && hi_excess <= 1e-13, "poisson envelope");
    l.detail = " max_gaussian_rel=" + num(gauss) + " min_log_ratio=" + num(lo) +
               " max_log_ratio_minus_1/(12x)=" + num(hi_excess) + l.detail;
    report(4, "closed-form anchors", l);
}

// --- 5 ---------------------------------------------------------------------

void derivative_oracles() {
    Line l;
    struct Item {
        std::string name;
        Eigen::Index dim;
        std::function<TaylorScalar(const Vector&)> eval;
        std::function<bool(const Vector&)> ok;
        double radius;
    };
    std::vector<Item> items;
    auto add_cgf = [&](std::string name, CgfExpr K, double radius) {
        items.push_back({std::move(name), K.dim(), [K](const Vector& s) { return K.evaluate(s); },
                         [K](const Vector& s) { return K.in_domain(s); }, radius});
    };
    add_cgf("gaussian", gaussian_cgf(0.5, 2.0), 1.5);
    add_cgf("poisson", poisson_cgf(1.7), 1.5);
    add_cgf("bernoulli", bernoulli_cgf(0.3), 2.0);
    add_cgf("binomial", binomial_cgf(7, 0.4), 1.5);
    add_cgf("geometric", geometric_cgf(0.4), 0.45);
    add_cgf("negative-binomial", negative_binomial_cgf(2.5, 0.6), 0.8);
    add_cgf("gamma", gamma_cgf(2.0, 3.0), 2.5);
    add_cgf("compound-poisson", compound_poisson_cgf(1.5, gamma_cgf(1.0, 2.0)), 1.5);
    Vector probs(3);
    probs << 0.2, 0.3, 0.5;
    add_cgf("multinomial", multinomial_cgf(6, probs), 1.0);
    const std::vector<CgfExpr> blocks{poisson_cgf(0.5), binomial_cgf(2, 0.45)};
    add_cgf("independent", independent_cgf(blocks), 1.0);
    add_cgf("compound-vector", compound_poisson_cgf(1.5, independent_cgf(blocks)), 0.8);
    const std::vector<CgfExpr> parts{cgf_scale(poisson_cgf(1.0), 2.5), geometric_cgf(0.5)};
    add_cgf("sum-scale", cgf_sum(parts), 0.6);
    add_cgf("tilted", cgf_tilted(negative_binomial_cgf(2.0, 0.5), Vector::Constant(1, 0.3)), 0.3);
    for (const ProcessSpec& p : builtin_zoo()) {
        items.push_back({"joint:" + p.name(), p.total_dim(), [p](const Vector& s) { return joint_cgf(p, s); },
                         [p](const Vector& s) { return joint_ok(p, s); }, 0.2});
        const SamplePath sp = simulate_path(p, 5);
        items.push_back({"product:" + p.name(), p.total_dim(),
                         [p, sp](const Vector& s) { return product_cgf(p, sp, s); },
                         [p, sp](const Vector& s) {
                             try {
                                 product_cgf(p, sp, s);
                                 return true;
                             } catch (const DomainViolation&) {
                                 return false;
                             }
                         },
                         0.2});
    }
    Rng rng(5005);
    double worst = 0;
    std::string worst_name;
    for (const Item& it : items) {
        for (int k = 0; k < 200; ++k) {
            const Vector s = support::random_point(it.dim, it.radius, rng, it.ok);
            const bool nested = it.name.rfind("joint:", 0) == 0 || it.name.rfind("product:", 0) == 0;
            const auto gap = nested ? support::derivative_gap_scaled(it.eval, s) : support::derivative_gap(it.eval, s);
            const double g = std::max(gap.grad, gap.hess);
            if (g > worst) {
                worst = g;
                worst_name = it.name;
            }
        }
    }
    l.require(worst <= 1e-6, "finite-difference agreement in " + worst_name);
    l.detail = " cgfs=" + std::to_string(items.size()) + " points_each=200 max_rel_gap=" + num(worst) + " (" +
               worst_name + ")" + l.detail;
    report(5, "derivative oracles", l);
}

// --- 6 ---------------------------------------------------------------------

void inference_fixture() {
    Line l;
    const std::vector<double> series = simulate_inar({0.4}, poisson_cgf(1.0), 500, 20240601);
    const FitResult r = fit_inar(series);
    const double joint = inar_loglik_joint(series, r.alphas, poisson_cgf(r.innovation_params[0]));
    const double gap = std::abs(joint - r.loglik);
    l.require(r.converged, "optimizer convergence");
    l.require(std::abs(r.alphas[0] - 0.4) <= 0.1, "alpha estimate");
    l.require(gap <= 1e-10, "stepwise vs joint objective");
    l.detail = " alpha_hat=" + num(r.alphas[0]) + " lambda_hat=" + num(r.innovation_params[0]) +
               " loglik=" + num(r.loglik) + " objective_gap=" + num(gap) + l.detail;
    report(6, "INAR(1) fixture", l);
}

// --- 7 ---------------------------------------------------------------------

std::string run_to_string(const std::vector<std::string>& args, int& code) {
    std::ostringstream out, err;
    code = run_cli(args, out, err);
    return out.str();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void determinism() {
    Line l;
    int c1 = 0, c2 = 0;
    const std::string v1 = run_to_string({"verify", "--builtin-zoo", "--paths", "50", "--seed", "7"}, c1);
    const std::string v2 = run_to_string({"verify", "--builtin-zoo", "--paths", "50", "--seed", "7"}, c2);
    l.require(c1 == 0 && c2 == 0, "verify exit codes");
    l.require(!v1.empty() && v1 == v2, "verify output differs");

    const auto dir = std::filesystem::temp_directory_path();
    const std::string spec_dir = RCSPA_SPEC_DIR;
    int sims = 0;
    for (const auto& entry : std::filesystem::directory_iterator(spec_dir)) {
        if (entry.path().extension() != ".json") continue;
        const auto a = dir / "rcspa-acc-a.csv", b = dir / "rcspa-acc-b.csv";
        run_to_string({"simulate", "--spec", entry.path().string(), "--paths", "100", "--seed", "7", "--out",
                       a.string()},
                      c1);
        run_to_string({"simulate", "--spec", entry.path().string(), "--paths", "100", "--seed", "7", "--out",
                       b.string()},
                      c2);
        l.require(c1 == 0 && c2 == 0, "simulate exit codes");
        const std::string sa = slurp(a), sb = slurp(b);
        l.require(!sa.empty() && sa == sb, "simulate output differs for " + entry.path().filename().string());
        std::filesystem::remove(a);
        std::filesystem::remove(b);
        ++sims;
    }
    l.detail = " verify_bytes=" + std::to_string(v1.size()) + " simulate_specs=" + std::to_string(sims) + l.detail;
    report(7, "determinism", l);
}

}  // namespace

int main() {
    factorization();
    change_of_variables();
    tilting_suite();
    closed_forms();
    derivative_oracles();
    inference_fixture();
    determinism();
    std::printf("acceptance: %d of 7 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
