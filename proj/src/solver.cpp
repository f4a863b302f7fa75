#include "rcspa/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace rcspa {
namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-14;
constexpr int kPolishSteps = 3;

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Conditioning {
    double lo = 0.0, hi = 0.0;
};

Conditioning eigen_range(const Matrix& h) {
    if (h.size() == 0) return {};
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

// Objective changes below this are evaluation noise in K(s) - s.x (nested
// logs and expm1 lose a few digits, so this is wider than one rounding).
double rounding_slack(const TaylorScalar& k, const Vector& s) {
    return 1024.0 * std::numeric_limits<double>::epsilon() *
           std::max({1.0, std::abs(k.value), std::abs(s.dot(k.grad))});
}

bool is_degenerate(const Matrix& h, double tol) {
    const Conditioning c = eigen_range(h);
    return !(c.lo > tol * std::max(1.0, c.hi));
}

}  // namespace

std::string to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::DegenerateHessian: return "degenerate-hessian";
    case SolveStatus::NoSolution: return "no-solution";
    case SolveStatus::DomainLimited: return "domain-limited";
    }
    return "?";
}

void SolverConfig::validate() const {
    if (max_iters <= 0) throw InvalidParameter("solver: max_iters must be positive");
    if (!(grad_tol > 0.0)) throw InvalidParameter("solver: grad_tol must be positive");
    if (!(backtrack > 0.0 && backtrack < 1.0))
        throw InvalidParameter("solver: backtracking factor must lie in (0, 1)");
    if (!(domain_shrink > 0.0 && domain_shrink < 1.0))
        throw InvalidParameter("solver: domain shrink factor must lie in (0, 1)");
    if (!(step_tol > 0.0)) throw InvalidParameter("solver: step_tol must be positive");
    if (!(degeneracy_tol > 0.0)) throw InvalidParameter("solver: degeneracy_tol must be positive");
}

std::optional<double> log_det_2pi(const Matrix& hessian) {
    Eigen::LLT<Matrix> llt(hessian);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Matrix& L = llt.matrixL();
    double ld = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
        if (!(L(i, i) > 0.0)) return std::nullopt;
        ld += 2.0 * std::log(L(i, i));
    }
    return ld + static_cast<double>(hessian.rows()) * std::log(2.0 * std::numbers::pi);
}

SaddlepointResult solve_saddlepoint(const CgfEvaluator& K, const Vector& x,
                                    const SolverConfig& cfg) {
    cfg.validate();
    SaddlepointResult r;
    const Eigen::Index d = x.size();
    if (!x.allFinite()) {
        r.status = SolveStatus::NoSolution;
        r.message = "target is not finite";
        return r;
    }
    Vector s = cfg.initial.size() ? cfg.initial : Vector::Zero(d);
    if (s.size() != d) throw DimensionMismatch("solve_saddlepoint: initial point has wrong length");

    auto cur = K(s);
    if (!cur) {
        r.shat = s;
        r.status = SolveStatus::DomainLimited;
        r.message = "CGF not evaluable at the initial point";
        return r;
    }
    if (cur->grad.size() != d) throw DimensionMismatch("solve_saddlepoint: target length mismatch");

    // A covariance that is singular at one point is singular everywhere in the
    // domain, so the structural check is made once at the start.
    if (is_degenerate(cur->hess, cfg.degeneracy_tol)) {
        r.shat = s;
        r.hessian = cur->hess;
        r.status = SolveStatus::DegenerateHessian;
        r.message = "singular covariance (distribution supported on a hyperplane)";
        return r;
    }

    const double tol = cfg.grad_tol * (1.0 + inf_norm(x));
    auto objective = [&](const TaylorScalar& k, const Vector& at) { return k.value - at.dot(x); };
    double phi = objective(*cur, s);
    Vector resid = cur->grad - x;
    double res = inf_norm(resid);
    bool converged = false;
    bool domain_stall = false;
    int it = 0;

    for (; it < cfg.max_iters; ++it) {
        Eigen::LLT<Matrix> llt(cur->hess);
        if (llt.info() != Eigen::Success) {
            r.message = "Hessian lost positive definiteness (saddlepoint escaping to the boundary)";
            break;
        }
        const Vector step = -llt.solve(resid);
        if (!step.allFinite()) {
            r.message = "non-finite Newton step";
            break;
        }
        // A small residual alone is not enough: near the edge of the mean range
        // K' flattens out and the residual shrinks while s runs off.
        const bool step_small = inf_norm(step) <= cfg.step_tol * (1.0 + inf_norm(s));
        if (res <= tol && step_small) {
            converged = true;
            break;
        }
        const double slope = resid.dot(step);
        const double slack = rounding_slack(*cur, s);
        double alpha = 1.0;
        bool accepted = false;
        bool last_fail_domain = false;
        while (alpha >= kMinStep) {
            const Vector trial = s + alpha * step;
            auto kt = K(trial);
            if (!kt) {
                last_fail_domain = true;
                alpha *= cfg.domain_shrink;
                continue;
            }
            last_fail_domain = false;
            const double phi_t = objective(*kt, trial);
            const Vector resid_t = kt->grad - x;
            const double res_t = inf_norm(resid_t);
            const bool armijo = phi_t <= phi + kArmijo * alpha * slope;
            const bool flat_but_better = phi_t <= phi + slack && res_t < res;
            if (armijo || flat_but_better) {
                s = trial;
                cur = std::move(kt);
                phi = phi_t;
                resid = resid_t;
                res = res_t;
                accepted = true;
                break;
            }
            alpha *= cfg.backtrack;
        }
        if (!accepted) {
            domain_stall = last_fail_domain;
            r.message = domain_stall ? "line search pinned at the domain boundary"
                        : res <= tol ? "saddlepoint escaping to the edge of the mean range"
                                     : "line search could not decrease the objective";
            break;
        }
    }
    if (it == cfg.max_iters && r.message.empty() && res <= tol)
        r.message = "saddlepoint escaping to the edge of the mean range";

    r.iterations = it;
    if (converged) {
        // A few pure Newton steps past the tolerance, kept only while they help.
        for (int p = 0; p < kPolishSteps && res > 0.0; ++p) {
            Eigen::LLT<Matrix> llt(cur->hess);
            if (llt.info() != Eigen::Success) break;
            const Vector trial = s - llt.solve(resid);
            auto kt = K(trial);
            if (!kt) break;
            const double phi_t = objective(*kt, trial);
            const Vector resid_t = kt->grad - x;
            const double res_t = inf_norm(resid_t);
            if (!(phi_t <= phi + rounding_slack(*cur, s) && res_t < res)) break;
            s = trial;
            cur = std::move(kt);
            phi = phi_t;
            resid = resid_t;
            res = res_t;
        }
    }

    r.shat = s;
    r.objective = phi;
    r.grad_residual = res;
    r.hessian = cur->hess;
    if (!converged) {
        r.status = domain_stall ? SolveStatus::DomainLimited : SolveStatus::NoSolution;
        if (r.message.empty()) r.message = "iteration budget exhausted";
        return r;
    }

    const Conditioning c = eigen_range(r.hessian);
    r.near_singular = c.lo <= 1e3 * cfg.degeneracy_tol * std::max(1.0, c.hi);
    auto ld = log_det_2pi(r.hessian);
    if (!ld || !(c.lo > cfg.degeneracy_tol * std::max(1.0, c.hi))) {
        r.status = SolveStatus::DegenerateHessian;
        r.message = "Hessian numerically singular at the saddlepoint";
        return r;
    }
    r.log_det = *ld;
    r.log_spa = phi - 0.5 * r.log_det;
    r.spa = std::exp(r.log_spa);
    r.status = SolveStatus::Converged;
    return r;
}

CgfEvaluator cgf_evaluator(const CgfExpr& K) {
    return [K](const Vector& s) { return K.try_evaluate(s); };
}

SaddlepointResult solve_saddlepoint(const CgfExpr& K, const Vector& x, const SolverConfig& cfg) {
    return solve_saddlepoint(cgf_evaluator(K), x, cfg);
}

CgfEvaluator joint_evaluator(const ProcessSpec& process) {
    return [&process](const Vector& s) -> std::optional<TaylorScalar> {
        try {
            TaylorScalar k = joint_cgf(process, s);
            if (!std::isfinite(k.value) || !k.grad.allFinite() || !k.hess.allFinite())
                return std::nullopt;
            return k;
        } catch (const DomainViolation&) {
            return std::nullopt;
        }
    };
}

SaddlepointResult spa_joint(const ProcessSpec& process, const SamplePath& path,
                            const SolverConfig& cfg) {
    return solve_saddlepoint(joint_evaluator(process), process.flatten(path), cfg);
}

Vector StepwiseResult::tau_hat() const {
    Eigen::Index D = 0;
    for (const auto& s : steps) D += s.shat.size();
    Vector t(D);
    Eigen::Index at = 0;
    for (const auto& s : steps) {
        t.segment(at, s.shat.size()) = s.shat;
        at += s.shat.size();
    }
    return t;
}

StepwiseResult spa_stepwise(const ProcessSpec& process, const SamplePath& path,
                            const SolverConfig& cfg) {
    process.check_path(path);
    StepwiseResult out;
    out.spa = 1.0;
    for (int n = 1; n <= process.steps(); ++n) {
        const CgfExpr K = step_cgf_on_path(process, n, path);
        SaddlepointResult r = solve_saddlepoint(K, path[static_cast<std::size_t>(n - 1)], cfg);
        if (r.converged()) {
            out.log_spa += r.log_spa;
            out.spa *= r.spa;
        } else if (out.failed_step == 0) {
            out.status = r.status;
            out.failed_step = n;
        }
        out.steps.push_back(std::move(r));
    }
    if (!out.converged()) {
        out.log_spa = std::numeric_limits<double>::quiet_NaN();
        out.spa = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

CorrespondenceReport saddle_correspondence(const ProcessSpec& process, const SamplePath& path,
                                           const SolverConfig& cfg, double tol) {
    CorrespondenceReport rep;
    rep.joint = spa_joint(process, path, cfg);
    rep.stepwise = spa_stepwise(process, path, cfg);
    rep.both_converged = rep.joint.converged() && rep.stepwise.converged();
    if (!rep.both_converged) {
        rep.consistent = rep.joint.converged() == rep.stepwise.converged();
        rep.message = "joint " + to_string(rep.joint.status) + ", stepwise " +
                      to_string(rep.stepwise.status);
        return rep;
    }
    rep.T_of_shat = T_map(process, rep.joint.shat);
    rep.tau_hat = rep.stepwise.tau_hat();
    rep.saddle_gap = inf_norm(rep.T_of_shat - rep.tau_hat);
    rep.numerator_joint = rep.joint.objective;
    rep.log_det_joint = rep.joint.log_det;
    for (const auto& s : rep.stepwise.steps) {
        rep.numerator_product += s.objective;
        rep.log_det_product += s.log_det;
    }
    const bool num_ok = std::abs(rep.numerator_joint - rep.numerator_product) <=
                        tol * (1.0 + std::abs(rep.numerator_product));
    const bool den_ok = std::abs(rep.log_det_joint - rep.log_det_product) <=
                        tol * (1.0 + std::abs(rep.log_det_product));
    rep.consistent = rep.saddle_gap <= tol && num_ok && den_ok;
    if (!rep.consistent)
        rep.message = "saddlepoints, numerators or denominators disagree beyond tolerance";
    return rep;
}

}  // namespace rcspa
