#pragma once

#include "rcspa/process.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rcspa {

enum class SolveStatus { Converged, DegenerateHessian, NoSolution, DomainLimited };

std::string to_string(SolveStatus s);

struct SolverConfig {
    int max_iters = 100;
    /// Converged once |K'(s) - x|_inf <= grad_tol * (1 + |x|_inf).
    double grad_tol = 1e-10;
    /// ... and the Newton step is below step_tol * (1 + |s|_inf). Targets on the
    /// edge of the mean range meet the residual test but never this one.
    double step_tol = 1e-6;
    /// Step reduction after an insufficient decrease.
    double backtrack = 0.5;
    /// Step reduction after leaving the domain.
    double domain_shrink = 0.9;
    /// Hessian counts as singular when lambda_min <= this * max(1, lambda_max).
    double degeneracy_tol = 1e-12;
    /// Starting point; empty means zero (always in the domain).
    Vector initial;

    void validate() const;
};

struct SaddlepointResult {
    Vector shat;
    double objective = 0.0;      ///< K(shat) - shat . x
    double grad_residual = 0.0;  ///< |K'(shat) - x|_inf
    Matrix hessian;
    double log_det = 0.0;        ///< log det(2 pi K''(shat))
    double log_spa = 0.0;
    double spa = 0.0;
    SolveStatus status = SolveStatus::NoSolution;
    int iterations = 0;
    /// Hessian conditioning at shat was close to the degeneracy threshold.
    bool near_singular = false;
    std::string message;

    bool converged() const noexcept { return status == SolveStatus::Converged; }
};

/// Evaluator returning K, K', K'' or nullopt outside the (possibly implicit) domain.
using CgfEvaluator = std::function<std::optional<TaylorScalar>(const Vector&)>;

/**
 * Damped Newton iteration on the convex objective s -> K(s) - s.x with a
 * backtracking line search that stays in the domain and never increases the
 * objective. Failures are reported through `status`, never thrown.
 */
SaddlepointResult solve_saddlepoint(const CgfEvaluator& K, const Vector& x,
                                    const SolverConfig& cfg = {});
SaddlepointResult solve_saddlepoint(const CgfExpr& K, const Vector& x,
                                    const SolverConfig& cfg = {});

/// log of exp(objective) / sqrt(det(2 pi H)); nullopt if H is not positive definite.
std::optional<double> log_det_2pi(const Matrix& hessian);

CgfEvaluator cgf_evaluator(const CgfExpr& K);
/// Conditional joint CGF of the process as an evaluator.
CgfEvaluator joint_evaluator(const ProcessSpec& process);

/// Multivariate SPA on the conditional joint CGF (left side of the factorization).
SaddlepointResult spa_joint(const ProcessSpec& process, const SamplePath& path,
                            const SolverConfig& cfg = {});

struct StepwiseResult {
    std::vector<SaddlepointResult> steps;
    double log_spa = 0.0;  ///< sum of per-step log-SPAs
    double spa = 0.0;      ///< product of per-step SPAs
    /// Converged, or the status of the first step that failed.
    SolveStatus status = SolveStatus::Converged;
    int failed_step = 0;   ///< 1-based, 0 when all steps converged

    bool converged() const noexcept { return status == SolveStatus::Converged; }
    /// Concatenated per-step saddlepoints (the saddlepoint of the product CGF).
    Vector tau_hat() const;
};

/// Product of per-step SPAs on the conditional one-step CGFs (right side).
StepwiseResult spa_stepwise(const ProcessSpec& process, const SamplePath& path,
                            const SolverConfig& cfg = {});

struct CorrespondenceReport {
    SaddlepointResult joint;
    StepwiseResult stepwise;
    Vector T_of_shat;         ///< T applied to the joint saddlepoint
    Vector tau_hat;           ///< stepwise saddlepoints, concatenated
    double saddle_gap = 0.0;  ///< |T(shat) - tau_hat|_inf
    double numerator_joint = 0.0;
    double numerator_product = 0.0;
    double log_det_joint = 0.0;
    double log_det_product = 0.0;
    bool both_converged = false;
    bool consistent = false;
    std::string message;
};

/// Solve both sides and check that the saddlepoints correspond under T and that
/// numerators and denominators agree separately.
CorrespondenceReport saddle_correspondence(const ProcessSpec& process, const SamplePath& path,
                                           const SolverConfig& cfg = {}, double tol = 1e-8);

}  // namespace rcspa
