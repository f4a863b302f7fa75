#pragma once

#include "rcspa/solver.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace rcspa {

/// Exact conditional pmf of a scalar integer step by convolution. Supports
/// iid-sum contributions with integer multipliers and linear contributions with
/// integer shifts; the leftover field certifies the truncated mass.
/// Throws UnsupportedKind (levy, non-lattice, vector steps) or
/// TruncationFailure when the leftover would exceed `truncation`.
PmfTable exact_step_pmf(const ProcessSpec& process, int n, std::span<const Vector> history,
                        double truncation = 1e-12);

struct ExactPathResult {
    double log_pmf = 0.0;  ///< -inf when the path is impossible
    bool zero_probability = false;
    double leftover = 0.0;  ///< summed truncation bounds of the step tables
};

ExactPathResult exact_path_logpmf(const ProcessSpec& process, const SamplePath& path,
                                  double truncation = 1e-12);

/// One path x_1..x_N drawn step by step; deterministic in the seed.
SamplePath simulate_path(const ProcessSpec& process, std::uint64_t seed);

// --- model builders --------------------------------------------------------

/// Galton-Watson process with the given offspring law, N generations.
ProcessSpec make_gw(const CgfExpr& offspring, double x0, int N, std::string name = "gw");

/// INAR(p) by binomial thinning: X_n = sum_j alpha_j o X_{n-j} + eps_n.
/// `initial` holds the p starting values, most recent first (it becomes x_0).
ProcessSpec make_inar(const std::vector<double>& alphas, const CgfExpr& innovation,
                      const Vector& initial, int N, std::string name = "inar");

/// Standard models used by `verify`: GW with Poisson, binomial and geometric
/// offspring, INAR(1..3), a two-type branching model, a mixed Levy/linear model
/// and a Gaussian autoregression.
std::vector<ProcessSpec> builtin_zoo();

// --- factorization check ---------------------------------------------------

/// Paths for one model: simulated paths followed by paths displaced +-3
/// conditional standard deviations from the conditional mean at every step.
std::vector<SamplePath> select_paths(const ProcessSpec& process, int count, std::uint64_t seed);

struct VerificationRecord {
    std::string model;
    Vector path;  ///< flattened x_1..x_N
    double lhs_log = std::numeric_limits<double>::quiet_NaN();
    double rhs_log = std::numeric_limits<double>::quiet_NaN();
    double rel_gap = std::numeric_limits<double>::quiet_NaN();
    SolveStatus status_lhs = SolveStatus::NoSolution;
    SolveStatus status_rhs = SolveStatus::NoSolution;
    double corr_gap = std::numeric_limits<double>::quiet_NaN();
    double exact_log = std::numeric_limits<double>::quiet_NaN();  ///< when an oracle exists

    bool status_agrees() const noexcept {
        return (status_lhs == SolveStatus::Converged) == (status_rhs == SolveStatus::Converged);
    }
};

struct VerifyOptions {
    double tol = 1e-10;
    /// Tail paths near the edge of a nested domain need long damped runs.
    SolverConfig solver = [] {
        SolverConfig c;
        c.max_iters = 500;
        return c;
    }();
    bool exact = false;  ///< also run the enumeration oracle where it applies
    /// Test hook: perturb one Hessian entry of the joint CGF.
    bool inject_hessian_bug = false;
};

struct VerificationSummary {
    std::vector<VerificationRecord> records;
    double max_rel_gap = 0.0;
    int converged = 0;
    int status_disagreements = 0;
    int gap_violations = 0;

    bool ok() const noexcept { return status_disagreements == 0 && gap_violations == 0; }
};

VerificationRecord verify_path(const ProcessSpec& process, const SamplePath& path,
                               const VerifyOptions& opts = {});

VerificationSummary verify_factorization(const std::vector<ProcessSpec>& zoo, int paths_per_model,
                                         std::uint64_t seed, const VerifyOptions& opts = {});

}  // namespace rcspa
