#pragma once

#include "rcspa/solver.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rcspa {

/// Innovation families understood by the fitter, with their natural parameters:
///   poisson            (rate)
///   geometric          (p)
///   negative-binomial  (r, p)
CgfExpr innovation_cgf(const std::string& family, const std::vector<double>& params);
int innovation_param_count(const std::string& family);

/// Approximate INAR(p) log-likelihood of series[p..], conditional on the first
/// p values. Steps are scored by the univariate SPA; a value at the bottom of
/// the conditional support (no saddlepoint) is scored by its exact mass.
/// Returns -inf when some step has no saddlepoint.
double inar_loglik(const std::vector<double>& series, const std::vector<double>& alphas,
                   const CgfExpr& innovation, const SolverConfig& cfg = {});

/// Same objective computed with the joint multivariate SPA on every maximal run
/// of interior observations (each run conditioned on the p values before it),
/// plus the same exact boundary terms.
double inar_loglik_joint(const std::vector<double>& series, const std::vector<double>& alphas,
                         const CgfExpr& innovation, const SolverConfig& cfg = {});

struct FitOptions {
    int order = 1;
    std::string family = "poisson";
    int max_iters = 2000;
    double size_tol = 1e-7;  ///< simplex size in the unconstrained parameters
    SolverConfig solver;
};

struct FitTraceEntry {
    int iteration = 0;
    double loglik = 0.0;
    std::vector<double> params;  ///< alphas then innovation parameters
    double simplex_size = 0.0;
};

struct FitResult {
    std::vector<double> alphas;
    std::vector<double> innovation_params;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    bool at_boundary = false;  ///< some alpha within 1e-3 of 0 or 1
    bool flat_trace = false;   ///< objective stalled while parameters kept moving
    std::vector<std::string> diagnostics;
    std::vector<FitTraceEntry> trace;
};

/// Nelder-Mead ascent on logit/log transformed parameters (thinning stays in
/// (0, 1), innovation parameters in their ranges).
FitResult fit_inar(const std::vector<double>& series, const FitOptions& opts = {});

/// Seeded INAR series of the given length; the first p values are the
/// rounded stationary mean.
std::vector<double> simulate_inar(const std::vector<double>& alphas, const CgfExpr& innovation,
                                  int length, std::uint64_t seed);

}  // namespace rcspa
