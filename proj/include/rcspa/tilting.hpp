#pragma once

#include "rcspa/solver.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace rcspa {

/// Exponential tilt of a distribution, represented through its CGF only.
struct TiltedView {
    CgfExpr base;
    Vector s;
    CgfExpr cgf;        ///< sigma -> K(s + sigma) - K(s)
    double k_at_s = 0.0;
    Vector mean;        ///< K'(s)
    Matrix covariance;  ///< K''(s)
    double relent = 0.0;  ///< s.K'(s) - K(s), the relative entropy to the base
};

TiltedView tilt(const CgfExpr& base, const Vector& s);
TiltedView tilt(const CgfExpr& base, double s);

/// Relative entropy of the s-tilt of a finite pmf table, by direct summation
/// of the reweighted terms. Throws InvalidPmf unless the table is a pmf.
double relent_direct(const PmfTable& base, double s);

/// SPA computed as exp(-relent) / sqrt(det(2 pi Var)) of the tilted distribution
/// whose mean is x. Same saddlepoint as solve_saddlepoint.
SaddlepointResult spa_via_tilting(const CgfExpr& K, const Vector& x, const SolverConfig& cfg = {});
SaddlepointResult spa_via_tilting(const CgfEvaluator& K, const Vector& x,
                                  const SolverConfig& cfg = {});

/// Deterministic pseudo-random probe points in [-radius, radius]^dim.
std::vector<Vector> probe_points(Eigen::Index dim, int count, double radius, std::uint64_t seed);

struct MeanTiltReport {
    double mean_gap = 0.0;            ///< |K'(s) - K'(s~)|_inf
    bool means_equal = false;
    double cgf_gap = 0.0;             ///< max tilted-CGF difference over probes
    int probes_used = 0;
    bool direction_degenerate = false;  ///< (s~ - s).X is a.s. constant
    bool monotone = true;             ///< sigma -> (s~-s).K'(s + sigma(s~-s)) strictly increasing
    bool consistent = false;
};

/// Check that equal tilted means force equal tilted distributions, and the
/// strict monotonicity along the segment that drives it.
MeanTiltReport mean_determines_tilt_check(const CgfExpr& base, const Vector& s,
                                          const Vector& s_tilde);

/// Tilt of one step Q_n, built piecewise from the tilted innovation and units.
struct TiltedStep {
    int step = 0;
    Vector s;
    TiltedView innovation;
    /// units[m][i]: Z_{n,m,i}(1) tilted by s, so units[m][i].cgf is the tilted
    /// g function entry (empty base where undeclared).
    std::vector<std::vector<TiltedView>> units;
    /// Tilted step CGF assembled from the tilted pieces with the given history.
    CgfExpr compound_cgf;
    double relent = 0.0;
    Vector mean;
    Matrix covariance;
};

/// Tilt Q_n(history) by s_n. The history may be any real vectors.
TiltedStep tilt_step(const ProcessSpec& process, int n, std::span<const Vector> history,
                     const Vector& s_n);

struct TiltedProcessReport {
    std::vector<Vector> tau;            ///< tau_0..tau_N at the joint tilt
    std::shared_ptr<const ProcessSpec> tilted;  ///< the tilted process as a process
    std::vector<TiltedView> innovations;        ///< index n-1
    std::vector<Vector> tilted_means;   ///< x~_0..x~_N
    std::vector<double> step_relents;   ///< index n-1, evaluated at tilted means
    double relent_x0 = 0.0;             ///< zero: X_0 is degenerate
    double total_relent_joint = 0.0;    ///< s.K'(s) - K(s) on the joint CGF
    double total_relent_decomposed = 0.0;
    double decomposition_gap = 0.0;
    double mean_gap = 0.0;              ///< |K'_joint(s) - (x~_1..x~_N)|_inf
    double probe_gap = 0.0;             ///< max |K_tilted(sigma) - (K(s+sigma) - K(s))| / max(1, |K(s+sigma)|, |K(s)|)
    int probes_used = 0;
};

/// Tilt the whole conditional process by the joint tilt s (length D).
TiltedProcessReport tilt_process(const ProcessSpec& process, const Vector& s);

/// Covariance factorization at the saddlepoints of a two-step path:
/// Var(X^) = [I 0; A I] Var(Y^) [I A'; 0 I] with Var(Y^) block diagonal.
struct DeterminantWitness {
    Matrix var_joint;
    Matrix var_product;
    Matrix A;
    Matrix factored;
    double log_det_joint = 0.0;
    double log_det_product = 0.0;
    double det_rel_gap = 0.0;
    double factor_rel_gap = 0.0;  ///< Frobenius, relative
    bool ok = false;
};

/// Requires a two-step process and a path on which both sides converge.
DeterminantWitness determinant_witness(const ProcessSpec& process, const SamplePath& path,
                                       const SolverConfig& cfg = {}, double tol = 1e-8);

}  // namespace rcspa
