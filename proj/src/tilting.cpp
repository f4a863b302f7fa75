#include "rcspa/tilting.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace rcspa {
namespace {

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Vector block(const Vector& joint, const ProcessSpec& p, int n) {
    return joint.segment(p.offset(n), p.dim(n));
}

}  // namespace

TiltedView tilt(const CgfExpr& base, const Vector& s) {
    if (!base) throw InvalidParameter("tilt: empty CGF");
    if (s.size() != base.dim()) throw DimensionMismatch("tilt: tilt length does not match CGF");
    const TaylorScalar k = base.evaluate(s);
    TiltedView v;
    v.base = base;
    v.s = s;
    v.cgf = cgf_tilted(base, s);
    v.k_at_s = k.value;
    v.mean = k.grad;
    v.covariance = k.hess;
    v.relent = s.dot(k.grad) - k.value;
    return v;
}

TiltedView tilt(const CgfExpr& base, double s) { return tilt(base, Vector::Constant(1, s)); }

double relent_direct(const PmfTable& base, double s) {
    if (base.probs.empty()) throw InvalidPmf("relent_direct: empty table");
    double total = 0.0;
    for (double p : base.probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidPmf("relent_direct: negative or non-finite mass");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw InvalidPmf("relent_direct: masses sum to " + std::to_string(total));
    if (!std::isfinite(s)) throw InvalidParameter("relent_direct: tilt must be finite");

    // log M(s) by log-sum-exp, then sum p~_k log(p~_k / p_k).
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < base.probs.size(); ++j)
        if (base.probs[j] > 0.0)
            top = std::max(top, std::log(base.probs[j]) + s * static_cast<double>(base.offset + static_cast<std::int64_t>(j)));
    double acc = 0.0;
    for (std::size_t j = 0; j < base.probs.size(); ++j)
        if (base.probs[j] > 0.0)
            acc += std::exp(std::log(base.probs[j]) + s * static_cast<double>(base.offset + static_cast<std::int64_t>(j)) - top);
    const double log_m = top + std::log(acc);
    double rel = 0.0;
    for (std::size_t j = 0; j < base.probs.size(); ++j) {
        if (base.probs[j] <= 0.0) continue;
        const double log_ratio = s * static_cast<double>(base.offset + static_cast<std::int64_t>(j)) - log_m;
        const double pt = std::exp(std::log(base.probs[j]) + log_ratio);
        rel += pt * log_ratio;
    }
    return rel;
}

SaddlepointResult spa_via_tilting(const CgfEvaluator& K, const Vector& x, const SolverConfig& cfg) {
    SaddlepointResult r = solve_saddlepoint(K, x, cfg);
    if (!r.converged()) return r;
    const auto k = K(r.shat);
    if (!k) {
        r.status = SolveStatus::DomainLimited;
        r.message = "CGF not evaluable at the saddlepoint";
        return r;
    }
    // The tilted law at shat has mean K'(shat) ~ x and covariance K''(shat).
    const double relent = r.shat.dot(k->grad) - k->value;
    auto ld = log_det_2pi(k->hess);
    if (!ld) {
        r.status = SolveStatus::DegenerateHessian;
        r.message = "tilted covariance is not positive definite";
        return r;
    }
    r.log_det = *ld;
    r.log_spa = -relent - 0.5 * r.log_det;
    r.spa = std::exp(r.log_spa);
    return r;
}

SaddlepointResult spa_via_tilting(const CgfExpr& K, const Vector& x, const SolverConfig& cfg) {
    return spa_via_tilting(cgf_evaluator(K), x, cfg);
}

std::vector<Vector> probe_points(Eigen::Index dim, int count, double radius, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-radius, radius);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int c = 0; c < count; ++c) {
        Vector v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) v[i] = u(rng);
        out.push_back(std::move(v));
    }
    return out;
}

MeanTiltReport mean_determines_tilt_check(const CgfExpr& base, const Vector& s,
                                          const Vector& s_tilde) {
    const TiltedView a = tilt(base, s);
    const TiltedView b = tilt(base, s_tilde);
    MeanTiltReport rep;
    rep.mean_gap = inf_norm(a.mean - b.mean);
    rep.means_equal = rep.mean_gap <= 1e-10 * (1.0 + inf_norm(a.mean));

    for (const Vector& p : probe_points(base.dim(), 16, 0.05, 0x7417)) {
        const auto ka = a.cgf.try_evaluate(p);
        const auto kb = b.cgf.try_evaluate(p);
        if (!ka || !kb) continue;
        rep.cgf_gap = std::max(rep.cgf_gap, std::abs(ka->value - kb->value));
        ++rep.probes_used;
    }

    const Vector delta = s_tilde - s;
    const double dd = delta.squaredNorm();
    if (dd > 0.0) {
        const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(a.covariance, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .maxCoeff();
        rep.direction_degenerate = delta.dot(a.covariance * delta) <= 1e-12 * dd * std::max(1.0, lmax);
        if (!rep.direction_degenerate) {
            constexpr int kGrid = 33;
            double prev = delta.dot(a.mean);
            for (int g = 1; g < kGrid; ++g) {
                const double t = static_cast<double>(g) / (kGrid - 1);
                const double f = delta.dot(base.evaluate(s + t * delta).grad);
                if (!(f > prev)) rep.monotone = false;
                prev = f;
            }
        }
    }
    const bool tilts_equal = rep.probes_used > 0 && rep.cgf_gap <= 1e-10;
    if (rep.means_equal)
        rep.consistent = tilts_equal;
    else
        rep.consistent = dd > 0.0 && !rep.direction_degenerate && rep.monotone;
    return rep;
}

TiltedStep tilt_step(const ProcessSpec& process, int n, std::span<const Vector> history,
                     const Vector& s_n) {
    if (n < 1 || n > process.steps()) throw InvalidParameter("tilt_step: step out of range");
    if (static_cast<int>(history.size()) != n)
        throw DimensionMismatch("tilt_step: step " + std::to_string(n) + " needs " +
                                std::to_string(n) + " history blocks");
    if (s_n.size() != process.dim(n)) throw DimensionMismatch("tilt_step: tilt has wrong length");

    TiltedStep out;
    out.step = n;
    out.s = s_n;
    out.innovation = tilt(process.step(n).innovation, s_n);
    out.relent = out.innovation.relent;
    out.mean = out.innovation.mean;
    out.covariance = out.innovation.covariance;
    std::vector<CgfExpr> parts{out.innovation.cgf};
    out.units.resize(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m) {
        const Vector& x = history[static_cast<std::size_t>(m)];
        if (x.size() != process.dim(m))
            throw DimensionMismatch("tilt_step: history block " + std::to_string(m) + " has wrong dimension");
        const auto& units = process.units(n, m);
        auto& row = out.units[static_cast<std::size_t>(m)];
        row.resize(units.size());
        for (std::size_t i = 0; i < units.size(); ++i) {
            if (!units[i]) continue;
            row[i] = tilt(units[i], s_n);
            const double xi = x[static_cast<Eigen::Index>(i)];
            out.relent += xi * row[i].relent;
            out.mean += xi * row[i].mean;
            out.covariance += xi * row[i].covariance;
            if (xi != 0.0) parts.push_back(cgf_scale(row[i].cgf, xi));
        }
    }
    out.compound_cgf = cgf_sum(parts, process.dim(n));
    return out;
}

TiltedProcessReport tilt_process(const ProcessSpec& process, const Vector& s) {
    if (s.size() != process.total_dim())
        throw DimensionMismatch("tilt_process: joint tilt has wrong length");
    const int N = process.steps();
    TiltedProcessReport rep;
    rep.tau = tau_map(process, s);

    std::vector<StepSpec> steps;
    for (int n = 1; n <= N; ++n) {
        const Vector& tn = rep.tau[static_cast<std::size_t>(n)];
        StepSpec st = process.step(n);
        rep.innovations.push_back(tilt(st.innovation, tn));
        st.innovation = rep.innovations.back().cgf;
        for (Contribution& c : st.contributions) c.unit = cgf_tilted(c.unit, tn);
        steps.push_back(std::move(st));
    }
    rep.tilted = std::make_shared<const ProcessSpec>(process.x0(), process.types(0), std::move(steps),
                                                     process.name() + "~tilted");

    // Tilted means forward through the steps; per-step relents are affine in
    // the history, so their expectations are the values at the tilted means.
    rep.tilted_means.push_back(process.x0());
    for (int n = 1; n <= N; ++n) {
        const TiltedStep ts = tilt_step(process, n, rep.tilted_means, rep.tau[static_cast<std::size_t>(n)]);
        rep.step_relents.push_back(ts.relent);
        rep.total_relent_decomposed += ts.relent;
        rep.tilted_means.push_back(ts.mean);
    }
    rep.total_relent_decomposed += rep.relent_x0;

    const TaylorScalar k = joint_cgf(process, s);
    rep.total_relent_joint = s.dot(k.grad) - k.value;
    rep.decomposition_gap = std::abs(rep.total_relent_joint - rep.total_relent_decomposed);
    for (int n = 1; n <= N; ++n)
        rep.mean_gap = std::max(rep.mean_gap,
                                inf_norm(block(k.grad, process, n) - rep.tilted_means[static_cast<std::size_t>(n)]));

    for (const Vector& p : probe_points(process.total_dim(), 16, 0.05, 0x5eed)) {
        double lhs, shifted;
        try {
            lhs = joint_cgf(*rep.tilted, p).value;
            shifted = joint_cgf(process, s + p).value;
        } catch (const DomainViolation&) {
            continue;
        }
        // the difference cancels two values that can be astronomically large
        const double scale = std::max({1.0, std::abs(shifted), std::abs(k.value)});
        rep.probe_gap = std::max(rep.probe_gap, std::abs(lhs - (shifted - k.value)) / scale);
        ++rep.probes_used;
    }
    return rep;
}

DeterminantWitness determinant_witness(const ProcessSpec& process, const SamplePath& path,
                                       const SolverConfig& cfg, double tol) {
    if (process.steps() != 2) throw InvalidParameter("determinant_witness: needs a two-step process");
    const CorrespondenceReport cor = saddle_correspondence(process, path, cfg, tol);
    if (!cor.both_converged)
        throw InvalidParameter("determinant_witness: saddlepoint not found (" + cor.message + ")");

    const int d1 = process.dim(1), d2 = process.dim(2);
    DeterminantWitness w;
    w.var_joint = cor.joint.hessian;
    w.var_product = Matrix::Zero(d1 + d2, d1 + d2);
    w.var_product.topLeftCorner(d1, d1) = cor.stepwise.steps[0].hessian;
    w.var_product.bottomRightCorner(d2, d2) = cor.stepwise.steps[1].hessian;

    const Vector s2 = block(cor.joint.shat, process, 2);
    w.A = Matrix::Zero(d2, d1);
    const auto& units = process.units(2, 1);
    for (int i = 0; i < d1; ++i)
        if (units[static_cast<std::size_t>(i)]) w.A.col(i) = units[static_cast<std::size_t>(i)].evaluate(s2).grad;

    Matrix L = Matrix::Identity(d1 + d2, d1 + d2);
    L.bottomLeftCorner(d2, d1) = w.A;
    w.factored = L * w.var_product * L.transpose();
    w.factor_rel_gap = (w.var_joint - w.factored).norm() / std::max(w.var_joint.norm(), 1e-300);
    w.log_det_joint = cor.joint.log_det;
    w.log_det_product = cor.log_det_product;
    w.det_rel_gap = std::abs(std::expm1(w.log_det_joint - w.log_det_product));
    w.ok = w.factor_rel_gap <= tol && w.det_rel_gap <= tol;
    return w;
}

}  // namespace rcspa
