#include "rcspa/cli.hpp"

#include "rcspa/fit.hpp"
#include "rcspa/oracle.hpp"
#include "rcspa/specfile.hpp"
#include "rcspa/tilting.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rcspa {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string join(const Vector& v, const char* sep = " ") {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += format_double(v[i]);
    }
    return s;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
    std::string t = text;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream in(t);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || !std::isfinite(v)) throw ParseError(what + ": '" + tok + "' is not a number");
        out.push_back(v);
    }
    return out;
}

SamplePath path_from_text(const ProcessSpec& process, const std::string& text) {
    const auto vals = parse_numbers(text, "--path");
    if (static_cast<int>(vals.size()) != process.total_dim())
        throw ParseError("--path: expected " + std::to_string(process.total_dim()) + " values, got " +
                         std::to_string(vals.size()));
    return process.unflatten(Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
}

// Path values must respect the coordinate tags and every contribution must be
// driven by an admissible multiplier.
void check_strict(const ProcessSpec& process, const SamplePath& path) {
    for (int n = 1; n <= process.steps(); ++n) {
        const Vector& x = path[static_cast<std::size_t>(n - 1)];
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const ValueType t = process.types(n)[static_cast<std::size_t>(i)];
            const bool ok = t == ValueType::Real || (x[i] >= 0.0 && (t == ValueType::NonnegativeReal ||
                                                                     std::floor(x[i]) == x[i]));
            if (!ok)
                throw InvalidParameter("--path: x_" + std::to_string(n) + "[" + std::to_string(i + 1) +
                                       "] = " + format_double(x[i]) + " violates its " + to_string(t) + " tag");
        }
        step_cgf_on_path(process, n, path, StepCgfOptions{true});
    }
}

struct Sink {
    std::ofstream file;
    std::ostream* os;

    Sink(const std::string& path, std::ostream& fallback) : os(&fallback) {
        if (!path.empty()) {
            file.open(path, std::ios::binary);
            if (!file) throw ParseError("--out: cannot open '" + path + "' for writing");
            os = &file;
        }
    }
    std::ostream& operator*() { return *os; }
};

// --- spa -------------------------------------------------------------------

struct SpaArgs {
    std::string spec, path, out;
    double tol = 1e-10;
    bool strict = false;
};

int cmd_spa(const SpaArgs& a, std::ostream& out, std::ostream& err) {
    const ProcessSpec process = load_spec_file(a.spec);
    const SamplePath path = path_from_text(process, a.path);
    if (a.strict) check_strict(process, path);
    const CorrespondenceReport cor = saddle_correspondence(process, path, SolverConfig{}, 1e-8);

    Sink sink(a.out, out);
    std::ostream& o = *sink;
    o << "quantity,value\n";
    o << "model," << process.name() << "\n";
    for (std::size_t n = 0; n < cor.stepwise.steps.size(); ++n) {
        const SaddlepointResult& r = cor.stepwise.steps[n];
        const std::string k = "step" + std::to_string(n + 1);
        o << k << ".shat," << join(r.shat) << "\n";
        o << k << ".log_spa," << format_double(r.converged() ? r.log_spa : NAN) << "\n";
        o << k << ".status," << to_string(r.status) << "\n";
    }
    const double lhs = cor.joint.converged() ? cor.joint.log_spa : NAN;
    const double rhs = cor.stepwise.converged() ? cor.stepwise.log_spa : NAN;
    const double gap = std::abs(lhs - rhs) / (1.0 + std::abs(rhs));
    o << "joint.shat," << join(cor.joint.shat) << "\n";
    o << "joint.log_spa," << format_double(lhs) << "\n";
    o << "stepwise.log_spa," << format_double(rhs) << "\n";
    o << "rel_gap," << format_double(gap) << "\n";
    o << "corr_gap," << format_double(cor.both_converged ? cor.saddle_gap : NAN) << "\n";
    o << "status_joint," << to_string(cor.joint.status) << "\n";
    o << "status_stepwise," << to_string(cor.stepwise.status) << "\n";

    if (cor.joint.converged() != cor.stepwise.converged()) {
        err << "spa: status disagreement (" << cor.message << ")\n";
        return kExitVerification;
    }
    if (!cor.both_converged) {
        err << "spa: numerical failure: joint " << to_string(cor.joint.status) << ", stepwise "
            << to_string(cor.stepwise.status) << " at step " << cor.stepwise.failed_step << "\n";
        return kExitNumerical;
    }
    if (!(gap <= a.tol)) {
        err << "spa: relative gap " << format_double(gap) << " exceeds " << format_double(a.tol) << "\n";
        return kExitVerification;
    }
    return kExitOk;
}

// --- verify ----------------------------------------------------------------

struct VerifyArgs {
    bool builtin = false;
    std::string spec_dir, out;
    std::vector<std::string> specs;
    int paths = 50;
    std::uint64_t seed = 0;
    double tol = 1e-10;
    bool inject = false;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<ProcessSpec> zoo;
    if (a.builtin) zoo = builtin_zoo();
    for (const auto& s : a.specs) zoo.push_back(load_spec_file(s));
    if (!a.spec_dir.empty()) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(a.spec_dir)) throw ParseError("--spec-dir: '" + a.spec_dir + "' is not a directory");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(a.spec_dir))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw ParseError("--spec-dir: no .json specs in '" + a.spec_dir + "'");
        for (const auto& f : files) zoo.push_back(load_spec_file(f.string()));
    }
    if (zoo.empty()) throw ParseError("verify: give --builtin-zoo, --spec or --spec-dir");
    if (a.paths < 1) throw ParseError("--paths: must be positive");

    VerifyOptions opts;
    opts.tol = a.tol;
    opts.inject_hessian_bug = a.inject;
    const VerificationSummary sum = verify_factorization(zoo, a.paths, a.seed, opts);

    Sink sink(a.out, out);
    std::ostream& o = *sink;
    o << "model,path,lhs_log,rhs_log,rel_gap,status_lhs,status_rhs,corr_gap\n";
    for (const auto& r : sum.records)
        o << r.model << ',' << join(r.path) << ',' << format_double(r.lhs_log) << ','
          << format_double(r.rhs_log) << ',' << format_double(r.rel_gap) << ',' << to_string(r.status_lhs)
          << ',' << to_string(r.status_rhs) << ',' << format_double(r.corr_gap) << '\n';
    err << "verify: models=" << zoo.size() << " records=" << sum.records.size()
        << " converged=" << sum.converged << " max_rel_gap=" << format_double(sum.max_rel_gap)
        << " status_disagreements=" << sum.status_disagreements << " gap_violations=" << sum.gap_violations
        << (sum.ok() ? " ok" : " FAILED") << "\n";
    return sum.ok() ? kExitOk : kExitVerification;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string spec, out;
    int paths = 1;
    std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream&) {
    const ProcessSpec process = load_spec_file(a.spec);
    if (a.paths < 1) throw ParseError("--paths: must be positive");
    Sink sink(a.out, out);
    std::ostream& o = *sink;
    o << "path";
    for (int n = 1; n <= process.steps(); ++n)
        for (int i = 1; i <= process.dim(n); ++i) o << ",x" << n << '_' << i;
    o << '\n';
    for (int j = 0; j < a.paths; ++j) {
        const SamplePath p = simulate_path(process, split_seed(a.seed, static_cast<std::uint64_t>(j)));
        o << j + 1 << ',' << join(process.flatten(p), ",") << '\n';
    }
    return kExitOk;
}

// --- fit -------------------------------------------------------------------

struct FitArgs {
    std::string series, out, trace, family = "poisson";
    int order = 1;
};

std::vector<double> read_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    std::vector<double> out;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        line.erase(0, line.find_first_not_of(" \t\r"));
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (line.empty()) continue;
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(line, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != line.size() || v < 0)
            throw ParseError(path + ": row " + std::to_string(row) + ": '" + line +
                             "' is not a nonnegative integer");
        out.push_back(static_cast<double>(v));
    }
    return out;
}

std::vector<std::string> innovation_param_names(const std::string& family) {
    if (family == "poisson") return {"rate"};
    if (family == "geometric") return {"p"};
    return {"r", "p"};
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
    const std::vector<double> series = read_series(a.series);
    innovation_param_count(a.family);
    if (a.order < 0) throw ParseError("--order: must be nonnegative");
    if (static_cast<int>(series.size()) <= a.order)
        throw ParseError(a.series + ": series must be longer than the order");
    FitOptions opts;
    opts.order = a.order;
    opts.family = a.family;
    const FitResult fit = fit_inar(series, opts);
    const auto names = innovation_param_names(a.family);

    double joint = NAN;
    if (std::isfinite(fit.loglik))
        joint = inar_loglik_joint(series, fit.alphas, innovation_cgf(a.family, fit.innovation_params));

    Sink sink(a.out, out);
    std::ostream& o = *sink;
    o << "quantity,value\n";
    o << "order," << a.order << "\n";
    o << "family," << a.family << "\n";
    for (std::size_t j = 0; j < fit.alphas.size(); ++j)
        o << "alpha" << j + 1 << ',' << format_double(fit.alphas[j]) << "\n";
    for (std::size_t j = 0; j < fit.innovation_params.size(); ++j)
        o << "innovation." << names[j] << ',' << format_double(fit.innovation_params[j]) << "\n";
    o << "loglik," << format_double(fit.loglik) << "\n";
    o << "loglik_joint," << format_double(joint) << "\n";
    o << "objective_gap," << format_double(std::abs(fit.loglik - joint)) << "\n";
    o << "converged," << (fit.converged ? "true" : "false") << "\n";
    o << "iterations," << fit.iterations << "\n";
    o << "at_boundary," << (fit.at_boundary ? "true" : "false") << "\n";
    o << "flat_trace," << (fit.flat_trace ? "true" : "false") << "\n";
    for (const auto& d : fit.diagnostics) o << "diagnostic," << d << "\n";

    if (!a.trace.empty()) {
        std::ofstream t(a.trace, std::ios::binary);
        if (!t) throw ParseError("--trace: cannot open '" + a.trace + "' for writing");
        t << "iteration,loglik";
        for (std::size_t j = 0; j < fit.alphas.size(); ++j) t << ",alpha" << j + 1;
        for (const auto& n : names) t << ",innovation." << n;
        t << ",simplex_size\n";
        for (const auto& e : fit.trace) {
            t << e.iteration << ',' << format_double(e.loglik);
            for (double v : e.params) t << ',' << format_double(v);
            t << ',' << format_double(e.simplex_size) << '\n';
        }
    }
    if (!fit.converged || !std::isfinite(fit.loglik)) {
        err << "fit: optimizer failed";
        for (const auto& d : fit.diagnostics) err << "; " << d;
        err << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}

// --- tilt-report -----------------------------------------------------------

struct TiltArgs {
    std::string spec, tilt, path, out;
    double tol = 1e-10;
};

int cmd_tilt(const TiltArgs& a, std::ostream& out, std::ostream& err) {
    const ProcessSpec process = load_spec_file(a.spec);
    if (a.tilt.empty() == a.path.empty()) throw ParseError("tilt-report: give exactly one of --tilt or --path");
    Vector s;
    if (!a.tilt.empty()) {
        const auto v = parse_numbers(a.tilt, "--tilt");
        if (static_cast<int>(v.size()) != process.total_dim())
            throw ParseError("--tilt: expected " + std::to_string(process.total_dim()) + " values");
        s = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else {
        const SaddlepointResult r = spa_joint(process, path_from_text(process, a.path));
        if (!r.converged()) {
            err << "tilt-report: no joint saddlepoint (" << to_string(r.status) << ")\n";
            return kExitNumerical;
        }
        s = r.shat;
    }
    const TiltedProcessReport rep = tilt_process(process, s);

    Sink sink(a.out, out);
    std::ostream& o = *sink;
    o << "quantity,value\n";
    o << "model," << process.name() << "\n";
    o << "tilt," << join(s) << "\n";
    o << "tau0," << join(rep.tau[0]) << "\n";
    for (int n = 1; n <= process.steps(); ++n) {
        const auto k = "step" + std::to_string(n);
        const auto i = static_cast<std::size_t>(n);
        o << k << ".tau," << join(rep.tau[i]) << "\n";
        o << k << ".innovation_mean," << join(rep.innovations[i - 1].mean) << "\n";
        o << k << ".innovation_relent," << format_double(rep.innovations[i - 1].relent) << "\n";
        o << k << ".tilted_mean," << join(rep.tilted_means[i]) << "\n";
        o << k << ".relent," << format_double(rep.step_relents[i - 1]) << "\n";
    }
    o << "relent_x0," << format_double(rep.relent_x0) << "\n";
    o << "total_relent_joint," << format_double(rep.total_relent_joint) << "\n";
    o << "total_relent_decomposed," << format_double(rep.total_relent_decomposed) << "\n";
    o << "decomposition_gap," << format_double(rep.decomposition_gap) << "\n";
    o << "mean_gap," << format_double(rep.mean_gap) << "\n";
    o << "probe_gap," << format_double(rep.probe_gap) << "\n";
    o << "probes," << rep.probes_used << "\n";

    double mean_scale = 1.0;
    for (const Vector& m : rep.tilted_means) mean_scale = std::max(mean_scale, 1.0 + m.cwiseAbs().maxCoeff());
    const bool ok = rep.decomposition_gap <= a.tol * (1.0 + std::abs(rep.total_relent_joint)) &&
                    rep.probe_gap <= a.tol && rep.mean_gap <= a.tol * mean_scale;
    if (!ok) {
        err << "tilt-report: tilted process disagrees with the tilted joint CGF beyond tolerance\n";
        return kExitVerification;
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Saddlepoint approximations for recursively compounded processes", "rcspa"};
    app.require_subcommand(1);

    SpaArgs spa;
    auto* c_spa = app.add_subcommand("spa", "joint and stepwise SPA of one path");
    c_spa->add_option("--spec", spa.spec, "process spec file")->required();
    c_spa->add_option("--path", spa.path, "x_1..x_N flattened in block order")->required();
    c_spa->add_option("--tol", spa.tol, "relative gap tolerance");
    c_spa->add_option("--out", spa.out, "report file (default stdout)");
    c_spa->add_flag("--strict-domains", spa.strict, "reject path values that violate coordinate tags");

    VerifyArgs ver;
    auto* c_ver = app.add_subcommand("verify", "check the factorization over a set of models");
    c_ver->add_flag("--builtin-zoo", ver.builtin, "use the builtin models");
    c_ver->add_option("--spec", ver.specs, "process spec file (repeatable)");
    c_ver->add_option("--spec-dir", ver.spec_dir, "directory of .json specs");
    c_ver->add_option("--paths", ver.paths, "paths per model");
    c_ver->add_option("--seed", ver.seed, "master seed")->required();
    c_ver->add_option("--tol", ver.tol, "relative gap tolerance");
    c_ver->add_option("--out", ver.out, "CSV file (default stdout)");
    c_ver->add_flag("--inject-hessian-bug", ver.inject, "test hook: perturb the joint Hessian");

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "draw sample paths");
    c_sim->add_option("--spec", sim.spec, "process spec file")->required();
    c_sim->add_option("--paths", sim.paths, "number of paths");
    c_sim->add_option("--seed", sim.seed, "master seed")->required();
    c_sim->add_option("--out", sim.out, "CSV file (default stdout)");

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "fit an INAR(p) model by the SPA likelihood");
    c_fit->add_option("--series", fit.series, "one nonnegative integer per row")->required();
    c_fit->add_option("--order", fit.order, "autoregressive order p");
    c_fit->add_option("--family", fit.family, "poisson, geometric or negative-binomial");
    c_fit->add_option("--trace", fit.trace, "iteration trace CSV");
    c_fit->add_option("--out", fit.out, "report file (default stdout)");

    TiltArgs tilt;
    auto* c_tilt = app.add_subcommand("tilt-report", "tilt a process and check the entropy decomposition");
    c_tilt->add_option("--spec", tilt.spec, "process spec file")->required();
    c_tilt->add_option("--tilt", tilt.tilt, "joint tilt s_1..s_N");
    c_tilt->add_option("--path", tilt.path, "tilt at the joint saddlepoint of this path");
    c_tilt->add_option("--tol", tilt.tol, "tolerance");
    c_tilt->add_option("--out", tilt.out, "report file (default stdout)");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (c_spa->parsed()) return cmd_spa(spa, out, err);
        if (c_ver->parsed()) return cmd_verify(ver, out, err);
        if (c_sim->parsed()) return cmd_simulate(sim, out, err);
        if (c_fit->parsed()) return cmd_fit(fit, out, err);
        if (c_tilt->parsed()) return cmd_tilt(tilt, out, err);
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const InvalidParameter& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const DimensionMismatch& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const UnsupportedKind& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitInput;
}

}  // namespace rcspa
