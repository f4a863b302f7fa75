#pragma once

#include "rcspa/cgf.hpp"

#include <string>
#include <vector>

namespace rcspa {

/// Value range of one process coordinate; decides which contribution kinds
/// may read from it.
enum class ValueType { Integer, NonnegativeReal, Real };

/// How a step consumes an earlier coordinate x_{m,i}:
///   IidSum  sum of x_{m,i} iid copies of the unit (x integer >= 0)
///   Levy    Levy process with unit-time law `unit` run for time x (x >= 0)
///   Linear  c * x, with `unit` the constant c
enum class ContributionKind { IidSum, Levy, Linear };

std::string to_string(ValueType t);
std::string to_string(ContributionKind k);
ValueType value_type_from_string(const std::string& s);
ContributionKind contribution_kind_from_string(const std::string& s);

struct Contribution {
    int source_step = 0;   ///< m, in 0..n-1
    int source_coord = 0;  ///< i, zero-based coordinate of X_m
    ContributionKind kind = ContributionKind::IidSum;
    CgfExpr unit;          ///< CGF of Z_{n,m,i}(1), tilt dimension d_n
};

struct StepSpec {
    int dim = 1;
    CgfExpr innovation;
    std::vector<Contribution> contributions;
    std::vector<ValueType> types;  ///< value type of each coordinate of X_n
};

/// Observed values x_1..x_N (x_0 lives in the ProcessSpec).
using SamplePath = std::vector<Vector>;

/**
 * A recursively compounded process X_0, ..., X_N conditioned on X_0 = x0:
 * X_n given the past is xi_n plus, for every declared contribution, the
 * compound/Levy/linear term driven by an earlier coordinate.
 *
 * Steps are indexed 1..N as in the model; step 0 is the initial state.
 * Joint tilt vectors concatenate the blocks s_1..s_N (length total_dim()).
 */
class ProcessSpec {
public:
    ProcessSpec(Vector x0, std::vector<ValueType> x0_types, std::vector<StepSpec> steps,
                std::string name = {});

    const std::string& name() const noexcept { return name_; }
    int steps() const noexcept { return static_cast<int>(steps_.size()); }
    /// d_n for n = 0..N.
    int dim(int n) const;
    /// D = d_1 + ... + d_N.
    int total_dim() const noexcept { return total_dim_; }
    /// Position of block n (n >= 1) inside a joint vector.
    int offset(int n) const;
    const Vector& x0() const noexcept { return x0_; }
    const std::vector<ValueType>& types(int n) const;
    const StepSpec& step(int n) const;

    /// Units feeding step n from step m, one entry per source coordinate (empty
    /// CgfExpr where nothing is declared). Overlapping declarations are summed.
    const std::vector<CgfExpr>& units(int n, int m) const;
    /// True when step n declares any contribution from step m.
    bool depends_on(int n, int m) const;

    Vector flatten(const SamplePath& path) const;
    SamplePath unflatten(const Vector& joint) const;
    /// Throws DimensionMismatch unless the path has N blocks of the right sizes.
    void check_path(const SamplePath& path) const;

private:
    std::string name_;
    Vector x0_;
    std::vector<ValueType> x0_types_;
    std::vector<StepSpec> steps_;
    std::vector<int> offsets_;
    int total_dim_ = 0;
    // grouped_[n-1][m][i]
    std::vector<std::vector<std::vector<CgfExpr>>> grouped_;
    std::vector<std::vector<char>> depends_;
};

/// g_{n,m}(s_n): entry i is K_{Z_{n,m,i}(1)}(s_n), zero where undeclared.
Vector g_map(const ProcessSpec& process, int n, int m, const Vector& s_n);
std::vector<TaylorScalar> g_map(const ProcessSpec& process, int n, int m,
                                std::span<const TaylorScalar> s_n);

struct StepCgfOptions {
    /// Reject multipliers that violate the contribution kind (negative, or
    /// non-integer for iid sums). Off by default: the affine formula is used
    /// verbatim for any real history.
    bool strict = false;
};

/// CGF of Q_n(x_0..x_{n-1}); `history` holds x_0..x_{n-1}.
CgfExpr step_cgf(const ProcessSpec& process, int n, std::span<const Vector> history,
                 StepCgfOptions options = {});
/// Same, taking the history from x0 and the first n-1 blocks of `path`.
CgfExpr step_cgf_on_path(const ProcessSpec& process, int n, const SamplePath& path,
                 StepCgfOptions options = {});

/// tau_0..tau_N as blocks (tau_0 of length d0); `s` is the joint tilt (s_1..s_N).
/// The initial block s_0 defaults to zero.
std::vector<Vector> tau_map(const ProcessSpec& process, const Vector& s);
std::vector<Vector> tau_map(const ProcessSpec& process, const Vector& s0, const Vector& s);

/// T(s) = (tau_1 .. tau_N) as one joint vector.
Vector T_map(const ProcessSpec& process, const Vector& s);

/// tau blocks as jets in the joint tilt variables.
std::vector<std::vector<TaylorScalar>> tau_map_jets(const ProcessSpec& process, const Vector& s);

/// T'(s) with rows indexed by s and columns by tau; unit lower block-triangular.
Matrix T_jacobian(const ProcessSpec& process, const Vector& s);

/// Conditional joint CGF of X_1..X_N given X_0 = x0, with exact gradient and Hessian.
TaylorScalar joint_cgf(const ProcessSpec& process, const Vector& s);

/// sum_n K_{Q_n(history from path)}(s_n); block-diagonal Hessian.
TaylorScalar product_cgf(const ProcessSpec& process, const SamplePath& path, const Vector& s);

/// G(tau): block m is sum_{n>m} g_{n,m}(tau_n); block N is zero.
Vector G_map(const ProcessSpec& process, const Vector& tau);
/// T^{-1}(tau) = tau - G(tau).
Vector T_inverse(const ProcessSpec& process, const Vector& tau);

}  // namespace rcspa
