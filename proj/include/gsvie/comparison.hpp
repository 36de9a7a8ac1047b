#pragma once

// Pairs of separable G-SVIEs
//
//   X_i(t) = phi_i(t) + int b_i(t,s,X_i) ds + int h_i(t,s,X_i) d<B> + H(t) int sigma(s,X_i) dB,  i = 1, 2,
//
// their quasilinearized difference, stopping-time freezing and the ordering harness.

#include "gsvie/expectation.hpp"
#include "gsvie/scenario.hpp"
#include "gsvie/volterra.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gsvie {

/// 1 on |y| <= 1/n, 2 - n|y| on 1/n <= |y| <= 2/n, 0 beyond.
template <typename Scalar>
Scalar gamma_n(const Scalar& y, int n) {
    using std::abs;
    const Scalar a = abs(y) * Scalar(n);
    if (a <= Scalar(1)) return Scalar(1);
    if (a <= Scalar(2)) return Scalar(2) - a;
    return Scalar(0);
}

/// (1 - gamma_n(y)) / y: 1/y on |y| >= 2/n, (n|y| - 1)/y in between, 0 on |y| <= 1/n. Bounded by n.
template <typename Scalar>
Scalar truncated_reciprocal(const Scalar& y, int n) {
    using std::abs;
    const Scalar a = abs(y) * Scalar(n);
    if (a <= Scalar(1)) return Scalar(0);
    if (a < Scalar(2)) return (a - Scalar(1)) / y;
    return Scalar(1) / y;
}

struct SeparableSystem {
    std::string name;
    Kernel b1;
    Kernel b2;
    Kernel h1;
    Kernel h2;
    DiffusionFn sigma;
    ScaleProcess H;  // empty means H = 1
    double m = 1.0;
    double M = 1.0;
    double L = 0.0;
    Modulus rho;

    /// Equation i (1 or 2) as a single separable G-SVIE.
    SeparableEquation equation(int i) const;
    /// Exchanges the roles of the two equations.
    SeparableSystem swapped() const;
};

/// A system together with its two forcings.
struct ComparisonFixture {
    SeparableSystem system;
    ForcingProcess phi1;
    ForcingProcess phi2;

    ComparisonFixture swapped() const;
};

struct ComparisonState {
    SolutionPath X1;
    SolutionPath X2;
    Eigen::VectorXd H;
    Eigen::VectorXd invH;
    Eigen::VectorXd Xbar1;
    Eigen::VectorXd Xbar2;
    Eigen::VectorXd Xhat;    // Xbar1 - Xbar2
    Eigen::VectorXd phihat;  // phi1 - phi2
};

/// Solves both equations on the same scenario.
ComparisonState solve_pair(const ComparisonFixture& fx, const ScenarioPath& path);

/// Kernel values K(t_i, t_j); row-major so the memory sums walk contiguous rows.
using KernelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n-independent part of the quasilinearization along (X1, X2). Kernel matrices are indexed
/// (row = t-node, column = s-node) and filled on j <= i; empty h kernels leave the h matrices empty.
struct LinearizationBase {
    KernelMatrix db2;   // b2(t_i, t_j, X1_j) - b2(t_i, t_j, X2_j)
    KernelMatrix dh2;   // h2(t_i, t_j, X1_j) - h2(t_i, t_j, X2_j)
    KernelMatrix bhat;  // b1(t_i, t_j, X1_j) - b2(t_i, t_j, X1_j)
    KernelMatrix hhat;  // h1(t_i, t_j, X1_j) - h2(t_i, t_j, X1_j)
    Eigen::VectorXd dsigma;  // sigma(t_j, X1_j) - sigma(t_j, X2_j)
    Eigen::VectorXd Xhat;
    Eigen::VectorXd H;
    Eigen::VectorXd invH;
    Eigen::VectorXd phihat;

    bool has_h() const noexcept { return dh2.size() > 0; }
};

LinearizationBase linearization_base(const ComparisonFixture& fx, const ComparisonState& state,
                                     const ScenarioPath& path);

/// Coefficients of the n-th linear system and the residuals a^n, c^n, d^n that close the exact decomposition
/// b^n X^_j + a^n = b2(., X1_j) - b2(., X2_j) (likewise for h and sigma).
struct QuasiLinearizedRun {
    int n = 0;
    KernelMatrix bn;
    KernelMatrix hn;
    KernelMatrix an;
    KernelMatrix cn;
    Eigen::VectorXd sigman;
    Eigen::VectorXd dn;
};

QuasiLinearizedRun quasilinearize(const LinearizationBase& base, int n);

/// X^n_i = phihat_i / H_i + (1/H_i) sum_{j<i} [(b^n X^n_j + bhat) dt_j + (h^n X^n_j + hhat) dQV_j]
///         + sum_{j<i} sigma^n_j X^n_j dB_j.
/// With `with_residuals` the sources a^n, c^n, d^n are added; the solution is then X^ up to rounding.
SolutionPath solve_quasilinearized(const LinearizationBase& base, const QuasiLinearizedRun& run,
                                   const ScenarioPath& path, bool with_residuals = false);

enum class StopReason { H_jump, phi_jump, delta_cap, horizon };
enum class StoppingMode { with_phi, H_only };

std::string to_string(StopReason r);
std::string to_string(StoppingMode m);

/// Grid-snapped stopping times tau_0 = 0 < tau_1 < ... < tau_K = T.
struct StoppingGrid {
    double delta = 0.0;
    std::vector<Index> nodes;  // node index of tau_k
    std::vector<double> tau;
    std::vector<StopReason> triggered_by;  // reason for tau_k, k >= 1 (size K)
    std::vector<Index> segment_start;      // per grid node i: node of the tau_k with t_i in [tau_k, tau_{k+1})

    Index segments() const noexcept { return static_cast<Index>(triggered_by.size()); }
};

/// tau_k is the first node q after tau_{k-1} = p with |invH_q - invH_p| >= delta, or (with_phi)
/// |phihat_q - phihat_p| >= delta, or t_q >= t_p + delta, or q = N.
StoppingGrid build_stopping_grid(double delta, const TimeGrid& grid, const Eigen::VectorXd& invH,
                                 const Eigen::VectorXd& phihat, StoppingMode mode = StoppingMode::with_phi);

/// Piecewise constant freeze x^delta_i = x(tau_k) for t_i in [tau_k, tau_{k+1}).
Eigen::VectorXd freeze(const StoppingGrid& sg, const Eigen::VectorXd& x);

/// Kernel freeze K^delta(t_i, t_j) = K(tau_k v t_j, t_j); entries with j > i are left zero.
KernelMatrix freeze_kernel(const StoppingGrid& sg, const KernelMatrix& K);

/// The n-th linear system with phihat, 1/H and the t-argument of b^n, h^n, bhat, hhat frozen on the
/// stopping grid; sigma^n is not frozen. If every node is a stopping time this equals solve_quasilinearized.
SolutionPath solve_frozen(const LinearizationBase& base, const QuasiLinearizedRun& run, const StoppingGrid& sg,
                          const ScenarioPath& path);

struct EnsembleSpec {
    TimeGrid grid;
    VolatilityBand band;
    std::vector<ControlStrategy> controls;
    std::size_t scenarios_per_control = 0;
    std::uint64_t seed = 0;
    SweepOptions options;
};

/// Controls of the ensemble realised on its grid.
std::vector<VolatilityControl> realise_controls(const EnsembleSpec& spec);

struct ConvergenceTable {
    std::vector<int> ns;
    std::vector<RobustEstimate> estimates;  // E^[sup_t |X^ - X^n|^2] per n
    double slope = 0.0;                     // least-squares slope of log estimate vs log n
    double intercept = 0.0;
};

/// Fits log y = intercept + slope log x; NaN slope when a y is not positive.
std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

ConvergenceTable convergence_study_n(const ComparisonFixture& fx, const EnsembleSpec& spec, const std::vector<int>& ns);

struct TwoApproxEntry {
    int n = 0;
    double delta = 0.0;
    RobustEstimate estimate;  // max over controls of sup_t of the control mean of |X^{n,delta}(t) - X^(t)|^2
};

struct TwoApproxTable {
    std::vector<int> ns;
    std::vector<double> deltas;
    std::vector<TwoApproxEntry> entries;  // n-major, then delta

    const TwoApproxEntry& at(int n, double delta) const;
};

TwoApproxTable two_approximation_study(const ComparisonFixture& fx, const EnsembleSpec& spec,
                                       const std::vector<int>& ns, const std::vector<double>& deltas,
                                       StoppingMode mode = StoppingMode::with_phi);

enum class AssumptionStatus { verified_on_samples, violated, not_applicable };
std::string to_string(AssumptionStatus s);

struct Witness {
    std::string detail;  // which coefficient / inequality
    double t_prime = 0.0;
    double t = 0.0;
    double s = 0.0;
    double x = 0.0;
    double y = 0.0;
    std::uint64_t scenario = 0;
    double lhs = 0.0;  // the side that should dominate
    double rhs = 0.0;
};

struct AssumptionCheck {
    std::string name;
    AssumptionStatus status = AssumptionStatus::not_applicable;
    std::size_t samples = 0;
    std::size_t violations = 0;
    std::optional<Witness> witness;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;  // H2, H3, A1, A2, A3, A4, classical

    const AssumptionCheck& get(const std::string& name) const;
    /// H2, H3 and A1-A4 all verified on samples (the classical condition is informational).
    bool comparison_applicable() const;
};

/// Explicit tuple evaluated by the classical-condition check besides the random draws.
struct Probe {
    double t = 0.0;
    double s = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct SamplingPlan {
    TimeGrid grid;
    VolatilityBand band;
    std::size_t samples = 10000;   // random tuples per assumption
    std::size_t scenarios = 16;    // scenarios for path-dependent H and phi
    double x_range = 10.0;         // x, y drawn from [-x_range, x_range]
    std::uint64_t seed = 0;
    double rel_tol = 1e-12;
    std::vector<Probe> probes;
};

AssumptionReport check_assumptions(const ComparisonFixture& fx, const SamplingPlan& plan);

struct ComparisonWitness {
    std::uint64_t scenario = 0;
    std::string control;
    Index step = 0;
    double t = 0.0;
    double X1 = 0.0;
    double X2 = 0.0;
};

struct ComparisonReport {
    double min_difference = 0.0;  // min over nodes and scenarios of X1 - X2
    double tol = 0.0;
    std::size_t violations = 0;   // node values below -tol
    std::size_t violating_scenarios = 0;
    std::size_t scenarios = 0;
    ComparisonWitness worst;
    std::vector<std::pair<std::string, double>> per_control_min;
};

/// X1 - X2 on one scenario.
Eigen::VectorXd difference_path(const ComparisonFixture& fx, const ScenarioPath& path);

ComparisonReport comparison_harness(const ComparisonFixture& fx, const EnsembleSpec& spec, double tol);

/// Discretisation budget 10 sqrt(dt) max(1, sup|phi1|, sup|phi2|) with the forcings sampled on one scenario.
double comparison_tolerance(const ComparisonFixture& fx, const TimeGrid& grid, const VolatilityBand& band,
                            double factor = 10.0);

}  // namespace gsvie
