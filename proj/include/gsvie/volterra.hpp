#pragma once

// Stochastic Volterra integral equations driven by G-Brownian motion,
//
//   X(t) = phi(t) + int_0^t b(t,s,X(s)) ds + int_0^t h(t,s,X(s)) d<B>_s + int_0^t sigma(t,s,X(s)) dB_s,
//
// discretized with left-endpoint (explicit) sums on a ScenarioPath.

#include "gsvie/expectation.hpp"
#include "gsvie/scenario.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsvie {

/// Coefficient evaluator on the simplex {0 <= s <= t <= T} x R. An empty Kernel is the zero coefficient.
using Kernel = std::function<double(double t, double s, double x)>;

/// Modulus of continuity rho of the t-increments; continuous, strictly increasing, rho(0) = 0.
struct Modulus {
    std::string name;
    std::function<double(double)> rho;

    static Modulus linear(double slope);
};

/// Constants (C_T, alpha) of the Hoelder condition on sigma's t-increments.
struct HolderConstants {
    double C_T = 0.0;
    double alpha = 0.0;
};

struct CoefficientSet {
    std::string name;
    Kernel b;
    Kernel h;
    Kernel sigma;
    double L = 0.0;  // Lipschitz / linear-growth constant
    Modulus rho;
    std::optional<HolderConstants> holder;
};

enum class Regularity { deterministic, mean_square_continuous, continuous_paths };

struct ForcingProcess {
    std::string name;
    std::function<double(double t, const ScenarioPath& path)> phi;
    Regularity regularity = Regularity::deterministic;

    static ForcingProcess constant(double value);
};

/// phi evaluated at every grid node of the path.
Eigen::VectorXd sample_forcing(const ForcingProcess& phi, const ScenarioPath& path);

enum class SolveMethod { direct, picard, separable, quasilinearized, frozen };
std::string to_string(SolveMethod m);

struct SolutionPath {
    Eigen::VectorXd values;  // X(t_0) .. X(t_N)
    std::uint64_t scenario_id = 0;
    SolveMethod method = SolveMethod::direct;
};

/// |X_i| above this (or non-finite) aborts the solve with NumericalBlowup.
inline constexpr double kBlowupThreshold = 1e12;

/// X_i = phi(t_i) + sum_{j<i} [b(t_i,t_j,X_j) dt_j + h(t_i,t_j,X_j) dQV_j + sigma(t_i,t_j,X_j) dB_j].
/// O(N^2) evaluations: the kernels depend on t_i, so the memory is re-summed for every i.
SolutionPath solve_direct(const CoefficientSet& coeffs, const ForcingProcess& phi, const ScenarioPath& path);

/// One application of the solution map with the input frozen: output_i only reads x_j, j < i.
SolutionPath apply_lambda(const CoefficientSet& coeffs, const ForcingProcess& phi, const ScenarioPath& path,
                          const SolutionPath& x);

/// Contraction rate 6 (T + sigma_hi^4 T + sigma_hi^2) L^2 of the weighted norm.
template <typename Scalar>
Scalar beta_default(const VolatilityBand& band, const Scalar& L, const Scalar& T) {
    const Scalar s2 = Scalar(band.sigma_hi * band.sigma_hi);
    return Scalar(6) * (T + s2 * s2 * T + s2) * L * L;
}

enum class InitialGuess { zero, phi };

/// When the Picard loop stops.
///  - weighted: sum_i e^{-beta t_i} |X^{k+1}_i - X^k_i|^2 dt_i < tol^2.
///  - node_sup: max_i |X^{k+1}_i - X^k_i| < tol (the weighted distance is still recorded).
enum class StoppingRule { weighted, node_sup };

struct PicardConfig {
    double beta = 0.0;
    double tol = 1e-10;
    int max_iter = 100;
    InitialGuess initial_guess = InitialGuess::phi;
    StoppingRule stopping = StoppingRule::node_sup;

    void validate() const;
};

struct PicardResult {
    SolutionPath solution;
    int iterations = 0;
    std::vector<double> distances;  // weighted distance sqrt(sum e^{-beta t} |dX|^2 dt) per iteration
};

/// Iterates X^{k+1} = Lambda(X^k). Throws NonConvergence (with the distance history) at max_iter.
PicardResult solve_picard(const CoefficientSet& coeffs, const ForcingProcess& phi, const ScenarioPath& path,
                          const PicardConfig& cfg);

/// sigma(s, x) of a separable diffusion H(t) sigma(s, x).
using DiffusionFn = std::function<double(double s, double x)>;
/// H(t, scenario).
using ScaleProcess = std::function<double(double t, const ScenarioPath& path)>;

/// X(t) = phi(t) + int b ds + int h d<B> + H(t) int_0^t sigma(s, X(s)) dB_s.
struct SeparableEquation {
    Kernel b;
    Kernel h;
    DiffusionFn sigma;
    ScaleProcess H;
};

/// Direct recursion; the stochastic sum factors out of t and is updated in O(1) per node,
/// the drift memory is still re-summed (O(N^2)). With H = 1 the result is bitwise identical
/// to solve_direct with sigma(t, s, x) := sigma(s, x).
SolutionPath solve_separable(const SeparableEquation& eq, const ForcingProcess& phi, const ScenarioPath& path);

/// H evaluated at every grid node of the path.
Eigen::VectorXd sample_scale(const ScaleProcess& H, const ScenarioPath& path);

/// Gronwall-type a priori bound F(t) + C2 int_0^t F(r) e^{C2 (t - r)} dr with F = C1 * f.
struct AprioriBound {
    double C1 = 1.0;
    double C2 = 1.0;
    std::function<double(double)> f;
};

/// Composite trapezoid in u = t - r with a fixed number of panels (error O((t / panels)^2)).
/// For f >= 0 nondecreasing the result is nondecreasing in t.
double apriori_bound(const AprioriBound& bound, double t, Index panels = 1024);

/// Groups solution paths under one control label for ensemble diagnostics.
PathGroup make_group(std::string label, std::span<const SolutionPath> solutions);

struct LagEntry {
    Index lag = 0;
    double lag_time = 0.0;
    double value = 0.0;  // sup over t of the E^-estimate of |X(t + lag) - X(t)|^2
    double se = 0.0;
    Index at_node = 0;
};

struct ContinuityTable {
    std::vector<LagEntry> entries;
    bool monotone_in_lag = true;
};

/// Mean-square continuity diagnostic on a uniform grid; lags are in steps.
ContinuityTable mean_square_continuity_diagnostic(const Ensemble& ensemble, const TimeGrid& grid,
                                                  std::span<const Index> lags);

struct HolderStat {
    double alpha = 0.0;
    double max_quotient = 0.0;    // max over paths and node pairs of |X(t)-X(s)| / |t-s|^alpha
    double mean_path_max = 0.0;   // average over paths of the per-path maximum
};

std::vector<HolderStat> holder_diagnostic(const Ensemble& ensemble, const TimeGrid& grid,
                                          std::span<const double> alphas);

}  // namespace gsvie
