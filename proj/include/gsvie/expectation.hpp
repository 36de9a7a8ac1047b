#pragma once

// Sublinear expectation E^[xi] = sup_P E_P[xi], approximated by a max of Monte Carlo
// means over a declared, finite family of volatility controls, plus an exact
// backward-recursion lattice under +-1 noise for small grids.

#include "gsvie/scenario.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gsvie {

struct Functional {
    std::string name;
    std::function<double(const ScenarioPath&)> evaluate;
};

struct ControlMean {
    std::string label;
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

/// value is always the max of per_control[i].mean; it is never a claimed true supremum.
struct RobustEstimate {
    std::string functional;
    std::vector<ControlMean> per_control;
    double value = 0.0;
    std::size_t scenarios_per_control = 0;
    std::uint64_t seed = 0;

    /// Entry attaining the max.
    const ControlMean& argmax() const;
    /// Standard error of the attaining control.
    double se() const { return argmax().se; }
};

/// Sample mean and standard error (sample standard deviation / sqrt(n)); se is NaN for n = 1.
ControlMean summarize(std::string label, std::span<const double> samples);

struct LabelledSamples {
    std::string label;
    std::vector<double> samples;
};

RobustEstimate robust_from_samples(std::string functional, std::span<const LabelledSamples> groups,
                                   std::uint64_t seed = 0);

struct SweepOptions {
    NoiseKind noise = NoiseKind::gaussian;
    unsigned threads = 1;
};

/// Scenario ids are c * scenarios_per_control + s for control c, scenario s.
std::uint64_t scenario_id(std::size_t control_index, std::size_t scenario, std::size_t scenarios_per_control);

RobustEstimate estimate_upper_expectation(const Functional& f, const TimeGrid& grid,
                                          std::span<const VolatilityControl> controls,
                                          std::size_t scenarios_per_control, std::uint64_t seed,
                                          const SweepOptions& options = {});

/// Hard cap on N for full-path enumeration (4^N leaves).
inline constexpr Index kFullPathCap = 12;

/// Exact discrete G-expectation of f(B_T) under +-1 noise:
/// V_N = f, V_k(x) = max_{sigma in {lo, hi}} (V_{k+1}(x + sigma sqrt(dt)) + V_{k+1}(x - sigma sqrt(dt))) / 2.
/// Uses a recombining integer lattice when sigma_lo / sigma_hi is a ratio of small integers on a
/// uniform grid, otherwise the full tree (N <= kFullPathCap).
double lattice_expectation(const std::function<double(double)>& payoff, const TimeGrid& grid,
                           const VolatilityBand& band);

/// Path functional of (B(t_0..t_N), QV(t_0..t_N)).
using PathPayoff = std::function<double(const Eigen::VectorXd& B, const Eigen::VectorXd& QV)>;

/// Exact discrete G-expectation of a path functional with adapted control choice at every
/// node; enumerates 2^N noise x 2^N control paths. Throws SizeLimitError for N > kFullPathCap.
double lattice_expectation_path(const PathPayoff& payoff, const TimeGrid& grid, const VolatilityBand& band);

/// Sum_{i<N} e^{-beta t_i} |x_i|^2 dt_i for one path on the grid.
double weighted_sq_norm(const Eigen::VectorXd& x, const TimeGrid& grid, double beta);

struct WeightedNormConfig {
    double beta = 0.0;
    TimeGrid grid;
};

struct PathGroup {
    std::string label;
    std::vector<Eigen::VectorXd> paths;
};
using Ensemble = std::vector<PathGroup>;

/// E^-estimate of the discrete weighted norm over an ensemble grouped by control.
RobustEstimate weighted_norm(const Ensemble& ensemble, const WeightedNormConfig& cfg);

}  // namespace gsvie
