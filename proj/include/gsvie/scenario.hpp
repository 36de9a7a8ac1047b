#pragma once

// Discrete G-Brownian scenarios: increments of B and of its quadratic variation
// under explicit piecewise-constant volatility controls.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gsvie {

using Index = Eigen::Index;

/// Uncertainty interval [sigma_lo, sigma_hi] of the volatility; defines G.
struct VolatilityBand {
    double sigma_lo = 1.0;
    double sigma_hi = 1.0;

    /// Throws InvalidArgument unless 0 < lo <= hi < inf.
    static VolatilityBand make(double lo, double hi);
    void validate() const;
    bool degenerate() const noexcept { return sigma_lo == sigma_hi; }
    bool contains(double sigma) const noexcept { return sigma >= sigma_lo && sigma <= sigma_hi; }
};

/// G(a) = 1/2 (sigma_hi^2 a^+ - sigma_lo^2 a^-).
template <typename Scalar>
Scalar g_function(const Scalar& a, const VolatilityBand& band) {
    const Scalar pos = a > Scalar(0) ? a : Scalar(0);
    const Scalar neg = a < Scalar(0) ? -a : Scalar(0);
    return Scalar(0.5) * (Scalar(band.sigma_hi * band.sigma_hi) * pos - Scalar(band.sigma_lo * band.sigma_lo) * neg);
}

/// Time nodes 0 = t_0 < ... < t_N = T.
class TimeGrid {
public:
    TimeGrid() = default;

    static TimeGrid uniform(double horizon, Index steps);
    static TimeGrid from_nodes(Eigen::VectorXd nodes);

    Index steps() const noexcept { return nodes_.size() - 1; }
    double horizon() const noexcept { return nodes_[steps()]; }
    double t(Index i) const noexcept { return nodes_[i]; }
    double dt(Index k) const noexcept { return nodes_[k + 1] - nodes_[k]; }
    const Eigen::VectorXd& nodes() const noexcept { return nodes_; }
    Eigen::VectorXd increments() const { return nodes_.tail(steps()) - nodes_.head(steps()); }
    bool is_uniform() const noexcept { return uniform_; }
    /// Largest step.
    double max_dt() const;
    /// Index of the first node with t_i >= t - eps (N if none).
    Index first_node_at_or_after(double t) const;

    /// Keeps every factor-th node; requires steps() % factor == 0.
    TimeGrid coarsen(Index factor) const;

private:
    Eigen::VectorXd nodes_;
    bool uniform_ = false;
};

namespace strategy {
struct ConstantLo {};
struct ConstantHi {};
struct UniformRandom {};
/// Alternates between levels at the given switch times, starting at `start_high ? hi : lo`.
struct BangBang {
    std::vector<double> switch_times;
    bool start_high = false;
};
}  // namespace strategy

using ControlStrategy =
    std::variant<strategy::ConstantLo, strategy::ConstantHi, strategy::UniformRandom, strategy::BangBang>;

std::string strategy_name(const ControlStrategy& s);

/// One volatility value per step; stands in for a single measure of the representing family.
struct VolatilityControl {
    Eigen::VectorXd values;
    std::string label;
};

VolatilityControl make_control(const TimeGrid& grid, const VolatilityBand& band, const ControlStrategy& strategy,
                               std::uint64_t seed);

/// Checks every value lies in the band; throws InvalidArgument otherwise.
void validate_control(const VolatilityControl& control, const VolatilityBand& band);

enum class NoiseKind { gaussian, rademacher };

std::string to_string(NoiseKind n);
NoiseKind noise_from_string(const std::string& s);

/// One joint path of (B, <B>) on a grid.
struct ScenarioPath {
    TimeGrid grid;
    VolatilityControl control;
    Eigen::VectorXd dB;   // size N
    Eigen::VectorXd dQV;  // size N, equals sigma_k^2 dt_k
    Eigen::VectorXd B;    // size N+1, B(t_0) = 0
    Eigen::VectorXd QV;   // size N+1, QV(t_0) = 0
    std::uint64_t seed = 0;
    std::uint64_t scenario_id = 0;

    Index steps() const noexcept { return dB.size(); }
};

/// dB_k = sigma_k sqrt(dt_k) zeta_k. zeta is keyed by (seed, scenario_id, k) so the same
/// scenario_id under different controls shares its noise.
ScenarioPath generate_scenario(const TimeGrid& grid, const VolatilityControl& control, NoiseKind noise,
                               std::uint64_t seed, std::uint64_t scenario_id = 0);

/// Aggregates increments over blocks of `factor` steps; the coarse path sees the same
/// Brownian values at the retained nodes. Requires a control constant on each block.
ScenarioPath coarsen(const ScenarioPath& path, Index factor);

enum class Integrator { dB, dQV, dt };

/// Left-endpoint sum sum_k eta_k dI_k.
double stochastic_integral(const ScenarioPath& path, std::span<const double> integrand,
                           Integrator integrator = Integrator::dB);
double stochastic_integral(const ScenarioPath& path, const Eigen::VectorXd& integrand,
                           Integrator integrator = Integrator::dB);

/// Long-format CSV: scenario_id,step,t,sigma,dB,dQV,B,QV.
void write_scenarios_csv(std::ostream& os, std::span<const ScenarioPath> paths);

}  // namespace gsvie
