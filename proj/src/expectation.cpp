#include "gsvie/expectation.hpp"

#include "gsvie/errors.hpp"
#include "gsvie/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace gsvie {

const ControlMean& RobustEstimate::argmax() const {
    if (per_control.empty()) throw InvalidArgument("empty robust estimate");
    return *std::max_element(per_control.begin(), per_control.end(),
                             [](const ControlMean& a, const ControlMean& b) { return a.mean < b.mean; });
}

ControlMean summarize(std::string label, std::span<const double> samples) {
    if (samples.empty()) throw InvalidArgument("summarize: no samples");
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    if (samples.size() == 1) return ControlMean{std::move(label), mean, std::nan(""), 1};
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    const double var = ss / (n - 1.0);
    return ControlMean{std::move(label), mean, std::sqrt(var / n), samples.size()};
}

RobustEstimate robust_from_samples(std::string functional, std::span<const LabelledSamples> groups,
                                   std::uint64_t seed) {
    if (groups.empty()) throw InvalidArgument("robust estimate needs at least one control");
    RobustEstimate est;
    est.functional = std::move(functional);
    est.seed = seed;
    est.scenarios_per_control = groups.front().samples.size();
    for (const auto& g : groups) est.per_control.push_back(summarize(g.label, g.samples));
    est.value = est.argmax().mean;
    return est;
}

std::uint64_t scenario_id(std::size_t control_index, std::size_t scenario, std::size_t scenarios_per_control) {
    return static_cast<std::uint64_t>(control_index) * scenarios_per_control + scenario;
}

RobustEstimate estimate_upper_expectation(const Functional& f, const TimeGrid& grid,
                                          std::span<const VolatilityControl> controls,
                                          std::size_t scenarios_per_control, std::uint64_t seed,
                                          const SweepOptions& options) {
    if (controls.empty()) throw InvalidArgument("estimate_upper_expectation: empty control family");
    if (scenarios_per_control < 2) throw InvalidArgument("estimate_upper_expectation: need >= 2 scenarios");

    std::vector<LabelledSamples> groups(controls.size());
    for (std::size_t c = 0; c < controls.size(); ++c) {
        groups[c].label = controls[c].label;
        groups[c].samples.assign(scenarios_per_control, 0.0);
    }
    const std::size_t total = controls.size() * scenarios_per_control;
    parallel_for(total, options.threads, [&](std::size_t k) {
        const std::size_t c = k / scenarios_per_control;
        const std::size_t s = k % scenarios_per_control;
        const auto id = scenario_id(c, s, scenarios_per_control);
        const ScenarioPath path = generate_scenario(grid, controls[c], options.noise, seed, id);
        try {
            groups[c].samples[s] = f.evaluate(path);
        } catch (const NumericalBlowup&) {
            throw;
        } catch (const std::exception& e) {
            throw ScenarioFailure(id, controls[c].label, e.what());
        }
    });
    return robust_from_samples(f.name, groups, seed);
}

namespace {

struct Rational {
    long p;
    long q;
};

// sigma_lo / sigma_hi as p/q with q <= max_q, if it is one to 1e-12 relative accuracy.
std::optional<Rational> small_ratio(double ratio, long max_q) {
    for (long q = 1; q <= max_q; ++q) {
        const double p = std::round(ratio * static_cast<double>(q));
        if (p >= 1.0 && std::abs(p / static_cast<double>(q) - ratio) <= 1e-12 * ratio)
            return Rational{static_cast<long>(p), q};
    }
    return std::nullopt;
}

double terminal_tree(const std::function<double(double)>& payoff, const TimeGrid& grid, const VolatilityBand& band,
                     Index k, double x) {
    if (k == grid.steps()) return payoff(x);
    const double h = std::sqrt(grid.dt(k));
    auto branch = [&](double sigma) {
        return 0.5 * (terminal_tree(payoff, grid, band, k + 1, x + sigma * h) +
                      terminal_tree(payoff, grid, band, k + 1, x - sigma * h));
    };
    if (band.degenerate()) return branch(band.sigma_hi);
    return std::max(branch(band.sigma_lo), branch(band.sigma_hi));
}

}  // namespace

double lattice_expectation(const std::function<double(double)>& payoff, const TimeGrid& grid,
                           const VolatilityBand& band) {
    band.validate();
    const Index n = grid.steps();
    constexpr long kMaxDenominator = 1000;
    const auto ratio = grid.is_uniform() ? small_ratio(band.sigma_lo / band.sigma_hi, kMaxDenominator) : std::nullopt;
    if (!ratio) {
        if (n > kFullPathCap)
            throw SizeLimitError("lattice_expectation: no recombining lattice for this band/grid and N = " +
                                 std::to_string(n) + " exceeds the tree cap " + std::to_string(kFullPathCap));
        return terminal_tree(payoff, grid, band, 0, 0.0);
    }

    // State m represents x = m * unit, unit = (sigma_hi / q) sqrt(dt); steps are +-p (lo) or +-q (hi).
    const long p = ratio->p;
    const long q = ratio->q;
    if (static_cast<double>(q) * static_cast<double>(n) * static_cast<double>(n) > 2e9)
        throw SizeLimitError("lattice_expectation: lattice too large");
    const double unit = band.sigma_hi / static_cast<double>(q) * std::sqrt(grid.dt(0));
    const long width = q * static_cast<long>(n);
    Eigen::VectorXd next(2 * width + 1);
    for (long m = -width; m <= width; ++m) next[m + width] = payoff(static_cast<double>(m) * unit);
    Eigen::VectorXd cur(2 * width + 1);
    for (Index k = n - 1; k >= 0; --k) {
        const long reach = q * static_cast<long>(k);
        for (long m = -reach; m <= reach; ++m) {
            const long i = m + width;
            const double lo = 0.5 * (next[i + p] + next[i - p]);
            const double hi = 0.5 * (next[i + q] + next[i - q]);
            cur[i] = std::max(lo, hi);
        }
        std::swap(cur, next);
    }
    return next[width];
}

namespace {

struct PathTree {
    const PathPayoff& payoff;
    const TimeGrid& grid;
    const VolatilityBand& band;
    Eigen::VectorXd B;
    Eigen::VectorXd QV;

    double value(Index k) {
        if (k == grid.steps()) return payoff(B, QV);
        const double h = grid.dt(k);
        auto branch = [&](double sigma) {
            QV[k + 1] = QV[k] + sigma * sigma * h;
            B[k + 1] = B[k] + sigma * std::sqrt(h);
            const double up = value(k + 1);
            B[k + 1] = B[k] - sigma * std::sqrt(h);
            const double down = value(k + 1);
            return 0.5 * (up + down);
        };
        if (band.degenerate()) return branch(band.sigma_hi);
        const double lo = branch(band.sigma_lo);
        const double hi = branch(band.sigma_hi);
        return std::max(lo, hi);
    }
};

}  // namespace

double lattice_expectation_path(const PathPayoff& payoff, const TimeGrid& grid, const VolatilityBand& band) {
    band.validate();
    const Index n = grid.steps();
    if (n > kFullPathCap)
        throw SizeLimitError("lattice_expectation_path: N = " + std::to_string(n) + " exceeds cap " +
                             std::to_string(kFullPathCap));
    PathTree tree{payoff, grid, band, Eigen::VectorXd::Zero(n + 1), Eigen::VectorXd::Zero(n + 1)};
    return tree.value(0);
}

double weighted_sq_norm(const Eigen::VectorXd& x, const TimeGrid& grid, double beta) {
    const Index n = grid.steps();
    if (x.size() != n + 1) throw InvalidArgument("weighted_sq_norm: path length does not match grid");
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) acc += std::exp(-beta * grid.t(i)) * x[i] * x[i] * grid.dt(i);
    return acc;
}

RobustEstimate weighted_norm(const Ensemble& ensemble, const WeightedNormConfig& cfg) {
    if (ensemble.empty()) throw InvalidArgument("weighted_norm: empty ensemble");
    if (!(cfg.beta >= 0.0)) throw InvalidArgument("weighted_norm: beta must be >= 0");
    std::vector<LabelledSamples> groups;
    for (const auto& g : ensemble) {
        LabelledSamples s{g.label, {}};
        for (const auto& x : g.paths) s.samples.push_back(weighted_sq_norm(x, cfg.grid, cfg.beta));
        groups.push_back(std::move(s));
    }
    return robust_from_samples("weighted_norm", groups);
}

}  // namespace gsvie
