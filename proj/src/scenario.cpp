#include "gsvie/scenario.hpp"

#include "gsvie/errors.hpp"
#include "gsvie/format.hpp"
#include "gsvie/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace gsvie {

namespace {
// Stream ids inside one seed; keep control draws and noise draws disjoint.
constexpr std::uint64_t kNoiseStream = 0x6E6F697365ull;    // "noise"
constexpr std::uint64_t kControlStream = 0x63746C7200ull;  // "ctlr"

constexpr double kGridEps = 1e-12;
}  // namespace

VolatilityBand VolatilityBand::make(double lo, double hi) {
    VolatilityBand band{lo, hi};
    band.validate();
    return band;
}

void VolatilityBand::validate() const {
    if (!(sigma_lo > 0.0) || !(sigma_hi >= sigma_lo) || !std::isfinite(sigma_hi)) {
        throw InvalidArgument("volatility band requires 0 < sigma_lo <= sigma_hi < inf, got [" +
                              std::to_string(sigma_lo) + ", " + std::to_string(sigma_hi) + "]");
    }
}

TimeGrid TimeGrid::uniform(double horizon, Index steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("grid horizon must be positive");
    if (steps < 1) throw InvalidArgument("grid needs at least one step");
    TimeGrid g;
    g.nodes_.resize(steps + 1);
    for (Index i = 0; i <= steps; ++i) g.nodes_[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    g.nodes_[steps] = horizon;
    g.uniform_ = true;
    return g;
}

TimeGrid TimeGrid::from_nodes(Eigen::VectorXd nodes) {
    if (nodes.size() < 2) throw InvalidArgument("grid needs at least two nodes");
    if (nodes[0] != 0.0) throw InvalidArgument("grid must start at t_0 = 0");
    for (Index i = 1; i < nodes.size(); ++i) {
        if (!(nodes[i] > nodes[i - 1]) || !std::isfinite(nodes[i]))
            throw InvalidArgument("grid nodes must be finite and strictly increasing (node " + std::to_string(i) + ")");
    }
    TimeGrid g;
    g.nodes_ = std::move(nodes);
    const Index n = g.steps();
    const double h = g.horizon() / static_cast<double>(n);
    g.uniform_ = true;
    for (Index k = 0; k < n; ++k) {
        if (std::abs(g.dt(k) - h) > kGridEps * g.horizon()) {
            g.uniform_ = false;
            break;
        }
    }
    return g;
}

double TimeGrid::max_dt() const { return increments().maxCoeff(); }

Index TimeGrid::first_node_at_or_after(double t) const {
    const double eps = kGridEps * std::max(1.0, horizon());
    const auto* begin = nodes_.data();
    const auto* end = begin + nodes_.size();
    const auto* it = std::lower_bound(begin, end, t - eps);
    return it == end ? steps() : static_cast<Index>(it - begin);
}

TimeGrid TimeGrid::coarsen(Index factor) const {
    if (factor < 1 || steps() % factor != 0)
        throw InvalidArgument("coarsening factor must divide the number of steps");
    Eigen::VectorXd coarse(steps() / factor + 1);
    for (Index i = 0; i < coarse.size(); ++i) coarse[i] = nodes_[i * factor];
    TimeGrid g;
    g.nodes_ = std::move(coarse);
    g.uniform_ = uniform_;
    return g;
}

std::string strategy_name(const ControlStrategy& s) {
    struct Visitor {
        std::string operator()(const strategy::ConstantLo&) const { return "lo"; }
        std::string operator()(const strategy::ConstantHi&) const { return "hi"; }
        std::string operator()(const strategy::UniformRandom&) const { return "random"; }
        std::string operator()(const strategy::BangBang&) const { return "bang_bang"; }
    };
    return std::visit(Visitor{}, s);
}

VolatilityControl make_control(const TimeGrid& grid, const VolatilityBand& band, const ControlStrategy& strat,
                               std::uint64_t seed) {
    band.validate();
    const Index n = grid.steps();
    VolatilityControl c;
    c.label = strategy_name(strat);
    c.values.resize(n);

    if (std::holds_alternative<strategy::ConstantLo>(strat)) {
        c.values.setConstant(band.sigma_lo);
    } else if (std::holds_alternative<strategy::ConstantHi>(strat)) {
        c.values.setConstant(band.sigma_hi);
    } else if (std::holds_alternative<strategy::UniformRandom>(strat)) {
        const RandomStream rs(seed, kControlStream);
        for (Index k = 0; k < n; ++k) {
            const double u = rs.uniform(static_cast<std::uint64_t>(k));
            c.values[k] = std::min(band.sigma_hi, band.sigma_lo + (band.sigma_hi - band.sigma_lo) * u);
        }
    } else {
        const auto& bb = std::get<strategy::BangBang>(strat);
        for (double s : bb.switch_times) {
            if (!(s >= 0.0 && s <= grid.horizon()))
                throw InvalidArgument("bang_bang switch time " + std::to_string(s) + " outside [0, T]");
        }
        std::vector<double> switches = bb.switch_times;
        std::sort(switches.begin(), switches.end());
        for (Index k = 0; k < n; ++k) {
            // level on [t_k, t_{k+1}) counts switches at or before t_k
            const auto flips = std::upper_bound(switches.begin(), switches.end(), grid.t(k) + kGridEps) - switches.begin();
            const bool high = bb.start_high != (flips % 2 == 1);
            c.values[k] = high ? band.sigma_hi : band.sigma_lo;
        }
    }
    return c;
}

void validate_control(const VolatilityControl& control, const VolatilityBand& band) {
    for (Index k = 0; k < control.values.size(); ++k) {
        if (!band.contains(control.values[k]))
            throw InvalidArgument("control '" + control.label + "' value at step " + std::to_string(k) +
                                  " outside the volatility band");
    }
}

std::string to_string(NoiseKind n) { return n == NoiseKind::gaussian ? "gaussian" : "rademacher"; }

NoiseKind noise_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "rademacher") return NoiseKind::rademacher;
    throw InvalidArgument("unknown noise kind '" + s + "'");
}

ScenarioPath generate_scenario(const TimeGrid& grid, const VolatilityControl& control, NoiseKind noise,
                               std::uint64_t seed, std::uint64_t scenario_id) {
    const Index n = grid.steps();
    if (control.values.size() != n)
        throw InvalidArgument("control length " + std::to_string(control.values.size()) + " != grid steps " +
                              std::to_string(n));
    ScenarioPath p;
    p.grid = grid;
    p.control = control;
    p.seed = seed;
    p.scenario_id = scenario_id;
    p.dB.resize(n);
    p.dQV.resize(n);
    p.B.resize(n + 1);
    p.QV.resize(n + 1);
    p.B[0] = 0.0;
    p.QV[0] = 0.0;

    const RandomStream rs = RandomStream(seed, kNoiseStream).split(scenario_id);
    for (Index k = 0; k < n; ++k) {
        const double h = grid.dt(k);
        const double sigma = control.values[k];
        const double zeta = noise == NoiseKind::gaussian ? rs.normal(static_cast<std::uint64_t>(k))
                                                         : static_cast<double>(rs.sign(static_cast<std::uint64_t>(k)));
        p.dB[k] = sigma * std::sqrt(h) * zeta;
        p.dQV[k] = sigma * sigma * h;
        p.B[k + 1] = p.B[k] + p.dB[k];
        p.QV[k + 1] = p.QV[k] + p.dQV[k];
    }
    return p;
}

ScenarioPath coarsen(const ScenarioPath& path, Index factor) {
    ScenarioPath c;
    c.grid = path.grid.coarsen(factor);
    const Index n = c.grid.steps();
    c.seed = path.seed;
    c.scenario_id = path.scenario_id;
    c.control.label = path.control.label;
    c.control.values.resize(n);
    c.dB.resize(n);
    c.dQV.resize(n);
    c.B.resize(n + 1);
    c.QV.resize(n + 1);
    for (Index k = 0; k < n; ++k) {
        const auto block = path.control.values.segment(k * factor, factor);
        if ((block.array() != block[0]).any())
            throw InvalidArgument("coarsen: control not constant on a coarse step");
        c.control.values[k] = block[0];
        c.dB[k] = path.dB.segment(k * factor, factor).sum();
        c.dQV[k] = path.dQV.segment(k * factor, factor).sum();
    }
    for (Index i = 0; i <= n; ++i) {
        c.B[i] = path.B[i * factor];
        c.QV[i] = path.QV[i * factor];
    }
    return c;
}

double stochastic_integral(const ScenarioPath& path, std::span<const double> integrand, Integrator integrator) {
    const Index n = path.steps();
    if (static_cast<Index>(integrand.size()) != n)
        throw InvalidArgument("integrand length " + std::to_string(integrand.size()) + " != steps " +
                              std::to_string(n));
    double acc = 0.0;
    for (Index k = 0; k < n; ++k) {
        const double d = integrator == Integrator::dB    ? path.dB[k]
                         : integrator == Integrator::dQV ? path.dQV[k]
                                                         : path.grid.dt(k);
        acc += integrand[static_cast<std::size_t>(k)] * d;
    }
    return acc;
}

double stochastic_integral(const ScenarioPath& path, const Eigen::VectorXd& integrand, Integrator integrator) {
    return stochastic_integral(path, std::span<const double>(integrand.data(), static_cast<std::size_t>(integrand.size())),
                               integrator);
}

void write_scenarios_csv(std::ostream& os, std::span<const ScenarioPath> paths) {
    os << "scenario_id,step,t,sigma,dB,dQV,B,QV\n";
    for (const auto& p : paths) {
        const Index n = p.steps();
        for (Index k = 0; k <= n; ++k) {
            os << p.scenario_id << ',' << k << ',' << fmt17(p.grid.t(k)) << ',';
            if (k < n)
                os << fmt17(p.control.values[k]) << ',' << fmt17(p.dB[k]) << ',' << fmt17(p.dQV[k]) << ',';
            else
                os << ",,,";
            os << fmt17(p.B[k]) << ',' << fmt17(p.QV[k]) << '\n';
        }
    }
}

}  // namespace gsvie
