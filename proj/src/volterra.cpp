#include "gsvie/volterra.hpp"

#include "gsvie/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gsvie {

Modulus Modulus::linear(double slope) {
    return Modulus{"linear(" + std::to_string(slope) + ")", [slope](double r) { return slope * r; }};
}

ForcingProcess ForcingProcess::constant(double value) {
    return ForcingProcess{"constant(" + std::to_string(value) + ")",
                          [value](double, const ScenarioPath&) { return value; }, Regularity::deterministic};
}

Eigen::VectorXd sample_forcing(const ForcingProcess& phi, const ScenarioPath& path) {
    const Index n = path.steps();
    Eigen::VectorXd out(n + 1);
    for (Index i = 0; i <= n; ++i) out[i] = phi.phi(path.grid.t(i), path);
    return out;
}

Eigen::VectorXd sample_scale(const ScaleProcess& H, const ScenarioPath& path) {
    const Index n = path.steps();
    if (!H) return Eigen::VectorXd::Ones(n + 1);
    Eigen::VectorXd out(n + 1);
    for (Index i = 0; i <= n; ++i) out[i] = H(path.grid.t(i), path);
    return out;
}

std::string to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::direct: return "direct";
        case SolveMethod::picard: return "picard";
        case SolveMethod::separable: return "separable";
        case SolveMethod::quasilinearized: return "quasilinearized";
        case SolveMethod::frozen: return "frozen";
    }
    return "unknown";
}

namespace {

void check_finite(double v, const ScenarioPath& path, Index step) {
    if (!std::isfinite(v) || std::abs(v) > kBlowupThreshold)
        throw NumericalBlowup(path.scenario_id, static_cast<std::size_t>(step), v);
}

struct MemorySums {
    double drift = 0.0;  // sum b dt + sum h dQV
    double noise = 0.0;  // sum sigma dB
};

// Volterra memory at node i reading x_j for j < i. Drift and noise sums are kept apart so the
// separable solver (noise scaled by H(t_i)) reproduces this arithmetic exactly when H = 1.
MemorySums memory_at(const CoefficientSet& c, const ScenarioPath& p, const double* x, Index i) {
    const double ti = p.grid.t(i);
    double sb = 0.0;
    double sh = 0.0;
    double ss = 0.0;
    for (Index j = 0; j < i; ++j) {
        const double tj = p.grid.t(j);
        const double xj = x[j];
        if (c.b) sb += c.b(ti, tj, xj) * p.grid.dt(j);
        if (c.h) sh += c.h(ti, tj, xj) * p.dQV[j];
        if (c.sigma) ss += c.sigma(ti, tj, xj) * p.dB[j];
    }
    return {sb + sh, ss};
}

void check_path_inputs(const ScenarioPath& path) {
    if (path.grid.steps() != path.steps()) throw InvalidArgument("scenario path does not match its grid");
}

}  // namespace

SolutionPath solve_direct(const CoefficientSet& coeffs, const ForcingProcess& phi, const ScenarioPath& path) {
    check_path_inputs(path);
    const Index n = path.steps();
    const Eigen::VectorXd phis = sample_forcing(phi, path);
    SolutionPath out{Eigen::VectorXd(n + 1), path.scenario_id, SolveMethod::direct};
    for (Index i = 0; i <= n; ++i) {
        const MemorySums m = memory_at(coeffs, path, out.values.data(), i);
        out.values[i] = phis[i] + (m.drift + m.noise);
        check_finite(out.values[i], path, i);
    }
    return out;
}

namespace {

Eigen::VectorXd lambda_values(const CoefficientSet& coeffs, const Eigen::VectorXd& phis, const ScenarioPath& path,
                              const Eigen::VectorXd& x) {
    const Index n = path.steps();
    Eigen::VectorXd out(n + 1);
    for (Index i = 0; i <= n; ++i) {
        const MemorySums m = memory_at(coeffs, path, x.data(), i);
        out[i] = phis[i] + (m.drift + m.noise);
        check_finite(out[i], path, i);
    }
    return out;
}

}  // namespace

SolutionPath apply_lambda(const CoefficientSet& coeffs, const ForcingProcess& phi, const ScenarioPath& path,
                          const SolutionPath& x) {
    check_path_inputs(path);
    if (x.values.size() != path.steps() + 1) throw InvalidArgument("apply_lambda: input not defined on the full grid");
    return SolutionPath{lambda_values(coeffs, sample_forcing(phi, path), path, x.values), path.scenario_id,
                        SolveMethod::picard};
}

void PicardConfig::validate() const {
    if (!(tol > 0.0)) throw InvalidArgument("PicardConfig: tol must be > 0");
    if (max_iter < 1) throw InvalidArgument("PicardConfig: max_iter must be >= 1");
    if (!(beta >= 0.0)) throw InvalidArgument("PicardConfig: beta must be >= 0");
}

PicardResult solve_picard(const CoefficientSet& coeffs, const ForcingProcess& phi, const ScenarioPath& path,
                          const PicardConfig& cfg) {
    cfg.validate();
    check_path_inputs(path);
    const Index n = path.steps();
    const Eigen::VectorXd phis = sample_forcing(phi, path);
    Eigen::VectorXd x = cfg.initial_guess == InitialGuess::phi ? phis : Eigen::VectorXd::Zero(n + 1);

    PicardResult result;
    for (int k = 1; k <= cfg.max_iter; ++k) {
        Eigen::VectorXd next = lambda_values(coeffs, phis, path, x);
        const Eigen::VectorXd diff = next - x;
        const double weighted = std::sqrt(weighted_sq_norm(diff, path.grid, cfg.beta));
        result.distances.push_back(weighted);
        x = std::move(next);
        const bool done = cfg.stopping == StoppingRule::weighted ? weighted < cfg.tol
                                                                 : diff.cwiseAbs().maxCoeff() < cfg.tol;
        if (done) {
            result.iterations = k;
            result.solution = SolutionPath{std::move(x), path.scenario_id, SolveMethod::picard};
            return result;
        }
    }
    throw NonConvergence("Picard iteration did not converge in " + std::to_string(cfg.max_iter) +
                             " iterations (scenario " + std::to_string(path.scenario_id) + ")",
                         std::move(result.distances));
}

SolutionPath solve_separable(const SeparableEquation& eq, const ForcingProcess& phi, const ScenarioPath& path) {
    check_path_inputs(path);
    const Index n = path.steps();
    const Eigen::VectorXd phis = sample_forcing(phi, path);
    const Eigen::VectorXd H = sample_scale(eq.H, path);
    SolutionPath out{Eigen::VectorXd(n + 1), path.scenario_id, SolveMethod::separable};
    double noise = 0.0;
    for (Index i = 0; i <= n; ++i) {
        if (i > 0 && eq.sigma) noise += eq.sigma(path.grid.t(i - 1), out.values[i - 1]) * path.dB[i - 1];
        const double ti = path.grid.t(i);
        double sb = 0.0;
        double sh = 0.0;
        for (Index j = 0; j < i; ++j) {
            const double tj = path.grid.t(j);
            const double xj = out.values[j];
            if (eq.b) sb += eq.b(ti, tj, xj) * path.grid.dt(j);
            if (eq.h) sh += eq.h(ti, tj, xj) * path.dQV[j];
        }
        out.values[i] = phis[i] + ((sb + sh) + H[i] * noise);
        check_finite(out.values[i], path, i);
    }
    return out;
}

double apriori_bound(const AprioriBound& bound, double t, Index panels) {
    if (!bound.f) throw InvalidArgument("apriori_bound: missing f");
    if (!(t >= 0.0)) throw InvalidArgument("apriori_bound: t must be >= 0");
    if (panels < 1) throw InvalidArgument("apriori_bound: need at least one panel");
    auto F = [&](double r) { return bound.C1 * bound.f(r); };
    if (t == 0.0 || bound.C2 == 0.0) return F(t);
    // int_0^t F(t - u) e^{C2 u} du
    const double h = t / static_cast<double>(panels);
    double acc = 0.5 * (F(t) + F(0.0) * std::exp(bound.C2 * t));
    for (Index k = 1; k < panels; ++k) {
        const double u = h * static_cast<double>(k);
        acc += F(t - u) * std::exp(bound.C2 * u);
    }
    return F(t) + bound.C2 * h * acc;
}

PathGroup make_group(std::string label, std::span<const SolutionPath> solutions) {
    PathGroup g{std::move(label), {}};
    g.paths.reserve(solutions.size());
    for (const auto& s : solutions) g.paths.push_back(s.values);
    return g;
}

ContinuityTable mean_square_continuity_diagnostic(const Ensemble& ensemble, const TimeGrid& grid,
                                                  std::span<const Index> lags) {
    if (ensemble.empty()) throw InvalidArgument("continuity diagnostic: empty ensemble");
    const Index n = grid.steps();
    ContinuityTable table;
    for (Index lag : lags) {
        if (lag < 0 || lag > n) throw InvalidArgument("continuity diagnostic: lag out of range");
        LagEntry entry{lag, lag == 0 ? 0.0 : grid.t(lag) - grid.t(0), 0.0, 0.0, 0};
        if (lag > 0) {
            bool first = true;
            for (Index i = 0; i + lag <= n; ++i) {
                std::vector<LabelledSamples> groups;
                for (const auto& g : ensemble) {
                    LabelledSamples s{g.label, {}};
                    s.samples.reserve(g.paths.size());
                    for (const auto& x : g.paths) {
                        const double d = x[i + lag] - x[i];
                        s.samples.push_back(d * d);
                    }
                    groups.push_back(std::move(s));
                }
                const RobustEstimate est = robust_from_samples("sq_increment", groups);
                if (first || est.value > entry.value) {
                    entry.value = est.value;
                    entry.se = est.se();
                    entry.at_node = i;
                    first = false;
                }
            }
        }
        table.entries.push_back(entry);
    }
    for (std::size_t k = 1; k < table.entries.size(); ++k) {
        if (table.entries[k].lag >= table.entries[k - 1].lag && table.entries[k].value < table.entries[k - 1].value)
            table.monotone_in_lag = false;
    }
    return table;
}

std::vector<HolderStat> holder_diagnostic(const Ensemble& ensemble, const TimeGrid& grid,
                                          std::span<const double> alphas) {
    const Index n = grid.steps();
    std::vector<HolderStat> stats;
    std::size_t paths = 0;
    for (const auto& g : ensemble) paths += g.paths.size();
    if (paths == 0) throw InvalidArgument("holder diagnostic: empty ensemble");
    for (double alpha : alphas) {
        HolderStat st{alpha, 0.0, 0.0};
        for (const auto& g : ensemble) {
            for (const auto& x : g.paths) {
                if (x.size() != n + 1) throw InvalidArgument("holder diagnostic: path not on the grid");
                double path_max = 0.0;
                for (Index i = 0; i <= n; ++i) {
                    for (Index j = i + 1; j <= n; ++j) {
                        const double q = std::abs(x[j] - x[i]) / std::pow(grid.t(j) - grid.t(i), alpha);
                        path_max = std::max(path_max, q);
                    }
                }
                st.max_quotient = std::max(st.max_quotient, path_max);
                st.mean_path_max += path_max;
            }
        }
        st.mean_path_max /= static_cast<double>(paths);
        stats.push_back(st);
    }
    return stats;
}

}  // namespace gsvie
