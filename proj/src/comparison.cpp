#include "gsvie/comparison.hpp"

#include "gsvie/errors.hpp"
#include "gsvie/parallel.hpp"
#include "gsvie/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gsvie {

namespace {

constexpr std::uint64_t kAssumptionStream = 0x61737370ull;  // "assp"

double eval(const Kernel& k, double t, double s, double x) { return k ? k(t, s, x) : 0.0; }
double eval(const DiffusionFn& f, double s, double x) { return f ? f(s, x) : 0.0; }

void check_finite(double v, const ScenarioPath& path, Index step) {
    if (!std::isfinite(v) || std::abs(v) > kBlowupThreshold)
        throw NumericalBlowup(path.scenario_id, static_cast<std::size_t>(step), v);
}

}  // namespace

SeparableEquation SeparableSystem::equation(int i) const {
    if (i != 1 && i != 2) throw InvalidArgument("SeparableSystem::equation: index must be 1 or 2");
    return SeparableEquation{i == 1 ? b1 : b2, i == 1 ? h1 : h2, sigma, H};
}

SeparableSystem SeparableSystem::swapped() const {
    SeparableSystem s = *this;
    std::swap(s.b1, s.b2);
    std::swap(s.h1, s.h2);
    s.name = name + "/swapped";
    return s;
}

ComparisonFixture ComparisonFixture::swapped() const {
    return ComparisonFixture{system.swapped(), phi2, phi1};
}

ComparisonState solve_pair(const ComparisonFixture& fx, const ScenarioPath& path) {
    ComparisonState st;
    st.X1 = solve_separable(fx.system.equation(1), fx.phi1, path);
    st.X2 = solve_separable(fx.system.equation(2), fx.phi2, path);
    st.H = sample_scale(fx.system.H, path);
    st.invH = st.H.cwiseInverse();
    st.Xbar1 = st.X1.values.cwiseQuotient(st.H);
    st.Xbar2 = st.X2.values.cwiseQuotient(st.H);
    st.Xhat = st.Xbar1 - st.Xbar2;
    st.phihat = sample_forcing(fx.phi1, path) - sample_forcing(fx.phi2, path);
    return st;
}

LinearizationBase linearization_base(const ComparisonFixture& fx, const ComparisonState& state,
                                     const ScenarioPath& path) {
    const Index n = path.steps();
    if (state.X1.values.size() != n + 1 || state.X2.values.size() != n + 1)
        throw InvalidArgument("linearization_base: state does not match the scenario");
    const SeparableSystem& sys = fx.system;
    LinearizationBase base;
    base.Xhat = state.Xhat;
    base.H = state.H;
    base.invH = state.invH;
    base.phihat = state.phihat;
    const Eigen::VectorXd& x1 = state.X1.values;
    const Eigen::VectorXd& x2 = state.X2.values;

    base.db2 = KernelMatrix::Zero(n + 1, n + 1);
    base.bhat = KernelMatrix::Zero(n + 1, n + 1);
    const bool has_h = sys.h1 || sys.h2;
    if (has_h) {
        base.dh2 = KernelMatrix::Zero(n + 1, n + 1);
        base.hhat = KernelMatrix::Zero(n + 1, n + 1);
    }
    for (Index i = 0; i <= n; ++i) {
        const double ti = path.grid.t(i);
        for (Index j = 0; j <= i; ++j) {
            const double tj = path.grid.t(j);
            const double b2x1 = eval(sys.b2, ti, tj, x1[j]);
            base.db2(i, j) = b2x1 - eval(sys.b2, ti, tj, x2[j]);
            base.bhat(i, j) = eval(sys.b1, ti, tj, x1[j]) - b2x1;
            if (has_h) {
                const double h2x1 = eval(sys.h2, ti, tj, x1[j]);
                base.dh2(i, j) = h2x1 - eval(sys.h2, ti, tj, x2[j]);
                base.hhat(i, j) = eval(sys.h1, ti, tj, x1[j]) - h2x1;
            }
        }
    }
    base.dsigma.resize(n + 1);
    for (Index j = 0; j <= n; ++j) {
        const double tj = path.grid.t(j);
        base.dsigma[j] = eval(sys.sigma, tj, x1[j]) - eval(sys.sigma, tj, x2[j]);
    }
    return base;
}

QuasiLinearizedRun quasilinearize(const LinearizationBase& base, int n) {
    if (n < 1) throw InvalidArgument("quasilinearize: n must be >= 1");
    const Eigen::VectorXd r = base.Xhat.unaryExpr([n](double y) { return truncated_reciprocal(y, n); });
    const Eigen::VectorXd g = base.Xhat.unaryExpr([n](double y) { return gamma_n(y, n); });
    QuasiLinearizedRun run;
    run.n = n;
    run.bn = base.db2 * r.asDiagonal();
    run.an = base.db2 * g.asDiagonal();
    if (base.has_h()) {
        run.hn = base.dh2 * r.asDiagonal();
        run.cn = base.dh2 * g.asDiagonal();
    }
    run.sigman = r.cwiseProduct(base.dsigma);
    run.dn = g.cwiseProduct(base.dsigma);
    return run;
}

namespace {

// Shared recursion of the live and frozen linear systems. row(i, j) selects the t-node at which the
// kernels are read for output i and memory node j.
template <typename RowMap>
SolutionPath linear_solve(const LinearizationBase& base, const QuasiLinearizedRun& run, const ScenarioPath& path,
                          const Eigen::VectorXd& forcing, const Eigen::VectorXd& inv_h, RowMap row,
                          bool with_residuals, SolveMethod method) {
    const Index n = path.steps();
    if (base.Xhat.size() != n + 1 || run.bn.rows() != n + 1)
        throw InvalidArgument("linear system does not match the scenario");
    const bool has_h = base.has_h();
    SolutionPath out{Eigen::VectorXd(n + 1), path.scenario_id, method};
    Eigen::VectorXd& x = out.values;
    double noise = 0.0;
    for (Index i = 0; i <= n; ++i) {
        if (i > 0) {
            const Index j = i - 1;
            const double integrand =
                with_residuals ? run.sigman[j] * x[j] + run.dn[j] : run.sigman[j] * x[j];
            noise += integrand * path.dB[j];
        }
        double sb = 0.0;
        double sh = 0.0;
        for (Index j = 0; j < i; ++j) {
            const Index r = row(i, j);
            double db = run.bn(r, j) * x[j] + base.bhat(r, j);
            if (with_residuals) db += run.an(r, j);
            sb += db * path.grid.dt(j);
            if (has_h) {
                double dh = run.hn(r, j) * x[j] + base.hhat(r, j);
                if (with_residuals) dh += run.cn(r, j);
                sh += dh * path.dQV[j];
            }
        }
        x[i] = forcing[i] + (inv_h[i] * (sb + sh) + noise);
        check_finite(x[i], path, i);
    }
    return out;
}

}  // namespace

SolutionPath solve_quasilinearized(const LinearizationBase& base, const QuasiLinearizedRun& run,
                                   const ScenarioPath& path, bool with_residuals) {
    const Eigen::VectorXd forcing = base.phihat.cwiseProduct(base.invH);
    return linear_solve(base, run, path, forcing, base.invH, [](Index i, Index) { return i; }, with_residuals,
                        SolveMethod::quasilinearized);
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::H_jump: return "H_jump";
        case StopReason::phi_jump: return "phi_jump";
        case StopReason::delta_cap: return "delta_cap";
        case StopReason::horizon: return "horizon";
    }
    return "unknown";
}

std::string to_string(StoppingMode m) { return m == StoppingMode::with_phi ? "with_phi" : "H_only"; }

StoppingGrid build_stopping_grid(double delta, const TimeGrid& grid, const Eigen::VectorXd& invH,
                                 const Eigen::VectorXd& phihat, StoppingMode mode) {
    if (!(delta > 0.0)) throw InvalidArgument("build_stopping_grid: delta must be > 0");
    const Index n = grid.steps();
    if (invH.size() != n + 1) throw InvalidArgument("build_stopping_grid: 1/H path not on the grid");
    if (mode == StoppingMode::with_phi && phihat.size() != n + 1)
        throw InvalidArgument("build_stopping_grid: phihat path not on the grid");
    const double eps = 1e-12 * std::max(1.0, grid.horizon());

    StoppingGrid sg;
    sg.delta = delta;
    sg.nodes.push_back(0);
    sg.tau.push_back(grid.t(0));
    sg.segment_start.assign(static_cast<std::size_t>(n + 1), 0);
    Index p = 0;
    while (p < n) {
        Index q = p + 1;
        StopReason reason = StopReason::horizon;
        for (; q <= n; ++q) {
            if (std::abs(invH[q] - invH[p]) >= delta) {
                reason = StopReason::H_jump;
                break;
            }
            if (mode == StoppingMode::with_phi && std::abs(phihat[q] - phihat[p]) >= delta) {
                reason = StopReason::phi_jump;
                break;
            }
            if (grid.t(q) >= grid.t(p) + delta - eps) {
                reason = StopReason::delta_cap;
                break;
            }
            if (q == n) {
                reason = StopReason::horizon;
                break;
            }
        }
        for (Index i = p; i < q; ++i) sg.segment_start[static_cast<std::size_t>(i)] = p;
        sg.nodes.push_back(q);
        sg.tau.push_back(grid.t(q));
        sg.triggered_by.push_back(reason);
        p = q;
    }
    sg.segment_start[static_cast<std::size_t>(n)] = n;
    return sg;
}

Eigen::VectorXd freeze(const StoppingGrid& sg, const Eigen::VectorXd& x) {
    const auto n = static_cast<Index>(sg.segment_start.size());
    if (x.size() != n) throw InvalidArgument("freeze: process not on the stopping grid's time grid");
    Eigen::VectorXd out(n);
    for (Index i = 0; i < n; ++i) out[i] = x[sg.segment_start[static_cast<std::size_t>(i)]];
    return out;
}

KernelMatrix freeze_kernel(const StoppingGrid& sg, const KernelMatrix& K) {
    const auto n = static_cast<Index>(sg.segment_start.size());
    if (K.rows() != n || K.cols() != n) throw InvalidArgument("freeze_kernel: kernel not on the time grid");
    KernelMatrix out = KernelMatrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const Index k = sg.segment_start[static_cast<std::size_t>(i)];
        for (Index j = 0; j <= i; ++j) out(i, j) = K(std::max(k, j), j);
    }
    return out;
}

SolutionPath solve_frozen(const LinearizationBase& base, const QuasiLinearizedRun& run, const StoppingGrid& sg,
                          const ScenarioPath& path) {
    const Index n = path.steps();
    if (static_cast<Index>(sg.segment_start.size()) != n + 1)
        throw InvalidArgument("solve_frozen: stopping grid built on a different time grid");
    const Eigen::VectorXd phi_d = freeze(sg, base.phihat);
    const Eigen::VectorXd inv_h_d = freeze(sg, base.invH);
    const Eigen::VectorXd forcing = phi_d.cwiseProduct(inv_h_d);
    const auto& start = sg.segment_start;
    return linear_solve(
        base, run, path, forcing, inv_h_d,
        [&start](Index i, Index j) { return std::max(start[static_cast<std::size_t>(i)], j); }, false,
        SolveMethod::frozen);
}

std::vector<VolatilityControl> realise_controls(const EnsembleSpec& spec) {
    spec.band.validate();
    if (spec.controls.empty()) throw InvalidArgument("ensemble needs at least one control");
    std::vector<VolatilityControl> out;
    out.reserve(spec.controls.size());
    for (const auto& c : spec.controls) out.push_back(make_control(spec.grid, spec.band, c, spec.seed));
    return out;
}

std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("loglog_fit: need at least two points");
    const auto m = static_cast<Index>(x.size());
    Eigen::MatrixXd A(m, 2);
    Eigen::VectorXd rhs(m);
    for (Index k = 0; k < m; ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            return {nan, nan};
        }
        A(k, 0) = 1.0;
        A(k, 1) = std::log(x[k]);
        rhs[k] = std::log(y[k]);
    }
    const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(rhs);
    return {coef[1], coef[0]};
}

namespace {

struct ScenarioIndex {
    std::size_t control;
    std::size_t scenario;
    std::uint64_t id;
};

ScenarioIndex locate(const EnsembleSpec& spec, std::size_t k) {
    const std::size_t c = k / spec.scenarios_per_control;
    const std::size_t s = k % spec.scenarios_per_control;
    return {c, s, scenario_id(c, s, spec.scenarios_per_control)};
}

void check_spec(const EnsembleSpec& spec) {
    if (spec.scenarios_per_control == 0) throw InvalidArgument("ensemble needs at least one scenario per control");
}

}  // namespace

ConvergenceTable convergence_study_n(const ComparisonFixture& fx, const EnsembleSpec& spec,
                                     const std::vector<int>& ns) {
    check_spec(spec);
    if (ns.empty()) throw InvalidArgument("convergence_study_n: empty n list");
    for (int n : ns)
        if (n < 1) throw InvalidArgument("convergence_study_n: n must be >= 1");
    const auto controls = realise_controls(spec);
    const std::size_t total = controls.size() * spec.scenarios_per_control;
    // samples[k][q]: scenario k, truncation ns[q]
    std::vector<std::vector<double>> samples(total, std::vector<double>(ns.size()));
    parallel_for(total, spec.options.threads, [&](std::size_t k) {
        const auto loc = locate(spec, k);
        const ScenarioPath path = generate_scenario(spec.grid, controls[loc.control], spec.options.noise, spec.seed, loc.id);
        const ComparisonState st = solve_pair(fx, path);
        const LinearizationBase base = linearization_base(fx, st, path);
        for (std::size_t q = 0; q < ns.size(); ++q) {
            const SolutionPath xn = solve_quasilinearized(base, quasilinearize(base, ns[q]), path);
            samples[k][q] = (st.Xhat - xn.values).cwiseAbs2().maxCoeff();
        }
    });

    ConvergenceTable table;
    table.ns = ns;
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t q = 0; q < ns.size(); ++q) {
        std::vector<LabelledSamples> groups;
        for (std::size_t c = 0; c < controls.size(); ++c) {
            LabelledSamples g{controls[c].label, {}};
            for (std::size_t s = 0; s < spec.scenarios_per_control; ++s)
                g.samples.push_back(samples[c * spec.scenarios_per_control + s][q]);
            groups.push_back(std::move(g));
        }
        table.estimates.push_back(robust_from_samples("sup_sq_gap_n" + std::to_string(ns[q]), groups, spec.seed));
        table.estimates.back().scenarios_per_control = spec.scenarios_per_control;
        xs.push_back(static_cast<double>(ns[q]));
        ys.push_back(table.estimates.back().value);
    }
    if (ns.size() >= 2) std::tie(table.slope, table.intercept) = loglog_fit(xs, ys);
    else table.slope = table.intercept = std::numeric_limits<double>::quiet_NaN();
    return table;
}

const TwoApproxEntry& TwoApproxTable::at(int n, double delta) const {
    for (const auto& e : entries)
        if (e.n == n && e.delta == delta) return e;
    throw InvalidArgument("TwoApproxTable: no entry for (" + std::to_string(n) + ", " + std::to_string(delta) + ")");
}

TwoApproxTable two_approximation_study(const ComparisonFixture& fx, const EnsembleSpec& spec,
                                       const std::vector<int>& ns, const std::vector<double>& deltas,
                                       StoppingMode mode) {
    check_spec(spec);
    if (ns.empty() || deltas.empty()) throw InvalidArgument("two_approximation_study: empty sweep");
    const auto controls = realise_controls(spec);
    const std::size_t total = controls.size() * spec.scenarios_per_control;
    const std::size_t combos = ns.size() * deltas.size();
    const Index nodes = spec.grid.steps() + 1;
    // sq[k][combo]: per-node squared gap for scenario k
    std::vector<std::vector<Eigen::VectorXd>> sq(total, std::vector<Eigen::VectorXd>(combos));
    parallel_for(total, spec.options.threads, [&](std::size_t k) {
        const auto loc = locate(spec, k);
        const ScenarioPath path = generate_scenario(spec.grid, controls[loc.control], spec.options.noise, spec.seed, loc.id);
        const ComparisonState st = solve_pair(fx, path);
        const LinearizationBase base = linearization_base(fx, st, path);
        std::vector<StoppingGrid> grids;
        for (double d : deltas) grids.push_back(build_stopping_grid(d, spec.grid, base.invH, base.phihat, mode));
        for (std::size_t a = 0; a < ns.size(); ++a) {
            const QuasiLinearizedRun run = quasilinearize(base, ns[a]);
            for (std::size_t b = 0; b < deltas.size(); ++b) {
                const SolutionPath xd = solve_frozen(base, run, grids[b], path);
                sq[k][a * deltas.size() + b] = (xd.values - st.Xhat).cwiseAbs2();
            }
        }
    });

    TwoApproxTable table;
    table.ns = ns;
    table.deltas = deltas;
    const double cnt = static_cast<double>(spec.scenarios_per_control);
    for (std::size_t a = 0; a < ns.size(); ++a) {
        for (std::size_t b = 0; b < deltas.size(); ++b) {
            const std::size_t combo = a * deltas.size() + b;
            RobustEstimate est;
            est.functional = "sup_t_mean_sq_gap";
            est.scenarios_per_control = spec.scenarios_per_control;
            est.seed = spec.seed;
            for (std::size_t c = 0; c < controls.size(); ++c) {
                Eigen::VectorXd sum = Eigen::VectorXd::Zero(nodes);
                Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(nodes);
                for (std::size_t s = 0; s < spec.scenarios_per_control; ++s) {
                    const Eigen::VectorXd& v = sq[c * spec.scenarios_per_control + s][combo];
                    sum += v;
                    sum2 += v.cwiseAbs2();
                }
                const Eigen::VectorXd mean = sum / cnt;
                Index at = 0;
                mean.maxCoeff(&at);
                double se = std::numeric_limits<double>::quiet_NaN();
                if (spec.scenarios_per_control > 1) {
                    const double var = std::max(0.0, (sum2[at] - cnt * mean[at] * mean[at]) / (cnt - 1.0));
                    se = std::sqrt(var / cnt);
                }
                est.per_control.push_back(ControlMean{controls[c].label, mean[at], se, spec.scenarios_per_control});
            }
            est.value = est.argmax().mean;
            table.entries.push_back(TwoApproxEntry{ns[a], deltas[b], std::move(est)});
        }
    }
    return table;
}

std::string to_string(AssumptionStatus s) {
    switch (s) {
        case AssumptionStatus::verified_on_samples: return "verified_on_samples";
        case AssumptionStatus::violated: return "violated";
        case AssumptionStatus::not_applicable: return "not_applicable";
    }
    return "unknown";
}

const AssumptionCheck& AssumptionReport::get(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return c;
    throw InvalidArgument("AssumptionReport: no check named " + name);
}

bool AssumptionReport::comparison_applicable() const {
    for (const auto& c : checks) {
        if (c.name == "classical") continue;
        if (c.status == AssumptionStatus::violated) return false;
    }
    return true;
}

namespace {

// Counts violations of lhs >= rhs and keeps the worst one.
class Tally {
public:
    Tally(std::string name, double rel_tol) : check_{std::move(name), AssumptionStatus::verified_on_samples, 0, 0, {}}, rel_(rel_tol) {}

    void sample() { ++check_.samples; }

    // Records lhs >= rhs; returns false on violation.
    bool geq(double lhs, double rhs, Witness w) {
        const double slack = rel_ * (1.0 + std::abs(lhs) + std::abs(rhs));
        if (lhs >= rhs - slack) return true;
        ++check_.violations;
        const double gap = rhs - lhs;
        if (!check_.witness || gap > worst_) {
            worst_ = gap;
            w.lhs = lhs;
            w.rhs = rhs;
            check_.witness = std::move(w);
        }
        return false;
    }

    // Pins a witness that takes precedence over the worst random one.
    void pin(Witness w, double lhs, double rhs) {
        w.lhs = lhs;
        w.rhs = rhs;
        check_.witness = std::move(w);
        worst_ = std::numeric_limits<double>::infinity();
    }

    AssumptionCheck finish() {
        check_.status = check_.violations > 0 ? AssumptionStatus::violated : AssumptionStatus::verified_on_samples;
        return check_;
    }

    std::size_t violations() const { return check_.violations; }

private:
    AssumptionCheck check_;
    double rel_;
    double worst_ = 0.0;
};

struct SampledScenario {
    std::uint64_t id;
    Eigen::VectorXd H;
    Eigen::VectorXd phihat;
};

}  // namespace

AssumptionReport check_assumptions(const ComparisonFixture& fx, const SamplingPlan& plan) {
    plan.band.validate();
    if (plan.samples == 0 || plan.scenarios == 0) throw InvalidArgument("check_assumptions: empty sampling plan");
    if (!(plan.x_range > 0.0)) throw InvalidArgument("check_assumptions: x_range must be > 0");
    const SeparableSystem& sys = fx.system;
    const TimeGrid& grid = plan.grid;
    const Index n = grid.steps();
    const double R = plan.x_range;

    const std::vector<ControlStrategy> strategies{strategy::ConstantLo{}, strategy::ConstantHi{},
                                                  strategy::UniformRandom{}};
    std::vector<SampledScenario> scen;
    for (std::size_t k = 0; k < plan.scenarios; ++k) {
        const auto control = make_control(grid, plan.band, strategies[k % strategies.size()], plan.seed);
        const ScenarioPath path = generate_scenario(grid, control, NoiseKind::gaussian, plan.seed, k);
        scen.push_back({path.scenario_id, sample_scale(sys.H, path),
                        sample_forcing(fx.phi1, path) - sample_forcing(fx.phi2, path)});
    }

    const RandomStream rs(plan.seed, kAssumptionStream);
    struct Draw {
        Index ip, i, j;
        double x, y;
        std::size_t sc;
    };
    auto draw = [&](std::uint64_t k) {
        auto pick = [](double u, Index count) { return std::min<Index>(count - 1, static_cast<Index>(u * static_cast<double>(count))); };
        Draw d{};
        d.ip = pick(rs.uniform(k, 0), n + 1);
        d.i = pick(rs.uniform(k, 1), d.ip + 1);
        d.j = pick(rs.uniform(k, 2), d.i + 1);
        d.x = -R + 2.0 * R * rs.uniform(k, 3);
        d.y = -R + 2.0 * R * rs.uniform(k, 4);
        if (d.y < d.x) std::swap(d.x, d.y);
        d.sc = std::min(plan.scenarios - 1, static_cast<std::size_t>(rs.uniform(k, 5) * static_cast<double>(plan.scenarios)));
        return d;
    };

    AssumptionReport report;

    // (H2): Lipschitz in x and linear growth, for both equations.
    {
        Tally tally("H2", plan.rel_tol);
        for (std::uint64_t k = 0; k < plan.samples; ++k) {
            const Draw d = draw(k);
            const double t = grid.t(d.i);
            const double s = grid.t(d.j);
            for (int eq = 1; eq <= 2; ++eq) {
                const Kernel& b = eq == 1 ? sys.b1 : sys.b2;
                const Kernel& h = eq == 1 ? sys.h1 : sys.h2;
                tally.sample();
                const double lip = std::abs(eval(b, t, s, d.x) - eval(b, t, s, d.y)) +
                                   std::abs(eval(h, t, s, d.x) - eval(h, t, s, d.y)) +
                                   std::abs(eval(sys.sigma, s, d.x) - eval(sys.sigma, s, d.y));
                const std::string tag = eq == 1 ? "1" : "2";
                tally.geq(sys.L * std::abs(d.x - d.y), lip, Witness{"lipschitz eq" + tag, t, t, s, d.x, d.y, 0, 0, 0});
                const double bx = eval(b, t, s, d.x);
                const double hx = eval(h, t, s, d.x);
                const double sx = eval(sys.sigma, s, d.x);
                tally.geq(sys.L * sys.L * (1.0 + d.x * d.x), bx * bx + hx * hx + sx * sx,
                          Witness{"growth eq" + tag, t, t, s, d.x, d.x, 0, 0, 0});
            }
        }
        report.checks.push_back(tally.finish());
    }

    // (H3): t-increments of b_i, h_i bounded by rho. sigma carries no t.
    if (sys.rho.rho) {
        Tally tally("H3", plan.rel_tol);
        const std::pair<const Kernel*, const char*> ks[] = {{&sys.b1, "b1"}, {&sys.b2, "b2"}, {&sys.h1, "h1"}, {&sys.h2, "h2"}};
        for (std::uint64_t k = 0; k < plan.samples; ++k) {
            const Draw d = draw(k);
            const double tp = grid.t(d.ip);
            const double t = grid.t(d.i);
            const double s = grid.t(d.j);
            const double bound = sys.rho.rho(tp - t);
            for (const auto& [kp, label] : ks) {
                if (!*kp) continue;
                tally.sample();
                tally.geq(bound, std::abs(eval(*kp, tp, s, d.x) - eval(*kp, t, s, d.x)),
                          Witness{std::string(label) + " t-increment", tp, t, s, d.x, d.x, 0, 0, 0});
            }
        }
        report.checks.push_back(tally.finish());
    } else {
        report.checks.push_back(AssumptionCheck{"H3", AssumptionStatus::not_applicable, 0, 0, {}});
    }

    // (A1): 0 < m <= H <= M on every sampled node.
    {
        Tally tally("A1", plan.rel_tol);
        if (!(sys.m > 0.0)) {
            tally.sample();
            tally.geq(sys.m, std::numeric_limits<double>::min(), Witness{"m > 0", 0, 0, 0, 0, 0, 0, 0, 0});
        }
        for (const auto& sc : scen) {
            for (Index i = 0; i <= n; ++i) {
                tally.sample();
                const double h = sc.H[i];
                if (!std::isfinite(h)) {
                    tally.geq(-std::numeric_limits<double>::infinity(), 0.0, Witness{"H finite", grid.t(i), grid.t(i), 0, 0, 0, sc.id, 0, 0});
                    continue;
                }
                tally.geq(h, std::max(sys.m, std::numeric_limits<double>::min()), Witness{"H >= m", grid.t(i), grid.t(i), 0, 0, 0, sc.id, 0, 0});
                tally.geq(sys.M, h, Witness{"H <= M", grid.t(i), grid.t(i), 0, 0, 0, sc.id, 0, 0});
            }
        }
        report.checks.push_back(tally.finish());
    }
    const bool h_valid = report.get("A1").status != AssumptionStatus::violated;

    auto skipped = [](const char* name) { return AssumptionCheck{name, AssumptionStatus::not_applicable, 0, 0, {}}; };

    // (A2): (l1 - l2)(t', s, x) / H(t') >= (l1 - l2)(t, s, x) / H(t) >= 0 for l = b, h.
    if (h_valid) {
        Tally tally("A2", plan.rel_tol);
        for (std::uint64_t k = 0; k < plan.samples; ++k) {
            const Draw d = draw(k);
            const auto& sc = scen[d.sc];
            const double tp = grid.t(d.ip);
            const double t = grid.t(d.i);
            const double s = grid.t(d.j);
            for (int l = 0; l < 2; ++l) {
                const Kernel& k1 = l == 0 ? sys.b1 : sys.h1;
                const Kernel& k2 = l == 0 ? sys.b2 : sys.h2;
                if (!k1 && !k2) continue;
                const std::string label = l == 0 ? "b" : "h";
                tally.sample();
                const double dp = (eval(k1, tp, s, d.x) - eval(k2, tp, s, d.x)) / sc.H[d.ip];
                const double dt = (eval(k1, t, s, d.x) - eval(k2, t, s, d.x)) / sc.H[d.i];
                tally.geq(dp, dt, Witness{label + " difference nondecreasing", tp, t, s, d.x, d.x, sc.id, 0, 0});
                tally.geq(dt, 0.0, Witness{label + " difference nonnegative", tp, t, s, d.x, d.x, sc.id, 0, 0});
            }
        }
        report.checks.push_back(tally.finish());
    } else {
        report.checks.push_back(skipped("A2"));
    }

    // (A3): for i = 1 or 2, (l_i(t', s, y) - l_i(t', s, x)) / H(t') >= (l_i(t, s, y) - l_i(t, s, x)) / H(t), y >= x.
    if (h_valid) {
        Tally t1("A3", plan.rel_tol);
        Tally t2("A3", plan.rel_tol);
        for (std::uint64_t k = 0; k < plan.samples; ++k) {
            const Draw d = draw(k);
            const auto& sc = scen[d.sc];
            const double tp = grid.t(d.ip);
            const double t = grid.t(d.i);
            const double s = grid.t(d.j);
            for (int eq = 1; eq <= 2; ++eq) {
                Tally& tally = eq == 1 ? t1 : t2;
                for (int l = 0; l < 2; ++l) {
                    const Kernel& kk = l == 0 ? (eq == 1 ? sys.b1 : sys.b2) : (eq == 1 ? sys.h1 : sys.h2);
                    if (!kk) continue;
                    tally.sample();
                    const double lhs = (eval(kk, tp, s, d.y) - eval(kk, tp, s, d.x)) / sc.H[d.ip];
                    const double rhs = (eval(kk, t, s, d.y) - eval(kk, t, s, d.x)) / sc.H[d.i];
                    const std::string label = std::string(l == 0 ? "b" : "h") + std::to_string(eq) + " increment";
                    tally.geq(lhs, rhs, Witness{label, tp, t, s, d.x, d.y, sc.id, 0, 0});
                }
            }
        }
        AssumptionCheck c1 = t1.finish();
        AssumptionCheck c2 = t2.finish();
        AssumptionCheck a3 = c1.violations <= c2.violations ? c1 : c2;
        a3.samples = c1.samples + c2.samples;
        if (c1.violations == 0 || c2.violations == 0) {
            a3.status = AssumptionStatus::verified_on_samples;
            a3.violations = 0;
            a3.witness.reset();
        }
        report.checks.push_back(std::move(a3));
    } else {
        report.checks.push_back(skipped("A3"));
    }

    // (A4): phihat(t') / H(t') >= phihat(t) / H(t) >= 0.
    if (h_valid) {
        Tally tally("A4", plan.rel_tol);
        for (const auto& sc : scen) {
            for (Index i = 0; i <= n; ++i) {
                tally.sample();
                const double v = sc.phihat[i] / sc.H[i];
                tally.geq(v, 0.0, Witness{"phi difference nonnegative", grid.t(i), grid.t(i), 0, 0, 0, sc.id, 0, 0});
                if (i < n) {
                    const double w = sc.phihat[i + 1] / sc.H[i + 1];
                    tally.geq(w, v, Witness{"phi difference nondecreasing", grid.t(i + 1), grid.t(i), 0, 0, 0, sc.id, 0, 0});
                }
            }
        }
        for (std::uint64_t k = 0; k < plan.samples; ++k) {
            const Draw d = draw(k);
            const auto& sc = scen[d.sc];
            tally.sample();
            tally.geq(sc.phihat[d.ip] / sc.H[d.ip], sc.phihat[d.i] / sc.H[d.i],
                      Witness{"phi difference nondecreasing", grid.t(d.ip), grid.t(d.i), 0, 0, 0, sc.id, 0, 0});
        }
        report.checks.push_back(tally.finish());
    } else {
        report.checks.push_back(skipped("A4"));
    }

    // Classical pointwise ordering l1(t, s, y) >= l2(t, s, x) for y >= x; informational.
    {
        Tally tally("classical", plan.rel_tol);
        std::optional<Witness> probe_witness;
        auto test = [&](double t, double s, double x, double y, bool probe) {
            for (int l = 0; l < 2; ++l) {
                const Kernel& k1 = l == 0 ? sys.b1 : sys.h1;
                const Kernel& k2 = l == 0 ? sys.b2 : sys.h2;
                if (!k1 && !k2) continue;
                tally.sample();
                const double lhs = eval(k1, t, s, y);
                const double rhs = eval(k2, t, s, x);
                const std::string label = l == 0 ? "b1(t,s,y) >= b2(t,s,x)" : "h1(t,s,y) >= h2(t,s,x)";
                Witness w{label, t, t, s, x, y, 0, 0, 0};
                if (!tally.geq(lhs, rhs, w) && probe && !probe_witness) {
                    w.lhs = lhs;
                    w.rhs = rhs;
                    probe_witness = w;
                }
            }
        };
        for (const auto& p : plan.probes) {
            if (p.y < p.x || p.s > p.t) throw InvalidArgument("check_assumptions: probe needs s <= t and x <= y");
            test(p.t, p.s, p.x, p.y, true);
        }
        for (std::uint64_t k = 0; k < plan.samples; ++k) {
            const Draw d = draw(k);
            test(grid.t(d.i), grid.t(d.j), d.x, d.y, false);
        }
        if (probe_witness) tally.pin(*probe_witness, probe_witness->lhs, probe_witness->rhs);
        report.checks.push_back(tally.finish());
    }
    return report;
}

Eigen::VectorXd difference_path(const ComparisonFixture& fx, const ScenarioPath& path) {
    const SolutionPath x1 = solve_separable(fx.system.equation(1), fx.phi1, path);
    const SolutionPath x2 = solve_separable(fx.system.equation(2), fx.phi2, path);
    return x1.values - x2.values;
}

ComparisonReport comparison_harness(const ComparisonFixture& fx, const EnsembleSpec& spec, double tol) {
    check_spec(spec);
    if (!(tol >= 0.0)) throw InvalidArgument("comparison_harness: tol must be >= 0");
    const auto controls = realise_controls(spec);
    const std::size_t total = controls.size() * spec.scenarios_per_control;
    struct PerScenario {
        double min = 0.0;
        Index step = 0;
        double x1 = 0.0;
        double x2 = 0.0;
        std::size_t below = 0;
    };
    std::vector<PerScenario> res(total);
    parallel_for(total, spec.options.threads, [&](std::size_t k) {
        const auto loc = locate(spec, k);
        const ScenarioPath path = generate_scenario(spec.grid, controls[loc.control], spec.options.noise, spec.seed, loc.id);
        const SolutionPath x1 = solve_separable(fx.system.equation(1), fx.phi1, path);
        const SolutionPath x2 = solve_separable(fx.system.equation(2), fx.phi2, path);
        const Eigen::VectorXd diff = x1.values - x2.values;
        PerScenario& r = res[k];
        r.min = diff.minCoeff(&r.step);
        r.x1 = x1.values[r.step];
        r.x2 = x2.values[r.step];
        r.below = static_cast<std::size_t>((diff.array() < -tol).count());
    });

    ComparisonReport rep;
    rep.tol = tol;
    rep.scenarios = total;
    rep.min_difference = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < controls.size(); ++c) {
        double cmin = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < spec.scenarios_per_control; ++s) {
            const std::size_t k = c * spec.scenarios_per_control + s;
            const PerScenario& r = res[k];
            cmin = std::min(cmin, r.min);
            rep.violations += r.below;
            if (r.below > 0) ++rep.violating_scenarios;
            if (r.min < rep.min_difference) {
                rep.min_difference = r.min;
                rep.worst = ComparisonWitness{locate(spec, k).id, controls[c].label, r.step, spec.grid.t(r.step), r.x1, r.x2};
            }
        }
        rep.per_control_min.emplace_back(controls[c].label, cmin);
    }
    return rep;
}

double comparison_tolerance(const ComparisonFixture& fx, const TimeGrid& grid, const VolatilityBand& band,
                            double factor) {
    const VolatilityControl control = make_control(grid, band, strategy::ConstantHi{}, 0);
    const ScenarioPath path = generate_scenario(grid, control, NoiseKind::gaussian, 0, 0);
    const double scale = std::max({1.0, sample_forcing(fx.phi1, path).cwiseAbs().maxCoeff(),
                                   sample_forcing(fx.phi2, path).cwiseAbs().maxCoeff()});
    return factor * std::sqrt(grid.max_dt()) * scale;
}

}  // namespace gsvie
