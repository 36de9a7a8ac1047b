#include "gsvie/cli.hpp"

#include "gsvie/comparison.hpp"
#include "gsvie/config.hpp"
#include "gsvie/errors.hpp"
#include "gsvie/expectation.hpp"
#include "gsvie/io.hpp"
#include "gsvie/parallel.hpp"
#include "gsvie/registry.hpp"
#include "gsvie/volterra.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <thread>

namespace gsvie::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string command;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool force = false;
};

struct Context {
    Options opts;
    ExperimentConfig cfg;
    std::uint64_t seed = 0;
    std::string seed_source;
    fs::path out_dir;
    TimeGrid grid;
    SystemRegistryEntry entry;
    std::ostream& log;

    bool wants(const std::string& format) const {
        return std::find(cfg.output.formats.begin(), cfg.output.formats.end(), format) != cfg.output.formats.end();
    }
    unsigned threads() const { return opts.threads; }
};

std::optional<std::uint64_t> seed_from_env() {
    const char* v = std::getenv("GSVIE_SEED");
    if (!v || !*v) return std::nullopt;
    std::uint64_t s = 0;
    const std::string text(v);
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), s);
    if (ec != std::errc() || p != text.data() + text.size())
        throw ConfigError("GSVIE_SEED", "not an unsigned 64-bit integer: '" + text + "'");
    return s;
}

Json metadata(const Context& ctx) {
    Json params = Json::object();
    for (const auto& [k, v] : ctx.entry.parameters) params[k] = v;
    return Json{{"schema_version", kSchemaVersion},
                {"command", ctx.opts.command},
                {"system", ctx.entry.name},
                {"note", ctx.entry.note},
                {"parameters", params},
                {"grid", {{"T", ctx.cfg.T}, {"N", ctx.cfg.N}}},
                {"band", {{"sigma_lo", ctx.cfg.band.sigma_lo}, {"sigma_hi", ctx.cfg.band.sigma_hi}}},
                {"seed", ctx.seed},
                {"seed_source", ctx.seed_source},
                {"scenarios_per_control", ctx.cfg.run.scenarios},
                {"noise", to_string(ctx.cfg.run.noise)},
                {"config", to_json(ctx.cfg)}};
}

const ComparisonFixture& require_fixture(const Context& ctx) {
    if (!ctx.entry.fixture)
        throw ConfigError("/system/name", "'" + ctx.entry.name + "' is not a separable pair");
    return *ctx.entry.fixture;
}

EnsembleSpec ensemble(const Context& ctx) {
    EnsembleSpec spec;
    spec.grid = ctx.grid;
    spec.band = ctx.cfg.band;
    spec.controls = ctx.cfg.controls;
    spec.scenarios_per_control = ctx.cfg.run.scenarios;
    spec.seed = ctx.seed;
    spec.options = SweepOptions{ctx.cfg.run.noise, ctx.threads()};
    return spec;
}

SamplingPlan sampling_plan(const Context& ctx) {
    SamplingPlan plan;
    plan.grid = ctx.grid;
    plan.band = ctx.cfg.band;
    plan.samples = ctx.cfg.run.samples;
    plan.scenarios = ctx.cfg.run.assumption_scenarios;
    plan.x_range = ctx.cfg.run.x_range;
    plan.seed = ctx.seed;
    plan.probes = ctx.entry.probes;
    return plan;
}

int cmd_simulate(Context& ctx) {
    const auto& run = ctx.cfg.run;
    const std::string method = run.method.empty() ? "direct" : run.method;
    if (method != "direct" && method != "picard" && method != "separable")
        throw ConfigError("/run/method", "simulate supports direct, picard or separable");
    if ((method == "separable" || run.equation == 2) && !ctx.entry.fixture)
        throw ConfigError(method == "separable" ? "/run/method" : "/run/equation",
                          "'" + ctx.entry.name + "' is not a separable pair");

    EnsembleSpec spec = ensemble(ctx);
    const auto controls = realise_controls(spec);
    const std::size_t total = controls.size() * spec.scenarios_per_control;

    PicardConfig pc;
    pc.beta = run.beta.value_or(beta_default(ctx.cfg.band, ctx.entry.coeffs.L, ctx.cfg.T));
    pc.tol = run.tol;
    pc.max_iter = run.max_iter;
    pc.initial_guess = run.initial_guess == "zero" ? InitialGuess::zero : InitialGuess::phi;
    pc.stopping = run.stopping == "weighted" ? StoppingRule::weighted : StoppingRule::node_sup;

    std::vector<SolutionPath> solutions(total);
    std::vector<int> iterations(total, 0);
    std::vector<ScenarioPath> scenarios(ctx.cfg.output.scenarios ? total : 0);
    parallel_for(total, ctx.threads(), [&](std::size_t k) {
        const std::size_t c = k / spec.scenarios_per_control;
        const std::size_t s = k % spec.scenarios_per_control;
        const ScenarioPath path = generate_scenario(ctx.grid, controls[c], run.noise, ctx.seed,
                                                    scenario_id(c, s, spec.scenarios_per_control));
        if (method == "picard") {
            PicardResult r = solve_picard(ctx.entry.coeffs, ctx.entry.phi, path, pc);
            iterations[k] = r.iterations;
            solutions[k] = std::move(r.solution);
        } else if (method == "separable" || run.equation == 2) {
            const ComparisonFixture& fx = *ctx.entry.fixture;
            solutions[k] = solve_separable(fx.system.equation(run.equation), run.equation == 1 ? fx.phi1 : fx.phi2, path);
        } else {
            solutions[k] = solve_direct(ctx.entry.coeffs, ctx.entry.phi, path);
        }
        if (!scenarios.empty()) scenarios[k] = path;
    });

    if (ctx.wants("csv")) {
        std::ostringstream os;
        write_solutions_csv(os, ctx.grid, solutions);
        write_file(ctx.out_dir / "solutions.csv", os.str());
        if (!scenarios.empty()) {
            std::ostringstream ss;
            ss << csv_schema_line();
            write_scenarios_csv(ss, scenarios);
            write_file(ctx.out_dir / "scenarios.csv", ss.str());
        }
    }
    if (ctx.wants("json")) {
        Json meta = metadata(ctx);
        meta["method"] = method;
        meta["coefficients"] = ctx.entry.coeffs.name;
        meta["controls"] = Json::array();
        for (const auto& c : controls) meta["controls"].push_back(c.label);
        if (method == "picard") {
            meta["beta"] = pc.beta;
            meta["iterations"] = iterations;
        }
        write_file(ctx.out_dir / "metadata.json", dump(meta));
    }
    ctx.log << fmt::format("simulate: {} paths written to {}\n", total, ctx.out_dir.string());
    return kOk;
}

int cmd_expectation(Context& ctx) {
    const auto& run = ctx.cfg.run;
    const std::string method = run.method.empty() ? "monte_carlo" : run.method;
    if (method != "monte_carlo" && method != "lattice" && method != "both")
        throw ConfigError("/run/method", "expectation supports monte_carlo, lattice or both");
    const FunctionalSpec& fs_ = run.functional;
    const double p = fs_.power;

    Json result{{"schema_version", kSchemaVersion}};
    std::string fname;
    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> on_path;
    if (fs_.kind == "power") {
        fname = fmt::format("B_T^{}", p);
        on_path = [p](const Eigen::VectorXd& B, const Eigen::VectorXd&) { return std::pow(B[B.size() - 1], p); };
    } else if (fs_.kind == "abs") {
        fname = "|B_T|";
        on_path = [](const Eigen::VectorXd& B, const Eigen::VectorXd&) { return std::abs(B[B.size() - 1]); };
    } else if (fs_.kind == "max") {
        fname = "max_t B_t";
        on_path = [](const Eigen::VectorXd& B, const Eigen::VectorXd&) { return B.maxCoeff(); };
    } else {
        fname = "<B>_T";
        on_path = [](const Eigen::VectorXd&, const Eigen::VectorXd& QV) { return QV[QV.size() - 1]; };
    }
    result["functional"] = fname;

    if (method != "monte_carlo") {
        double value = 0.0;
        try {
            if (fs_.kind == "power") value = lattice_expectation([p](double b) { return std::pow(b, p); }, ctx.grid, ctx.cfg.band);
            else if (fs_.kind == "abs") value = lattice_expectation([](double b) { return std::abs(b); }, ctx.grid, ctx.cfg.band);
            else value = lattice_expectation_path(on_path, ctx.grid, ctx.cfg.band);
        } catch (const SizeLimitError& e) {
            throw ConfigError("/grid/N", e.what());
        }
        result["lattice"] = value;
    }
    if (method != "lattice") {
        EnsembleSpec spec = ensemble(ctx);
        const auto controls = realise_controls(spec);
        const Functional f{fname, [on_path](const ScenarioPath& path) { return on_path(path.B, path.QV); }};
        const RobustEstimate est =
            estimate_upper_expectation(f, ctx.grid, controls, spec.scenarios_per_control, ctx.seed, spec.options);
        result["monte_carlo"] = to_json(est);
    }
    if (ctx.wants("json")) {
        write_file(ctx.out_dir / "expectation.json", dump(result));
        Json meta = metadata(ctx);
        meta["method"] = method;
        write_file(ctx.out_dir / "metadata.json", dump(meta));
    }
    ctx.log << "expectation: " << result.dump() << "\n";
    return kOk;
}

int report_assumptions(Context& ctx, const AssumptionReport& rep) {
    if (ctx.wants("json")) write_file(ctx.out_dir / "assumptions.json", dump(to_json(rep)));
    for (const auto& c : rep.checks) {
        ctx.log << fmt::format("  {:<10} {:<20} samples={} violations={}\n", c.name, to_string(c.status), c.samples,
                               c.violations);
        if (c.witness)
            ctx.log << fmt::format("             witness: {} (t'={}, t={}, s={}, x={}, y={}, scenario={}) {} < {}\n",
                                   c.witness->detail, c.witness->t_prime, c.witness->t, c.witness->s, c.witness->x,
                                   c.witness->y, c.witness->scenario, c.witness->lhs, c.witness->rhs);
    }
    return rep.comparison_applicable() ? kOk : kComparisonViolation;
}

int cmd_check_assumptions(Context& ctx) {
    const ComparisonFixture& fx = require_fixture(ctx);
    ctx.log << "check-assumptions: " << fx.system.name << "\n";
    const int code = report_assumptions(ctx, check_assumptions(fx, sampling_plan(ctx)));
    if (ctx.wants("json")) write_file(ctx.out_dir / "metadata.json", dump(metadata(ctx)));
    return code;
}

int cmd_compare(Context& ctx) {
    const ComparisonFixture& fx = require_fixture(ctx);
    ctx.log << "compare: " << fx.system.name << "\n";
    const int acode = report_assumptions(ctx, check_assumptions(fx, sampling_plan(ctx)));
    Json meta = metadata(ctx);
    if (acode != kOk && !ctx.opts.force) {
        ctx.log << "compare: an assumption is violated; harness not run (use --force to run it anyway)\n";
        meta["harness"] = "skipped";
        if (ctx.wants("json")) write_file(ctx.out_dir / "metadata.json", dump(meta));
        return kComparisonViolation;
    }
    const double tol = comparison_tolerance(fx, ctx.grid, ctx.cfg.band, ctx.cfg.run.tol_factor);
    const ComparisonReport rep = comparison_harness(fx, ensemble(ctx), tol);
    meta["harness"] = ctx.opts.force && acode != kOk ? "forced" : "run";
    if (ctx.wants("json")) {
        write_file(ctx.out_dir / "comparison.json", dump(to_json(rep)));
        write_file(ctx.out_dir / "metadata.json", dump(meta));
    }
    ctx.log << fmt::format("compare: min(X1 - X2) = {} over {} scenarios, tol = {}, violations = {}\n",
                           rep.min_difference, rep.scenarios, tol, rep.violations);
    if (rep.violations > 0) {
        ctx.log << fmt::format("compare: worst at scenario {} ({}), step {}, t = {}: X1 = {}, X2 = {}\n",
                               rep.worst.scenario, rep.worst.control, rep.worst.step, rep.worst.t, rep.worst.X1,
                               rep.worst.X2);
        return kComparisonViolation;
    }
    return acode;
}

int cmd_convergence(Context& ctx) {
    const ComparisonFixture& fx = require_fixture(ctx);
    const auto& run = ctx.cfg.run;
    const EnsembleSpec spec = ensemble(ctx);
    const ConvergenceTable nt = convergence_study_n(fx, spec, run.ns);
    std::optional<TwoApproxTable> two;
    if (!run.deltas.empty()) {
        const StoppingMode mode = run.stopping_mode == "H_only" ? StoppingMode::H_only : StoppingMode::with_phi;
        two = two_approximation_study(fx, spec, run.ns, run.deltas, mode);
    }
    if (ctx.wants("csv")) {
        std::ostringstream os;
        write_convergence_csv(os, &nt, two ? &*two : nullptr);
        write_file(ctx.out_dir / "convergence.csv", os.str());
    }
    if (ctx.wants("json")) {
        Json slopes{{"schema_version", kSchemaVersion}, {"n_study", {{"slope", nt.slope}, {"intercept", nt.intercept}}}};
        if (two) {
            // per delta: slope of the error against n
            Json per_delta = Json::array();
            for (double d : two->deltas) {
                std::vector<double> xs, ys;
                for (int n : two->ns) {
                    xs.push_back(n);
                    ys.push_back(two->at(n, d).estimate.value);
                }
                Json row{{"delta", d}};
                if (xs.size() >= 2) {
                    const auto [slope, intercept] = loglog_fit(xs, ys);
                    row["slope"] = std::isfinite(slope) ? Json(slope) : Json(nullptr);
                    row["intercept"] = std::isfinite(intercept) ? Json(intercept) : Json(nullptr);
                }
                per_delta.push_back(std::move(row));
            }
            slopes["two_approximation"] = per_delta;
        }
        if (!std::isfinite(nt.slope)) slopes["n_study"]["slope"] = nullptr;
        if (!std::isfinite(nt.intercept)) slopes["n_study"]["intercept"] = nullptr;
        write_file(ctx.out_dir / "slopes.json", dump(slopes));
        write_file(ctx.out_dir / "metadata.json", dump(metadata(ctx)));
    }
    ctx.log << fmt::format("convergence: slope in n = {}\n", nt.slope);
    return kOk;
}

int dispatch(Context& ctx) {
    const std::string& c = ctx.opts.command;
    if (c == "simulate") return cmd_simulate(ctx);
    if (c == "expectation") return cmd_expectation(ctx);
    if (c == "compare") return cmd_compare(ctx);
    if (c == "convergence") return cmd_convergence(ctx);
    return cmd_check_assumptions(ctx);
}

int execute(const Options& opts, std::ostream& out, std::ostream& err) {
    try {
        const ExperimentConfig cfg = parse_config(load_config_tree(opts.config));
        if (!cfg.command.empty() && cfg.command != opts.command)
            throw ConfigError("/command", "config is for '" + cfg.command + "', not '" + opts.command + "'");
        Context ctx{opts, cfg, cfg.run.seed, "config", {}, {}, {}, out};
        if (opts.seed) {
            ctx.seed = *opts.seed;
            ctx.seed_source = "flag";
        } else if (auto env = seed_from_env()) {
            ctx.seed = *env;
            ctx.seed_source = "env";
        }
        if (ctx.opts.threads == 0) ctx.opts.threads = std::max(1u, std::thread::hardware_concurrency());
        ctx.out_dir = opts.out.empty() ? fs::path(cfg.output.directory) : fs::path(opts.out);
        try {
            cfg.band.validate();
            ctx.grid = TimeGrid::uniform(cfg.T, cfg.N);
        } catch (const InvalidArgument& e) {
            throw ConfigError("/grid", e.what());
        }
        try {
            ctx.entry = make_system(cfg.system, cfg.parameters);
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidArgument& e) {
            throw ConfigError("/system", e.what());
        }
        return dispatch(ctx);
    } catch (const ConfigError& e) {
        err << "config error at " << e.field() << ": " << e.what() << "\n";
        return kConfigError;
    } catch (const NumericalBlowup& e) {
        err << fmt::format("numerical blowup in scenario {} at step {} (value {})\n", e.scenario(), e.step(), e.value());
        return kBlowup;
    } catch (const ScenarioFailure& e) {
        err << "scenario " << e.scenario() << " failed: " << e.what() << "\n";
        return kFailure;
    } catch (const NonConvergence& e) {
        err << "no convergence: " << e.what() << "\n";
        return kFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Simulation and verification toolkit for Volterra equations under volatility uncertainty", "gsvie"};
    app.require_subcommand(1);
    Options opts;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "solve the configured system on every scenario and dump the paths"},
        {"expectation", "estimate a sublinear expectation by Monte Carlo and/or the lattice"},
        {"compare", "check assumptions, then test the pathwise ordering X1 >= X2"},
        {"convergence", "quasilinearization and stopping-time freezing error tables"},
        {"check-assumptions", "sample the structural assumptions of a separable pair"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config, "experiment config (YAML or JSON)")->required();
        sub->add_option("--out", opts.out, "output directory (overrides output.directory)");
        sub->add_option("--seed", opts.seed, "global seed (overrides GSVIE_SEED and run.seed)");
        sub->add_option("--threads", opts.threads, "worker threads (0 = hardware concurrency)");
        sub->add_flag("--force", opts.force, "run the comparison harness even if an assumption is violated");
        sub->callback([&opts, name = name] { opts.command = name; });
    }
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }
    return execute(opts, out, err);
}

}  // namespace gsvie::cli
