#include "catch_amalgamated.hpp"

#include "gsvie/comparison.hpp"
#include "gsvie/errors.hpp"
#include "gsvie/registry.hpp"
#include "gsvie/rng.hpp"

#include <cmath>
#include <vector>

using namespace gsvie;
using Catch::Approx;

namespace {

const VolatilityBand kBand{0.75, 1.25};

ScenarioPath scenario(Index N, std::uint64_t id, const VolatilityBand& band = kBand) {
    const auto grid = TimeGrid::uniform(1.0, N);
    return generate_scenario(grid, make_control(grid, band, strategy::UniformRandom{}, id), NoiseKind::gaussian, 5,
                             id);
}

// Smooth pair with a nontrivial H; b1 - b2 and phi1 - phi2 are ordered.
ComparisonFixture smooth_fixture() {
    SeparableSystem sys;
    sys.name = "smooth";
    sys.b2 = [](double t, double s, double x) { return -std::sin(x) * std::exp(-(t - s)); };
    sys.b1 = [](double t, double s, double x) { return -std::sin(x) * std::exp(-(t - s)) + 0.5 * t; };
    sys.h2 = [](double, double, double x) { return 0.3 * std::tanh(x); };
    sys.h1 = sys.h2;
    sys.sigma = [](double, double x) { return 0.5 * std::cos(x); };
    sys.H = [](double t, const ScenarioPath&) { return 1.0 + 0.5 * t; };
    sys.m = 1.0;
    sys.M = 1.5;
    sys.L = 2.0;
    sys.rho = Modulus::linear(2.0);
    ForcingProcess phi1{"phi1", [](double t, const ScenarioPath&) { return 1.2 + 0.1 * t; }, Regularity::deterministic};
    return {sys, phi1, ForcingProcess::constant(1.0)};
}

// Kernels that do not depend on their first argument.
ComparisonFixture flat_fixture() {
    SeparableSystem sys;
    sys.name = "flat";
    sys.b2 = [](double, double s, double x) { return -x * std::exp(-s); };
    sys.b1 = [](double, double s, double x) { return -x * std::exp(-s) + 1.0; };
    sys.sigma = [](double, double x) { return 0.4 * x; };
    sys.L = 1.0;
    sys.rho = Modulus::linear(0.0);
    return {sys, ForcingProcess::constant(1.0), ForcingProcess::constant(0.5)};
}

struct Setup {
    ScenarioPath path;
    ComparisonState state;
    LinearizationBase base;
};

Setup setup(const ComparisonFixture& fx, Index N, std::uint64_t id) {
    Setup s{scenario(N, id), {}, {}};
    s.state = solve_pair(fx, s.path);
    s.base = linearization_base(fx, s.state, s.path);
    return s;
}

}  // namespace

TEST_CASE("gamma_n and truncated reciprocal examples") {
    for (int n : {1, 2, 7, 100}) {
        CHECK(gamma_n(0.0, n) == 1.0);
        CHECK(truncated_reciprocal(0.0, n) == 0.0);
    }
    CHECK(gamma_n(0.75, 2) == 0.5);
    CHECK(gamma_n(1.0, 2) == 0.0);
    CHECK(gamma_n(-0.75, 2) == 0.5);
    CHECK(truncated_reciprocal(1.0, 2) == 1.0);
    CHECK(truncated_reciprocal(0.75, 2) == Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(truncated_reciprocal(-0.75, 2) == Approx(-2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("truncation decomposition and bounds") {
    const RandomStream rng(1, 2);
    for (std::uint64_t k = 0; k < 10000; ++k) {
        const int n = 1 + static_cast<int>(200 * rng.uniform(k, 0));
        // mix of scales so every branch is hit
        const double y = (2.0 * rng.uniform(k, 1) - 1.0) * std::pow(10.0, 3.0 * rng.uniform(k, 2) - 3.0);
        const double d = 10.0 * (2.0 * rng.uniform(k, 3) - 1.0);
        const double g = gamma_n(y, n);
        const double r = truncated_reciprocal(y, n);
        REQUIRE(g >= 0.0);
        REQUIRE(g <= 1.0);
        REQUIRE(std::abs(r) <= n * (1.0 + 1e-15));
        REQUIRE(std::abs(g * d + r * y * d - d) <= 4e-16 * std::abs(d) * (1.0 + n * std::abs(y)));
    }
}

TEST_CASE("gamma_n is continuous") {
    for (int n : {1, 3, 10}) {
        double prev_jump = INFINITY;
        for (int m : {1000, 10000, 100000}) {
            double jump = 0.0;
            for (int k = -m; k < m; ++k) {
                const double a = 3.0 * k / m, b = 3.0 * (k + 1) / m;
                jump = std::max(jump, std::abs(gamma_n(b, n) - gamma_n(a, n)));
            }
            CHECK(jump <= n * 3.0 / m + 1e-12);
            CHECK(jump < prev_jump);
            prev_jump = jump;
        }
    }
}

TEST_CASE("comparison state") {
    const auto fx = smooth_fixture();
    const auto s = setup(fx, 64, 3);
    for (Index i = 0; i <= 64; ++i) {
        CHECK(s.state.Xhat(i) == s.state.X1.values(i) / s.state.H(i) - s.state.X2.values(i) / s.state.H(i));
        CHECK(s.state.invH(i) == 1.0 / s.state.H(i));
        CHECK(s.state.phihat(i) == Approx(0.2 + 0.1 * s.path.grid.t(i)));
    }
}

TEST_CASE("quasilinearization decomposition is exact") {
    const auto fx = smooth_fixture();
    for (std::uint64_t id = 0; id < 5; ++id) {
        const auto s = setup(fx, 48, id);
        const Index N = 48;
        const auto run = quasilinearize(s.base, 4);
        for (Index i = 0; i <= N; ++i)
            for (Index j = 0; j <= i; ++j) {
                REQUIRE(std::abs(run.bn(i, j) * s.base.Xhat(j) + run.an(i, j) - s.base.db2(i, j)) <=
                        1e-15 * (1.0 + std::abs(s.base.db2(i, j))));
                REQUIRE(std::abs(run.hn(i, j) * s.base.Xhat(j) + run.cn(i, j) - s.base.dh2(i, j)) <=
                        1e-15 * (1.0 + std::abs(s.base.dh2(i, j))));
            }
        for (Index j = 0; j <= N; ++j)
            REQUIRE(std::abs(run.sigman(j) * s.base.Xhat(j) + run.dn(j) - s.base.dsigma(j)) <=
                    1e-15 * (1.0 + std::abs(s.base.dsigma(j))));
    }
}

TEST_CASE("quasilinearized coefficient bounds") {
    const std::vector<ComparisonFixture> fixtures{smooth_fixture(), *make_system("example-4.8").fixture,
                                                  *make_system("broken-a4").fixture};
    const RandomStream rng(3, 3);
    std::size_t cases = 0;
    for (std::uint64_t k = 0; k < 60; ++k) {
        const auto& fx = fixtures[k % fixtures.size()];
        const auto s = setup(fx, 32, k);
        const int n = 1 + static_cast<int>(64 * rng.uniform(k, 0));
        const auto run = quasilinearize(s.base, n);
        const double L = fx.system.L;
        for (Index i = 0; i <= 32; ++i)
            for (Index j = 0; j <= i; ++j) {
                const double Hs = s.base.H(j);
                const double big = 2.0 * L * Hs * (1 + 1e-12);
                const double small = 2.0 / n * L * Hs * (1 + 1e-12);
                REQUIRE(std::abs(run.bn(i, j)) <= big);
                REQUIRE(std::abs(run.an(i, j)) <= small);
                if (s.base.has_h()) {
                    REQUIRE(std::abs(run.hn(i, j)) <= big);
                    REQUIRE(std::abs(run.cn(i, j)) <= small);
                }
                if (i == j) {
                    REQUIRE(std::abs(run.sigman(j)) <= big);
                    REQUIRE(std::abs(run.dn(j)) <= small);
                }
                ++cases;
            }
    }
    CHECK(cases >= 1000);
}

TEST_CASE("quasilinearize examples") {
    const auto same = *make_system("identical").fixture;
    const auto s = setup(same, 32, 1);
    CHECK(s.base.Xhat.isZero(0.0));
    const auto run = quasilinearize(s.base, 8);
    CHECK(run.bn.isZero(0.0));
    CHECK(run.an.isZero(0.0));
    CHECK(solve_quasilinearized(s.base, run, s.path).values.isZero(0.0));

    const auto fx = smooth_fixture();
    const auto t = setup(fx, 48, 2);
    const auto r = quasilinearize(t.base, 50);
    for (Index j = 0; j <= 48; ++j) {
        if (std::abs(t.base.Xhat(j)) < 2.0 / 50) continue;
        for (Index i = j; i <= 48; ++i) {
            CHECK(r.an(i, j) == 0.0);
            CHECK(r.bn(i, j) * t.base.Xhat(j) == Approx(t.base.db2(i, j)).margin(1e-15));
        }
    }
}

TEST_CASE("coefficients approach the untruncated linearization") {
    const auto fx = smooth_fixture();
    const auto s = setup(fx, 48, 4);
    double prev = INFINITY;
    for (int n : {10, 100, 1000}) {
        const auto run = quasilinearize(s.base, n);
        double err = 0.0;
        for (Index j = 0; j <= 48; ++j) {
            if (s.base.Xhat(j) == 0.0) continue;
            for (Index i = j; i <= 48; ++i)
                err = std::max(err, std::abs(run.bn(i, j) - s.base.db2(i, j) / s.base.Xhat(j)));
        }
        CHECK(err <= prev);
        prev = err;
    }
    CHECK(prev < 1e-12);
}

TEST_CASE("residual-augmented solve reproduces Xhat") {
    for (const auto& fx : {smooth_fixture(), *make_system("example-4.8").fixture}) {
        for (std::uint64_t id = 0; id < 4; ++id) {
            const auto s = setup(fx, 128, id);
            for (int n : {1, 4, 32}) {
                const auto run = quasilinearize(s.base, n);
                const auto x = solve_quasilinearized(s.base, run, s.path, true);
                CHECK((x.values - s.base.Xhat).cwiseAbs().maxCoeff() < 1e-10);
            }
        }
    }
}

TEST_CASE("example-4.8 quasilinearized path at n = 8") {
    const auto fx = *make_system("example-4.8").fixture;
    const auto s = setup(fx, 1024, 0);
    const auto x = solve_quasilinearized(s.base, quasilinearize(s.base, 8), s.path);
    CHECK(x.values.allFinite());
    CHECK((x.values - s.base.Xhat).cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("stopping grid examples") {
    const auto grid = TimeGrid::uniform(1.0, 100);
    const Eigen::VectorXd flat = Eigen::VectorXd::Ones(101);
    const auto sg = build_stopping_grid(0.1, grid, flat, flat);
    REQUIRE(sg.segments() == 10);
    for (int k = 0; k <= 10; ++k) CHECK(sg.tau[k] == Approx(0.1 * k).margin(1e-12));
    for (auto r : sg.triggered_by) CHECK(r == StopReason::delta_cap);

    const auto one = build_stopping_grid(2.0, grid, flat, flat);
    REQUIRE(one.segments() == 1);
    CHECK(one.tau[1] == 1.0);
    CHECK(one.triggered_by[0] == StopReason::horizon);

    Eigen::VectorXd invH(101);
    for (Index i = 0; i <= 100; ++i) invH(i) = 1.0 + grid.t(i);
    const auto h = build_stopping_grid(0.5, grid, invH, flat, StoppingMode::H_only);
    CHECK(h.triggered_by[0] == StopReason::H_jump);

    Eigen::VectorXd ph = flat;
    ph.tail(60).array() += 0.3;
    const auto p = build_stopping_grid(0.25, grid, flat, ph);
    CHECK(p.triggered_by[0] == StopReason::delta_cap);
    CHECK(p.triggered_by[1] == StopReason::phi_jump);
    CHECK(p.nodes[2] == 41);
    CHECK(build_stopping_grid(0.25, grid, flat, ph, StoppingMode::H_only).triggered_by[1] == StopReason::delta_cap);
    CHECK_THROWS_AS(build_stopping_grid(0.0, grid, flat, flat), InvalidArgument);
}

TEST_CASE("stopping grid gaps and freezing errors are bounded") {
    const RandomStream rng(8, 8);
    for (std::uint64_t k = 0; k < 1000; ++k) {
        const Index N = 10 + static_cast<Index>(190 * rng.uniform(k, 0));
        const auto grid = TimeGrid::uniform(0.5 + 2.0 * rng.uniform(k, 1), N);
        const double delta = 0.01 + 0.5 * rng.uniform(k, 2);
        // random-walk paths with occasional jumps
        Eigen::VectorXd invH(N + 1), phihat(N + 1);
        invH(0) = 1.0;
        phihat(0) = 0.0;
        const RandomStream path = rng.split(k);
        for (Index i = 1; i <= N; ++i) {
            invH(i) = std::max(0.2, invH(i - 1) + 0.1 * path.normal(i, 0));
            phihat(i) = phihat(i - 1) + 0.1 * path.normal(i, 1) + (path.uniform(i, 2) < 0.02 ? 0.5 : 0.0);
        }
        const auto mode = k % 2 ? StoppingMode::with_phi : StoppingMode::H_only;
        const auto sg = build_stopping_grid(delta, grid, invH, phihat, mode);
        REQUIRE(sg.tau.front() == 0.0);
        REQUIRE(sg.tau.back() == grid.horizon());
        for (std::size_t q = 1; q < sg.tau.size(); ++q) {
            REQUIRE(sg.tau[q] > sg.tau[q - 1]);
            REQUIRE(sg.tau[q] - sg.tau[q - 1] <= delta + grid.max_dt() + 1e-12);
        }
        const Eigen::VectorXd fi = freeze(sg, invH);
        const Eigen::VectorXd fp = freeze(sg, phihat);
        double mod_i = 0.0, mod_p = 0.0;
        for (Index i = 1; i <= N; ++i) {
            mod_i = std::max(mod_i, std::abs(invH(i) - invH(i - 1)));
            mod_p = std::max(mod_p, std::abs(phihat(i) - phihat(i - 1)));
        }
        for (Index i = 0; i <= N; ++i) {
            REQUIRE(std::abs(fi(i) - invH(i)) <= delta + mod_i);
            if (mode == StoppingMode::with_phi) REQUIRE(std::abs(fp(i) - phihat(i)) <= delta + mod_p);
        }
        for (Index q : sg.nodes) REQUIRE(fp(q) == phihat(q));
    }
}

TEST_CASE("freezing") {
    const auto grid = TimeGrid::uniform(1.0, 20);
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(21, 0.0, 2.0);
    const auto sg = build_stopping_grid(0.2, grid, Eigen::VectorXd::Ones(21), Eigen::VectorXd::Zero(21));
    const Eigen::VectorXd fx = freeze(sg, x);
    for (std::size_t k = 0; k < sg.nodes.size(); ++k) CHECK(fx(sg.nodes[k]) == x(sg.nodes[k]));
    CHECK(fx(5) == x(4));
    CHECK(freeze(sg, Eigen::VectorXd::Constant(21, 3.0)) == Eigen::VectorXd::Constant(21, 3.0));

    KernelMatrix K = KernelMatrix::Zero(21, 21);
    for (Index i = 0; i <= 20; ++i)
        for (Index j = 0; j <= i; ++j) K(i, j) = 100.0 * i + j;
    const KernelMatrix F = freeze_kernel(sg, K);
    CHECK(F(5, 2) == K(4, 2));
    CHECK(F(5, 5) == K(5, 5));  // tau_k v s = s
    CHECK(F(7, 6) == K(6, 6));
    CHECK(F(2, 5) == 0.0);
}

TEST_CASE("frozen solve with every node a stopping time equals the live solve") {
    for (const auto& fx : {smooth_fixture(), *make_system("example-4.8").fixture}) {
        const auto s = setup(fx, 100, 6);
        const auto run = quasilinearize(s.base, 8);
        const auto sg = build_stopping_grid(0.005, s.path.grid, s.base.invH, s.base.phihat);
        REQUIRE(sg.segments() == 100);
        CHECK(solve_frozen(s.base, run, sg, s.path).values == solve_quasilinearized(s.base, run, s.path).values);
    }
}

TEST_CASE("freezing is the identity for t-independent inputs") {
    const auto fx = flat_fixture();
    const auto s = setup(fx, 100, 7);
    const auto run = quasilinearize(s.base, 8);
    const auto live = solve_quasilinearized(s.base, run, s.path);
    for (double delta : {0.05, 0.2, 0.7}) {
        const auto sg = build_stopping_grid(delta, s.path.grid, s.base.invH, s.base.phihat);
        CHECK(solve_frozen(s.base, run, sg, s.path).values == live.values);
    }
}

TEST_CASE("convergence study on identical systems is zero") {
    EnsembleSpec spec{TimeGrid::uniform(1.0, 32), kBand, {strategy::ConstantLo{}, strategy::ConstantHi{}}, 5, 1, {}};
    const auto tab = convergence_study_n(*make_system("identical").fixture, spec, {2, 4, 8});
    for (const auto& e : tab.estimates) CHECK(e.value == 0.0);
    const auto two = two_approximation_study(*make_system("identical").fixture, spec, {4, 8}, {0.2, 0.1});
    for (const auto& e : two.entries) CHECK(e.estimate.value == 0.0);
    CHECK(two.at(8, 0.1).n == 8);
    CHECK(two.at(8, 0.1).delta == 0.1);
}

TEST_CASE("convergence study is deterministic across thread counts") {
    EnsembleSpec spec{TimeGrid::uniform(1.0, 64), kBand, {strategy::ConstantLo{}, strategy::UniformRandom{}}, 6, 3, {}};
    const auto fx = *make_system("example-4.8").fixture;
    const auto a = convergence_study_n(fx, spec, {2, 8});
    spec.options.threads = 3;
    const auto b = convergence_study_n(fx, spec, {2, 8});
    for (std::size_t q = 0; q < a.estimates.size(); ++q) CHECK(a.estimates[q].value == b.estimates[q].value);
    CHECK(a.slope == b.slope);
}

TEST_CASE("loglog fit") {
    const auto [slope, intercept] = loglog_fit({1, 2, 4, 8}, {3, 0.75, 0.1875, 0.046875});
    CHECK(slope == Approx(-2.0).epsilon(1e-12));
    CHECK(intercept == Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(std::isnan(loglog_fit({1, 2}, {1, 0}).first));
}

TEST_CASE("example-4.8 assumptions") {
    const auto e = make_system("example-4.8");
    SamplingPlan plan;
    plan.grid = TimeGrid::uniform(1.0, 256);
    plan.band = kBand;
    plan.probes = e.probes;
    const auto rep = check_assumptions(*e.fixture, plan);
    for (const char* name : {"H2", "H3", "A1", "A2", "A3", "A4"})
        CHECK(rep.get(name).status == AssumptionStatus::verified_on_samples);
    CHECK(rep.get("A2").samples >= 10000);
    const auto& classical = rep.get("classical");
    REQUIRE(classical.status == AssumptionStatus::violated);
    REQUIRE(classical.witness);
    CHECK(classical.witness->lhs == Approx(-1.0).margin(1e-15));
    CHECK(classical.witness->rhs == 0.0);
    CHECK(classical.witness->x < 0.0);
    CHECK(classical.witness->y == Approx(std::exp(classical.witness->t)));
    CHECK(rep.comparison_applicable());
}

TEST_CASE("identical systems satisfy the assumptions with equality") {
    SamplingPlan plan;
    plan.grid = TimeGrid::uniform(1.0, 64);
    plan.band = kBand;
    const auto rep = check_assumptions(*make_system("identical").fixture, plan);
    for (const char* name : {"A2", "A3", "A4"}) CHECK(rep.get(name).status == AssumptionStatus::verified_on_samples);
}

TEST_CASE("violations carry witnesses") {
    SamplingPlan plan;
    plan.grid = TimeGrid::uniform(1.0, 64);
    plan.band = kBand;
    plan.samples = 2000;

    auto fx = smooth_fixture();
    fx.system.H = [](double t, const ScenarioPath&) { return t < 0.5 ? 1.0 : 0.0; };
    const auto a1 = check_assumptions(fx, plan);
    REQUIRE(a1.get("A1").status == AssumptionStatus::violated);
    REQUIRE(a1.get("A1").witness);
    CHECK(a1.get("A1").witness->t >= 0.5);
    CHECK_FALSE(a1.comparison_applicable());

    const auto a4 = check_assumptions(*make_system("broken-a4").fixture, plan);
    REQUIRE(a4.get("A4").status == AssumptionStatus::violated);
    CHECK(a4.get("A4").witness);

    auto wrong_l = smooth_fixture();
    wrong_l.system.L = 0.01;
    const auto h2 = check_assumptions(wrong_l, plan);
    REQUIRE(h2.get("H2").status == AssumptionStatus::violated);
    CHECK(h2.get("H2").witness);

    for (const auto* rep : {&a1, &a4, &h2})
        for (const auto& c : rep->checks)
            if (c.status == AssumptionStatus::violated) CHECK(c.witness.has_value());
}

TEST_CASE("harness") {
    EnsembleSpec spec{TimeGrid::uniform(1.0, 128), kBand,
                      {strategy::ConstantLo{}, strategy::ConstantHi{}, strategy::UniformRandom{}}, 10, 2, {}};
    const auto same = comparison_harness(*make_system("identical").fixture, spec, 0.0);
    CHECK(same.min_difference == 0.0);
    CHECK(same.violations == 0);
    CHECK(same.scenarios == 30);

    const auto broken = comparison_harness(*make_system("broken-a4").fixture, spec, 0.01);
    CHECK(broken.violations > 0);
    CHECK(broken.violating_scenarios == 30);
    CHECK(broken.min_difference <= -0.5);
    CHECK(broken.worst.t < 0.25);

    const auto fx = smooth_fixture();
    const auto smooth = comparison_harness(fx, spec, comparison_tolerance(fx, spec.grid, spec.band));
    CHECK(smooth.violations == 0);
}

TEST_CASE("swapping the systems negates the difference path") {
    const auto fx = *make_system("example-4.8").fixture;
    for (std::uint64_t id = 0; id < 20; ++id) {
        const auto p = scenario(128, id);
        CHECK(difference_path(fx.swapped(), p) == -difference_path(fx, p));
        CHECK(difference_path(smooth_fixture().swapped(), p) == -difference_path(smooth_fixture(), p));
    }
}

TEST_CASE("comparison tolerance") {
    const auto fx = *make_system("example-4.8").fixture;
    CHECK(comparison_tolerance(fx, TimeGrid::uniform(1.0, 1024), kBand) == 0.3125);
    CHECK(comparison_tolerance(fx, TimeGrid::uniform(1.0, 256), kBand, 1.0) == 0.0625);
}
