#include "gsvie/registry.hpp"

#include "gsvie/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gsvie {

namespace {

Parameters merge(const std::string& name, Parameters defaults, const Parameters& overrides) {
    for (const auto& [k, v] : overrides) {
        auto it = defaults.find(k);
        if (it == defaults.end()) throw InvalidArgument("system '" + name + "' has no parameter '" + k + "'");
        if (!std::isfinite(v)) throw InvalidArgument("system '" + name + "': parameter '" + k + "' is not finite");
        it->second = v;
    }
    return defaults;
}

SystemRegistryEntry linear_sde(const Parameters& p) {
    const double mu = p.at("mu");
    const double c = p.at("c");
    const double x0 = p.at("x0");
    SystemRegistryEntry e;
    e.name = "linear-sde";
    e.parameters = p;
    e.note = "geometric Brownian motion written as a Volterra equation; closed form on the driving path";
    e.coeffs.name = e.name;
    e.coeffs.b = [mu](double, double, double x) { return mu * x; };
    e.coeffs.sigma = [c](double, double, double x) { return c * x; };
    e.coeffs.L = std::abs(mu) + std::abs(c);
    e.coeffs.rho = Modulus::linear(1.0);
    e.phi = ForcingProcess::constant(x0);
    e.default_band = VolatilityBand{1.0, 1.0};
    return e;
}

SystemRegistryEntry exp_kernel(const Parameters& p) {
    const double kb = p.at("b");
    const double kh = p.at("h");
    const double ks = p.at("sigma");
    const double R = p.at("R");
    SystemRegistryEntry e;
    e.name = "exp-kernel";
    e.parameters = p;
    e.note = "exponentially fading memory in all three coefficients";
    e.coeffs.name = e.name;
    e.coeffs.b = [kb](double t, double s, double x) { return kb * std::exp(-(t - s)) * x; };
    e.coeffs.h = [kh](double t, double s, double x) { return kh * std::exp(-2.0 * (t - s)) * x; };
    e.coeffs.sigma = [ks](double t, double s, double x) { return ks * std::exp(-(t - s)) * x; };
    e.coeffs.L = std::abs(kb) + std::abs(kh) + std::abs(ks);
    // |e^{-a(t'-s)} - e^{-a(t-s)}| <= a |t' - t|; linear in x, so the modulus holds for |x| <= R.
    const double slope = (std::abs(kb) + 2.0 * std::abs(kh) + std::abs(ks)) * R;
    e.coeffs.rho = Modulus::linear(slope);
    e.coeffs.holder = HolderConstants{std::abs(ks) * R, 1.0};
    e.phi = ForcingProcess::constant(p.at("x0"));
    e.default_band = VolatilityBand{0.5, 1.0};
    return e;
}

// b_1 = b_2 + shift with b_2 = -2 (x v 0) e^{-t}, h = 0, sigma(s, x) = x, H = 1.
SystemRegistryEntry kinked_pair(const std::string& name, const Parameters& p, double shift, double phi1,
                                double phi2, std::string note) {
    const double R = p.at("R");
    SystemRegistryEntry e;
    e.name = name;
    e.parameters = p;
    e.note = std::move(note);

    SeparableSystem sys;
    sys.name = name;
    sys.b2 = [](double t, double, double x) { return x > 0.0 ? -2.0 * x * std::exp(-t) : 0.0; };
    sys.b1 = [shift](double t, double, double x) { return (x > 0.0 ? -2.0 * x * std::exp(-t) : 0.0) + shift; };
    sys.sigma = [](double, double x) { return x; };
    sys.m = 1.0;
    sys.M = 1.0;
    sys.L = 3.0;
    // |x v 0| |e^{-t'} - e^{-t}| <= R |t' - t| on |x| <= R.
    sys.rho = Modulus::linear(2.0 * R);

    ComparisonFixture fx{sys, ForcingProcess::constant(phi1), ForcingProcess::constant(phi2)};
    e.coeffs.name = name;
    e.coeffs.b = sys.b1;
    e.coeffs.sigma = [](double, double, double x) { return x; };
    e.coeffs.L = sys.L;
    e.coeffs.rho = sys.rho;
    e.phi = fx.phi1;
    e.fixture = std::move(fx);
    e.default_band = VolatilityBand{1.0, 1.0};
    for (double t : {0.5, 1.0}) e.probes.push_back(Probe{t, 0.5 * t, -1.0, std::exp(t)});
    return e;
}

}  // namespace

const std::vector<std::string>& registry_names() {
    static const std::vector<std::string> names{"linear-sde", "exp-kernel", "example-4.8", "identical", "broken-a4"};
    return names;
}

Parameters registry_defaults(const std::string& name) {
    if (name == "linear-sde") return {{"mu", 0.05}, {"c", 0.2}, {"x0", 1.0}};
    if (name == "exp-kernel") return {{"b", 1.0}, {"h", 0.1}, {"sigma", 0.3}, {"x0", 1.0}, {"R", 10.0}};
    if (name == "example-4.8" || name == "identical") return {{"R", 10.0}};
    if (name == "broken-a4") return {{"R", 10.0}, {"phi1", 0.5}, {"phi2", 1.0}};
    throw InvalidArgument("unknown system '" + name + "'");
}

SystemRegistryEntry make_system(const std::string& name, const Parameters& overrides) {
    const Parameters p = merge(name, registry_defaults(name), overrides);
    if (name == "linear-sde") return linear_sde(p);
    if (name == "exp-kernel") return exp_kernel(p);
    if (name == "example-4.8")
        return kinked_pair(name, p, 1.0, 1.0, 1.0,
                           "drifts differ by one and are not differentiable at 0; equal forcings");
    if (name == "identical") return kinked_pair(name, p, 0.0, 1.0, 1.0, "two copies of the same equation");
    return kinked_pair(name, p, 1.0, p.at("phi1"), p.at("phi2"),
                       "drifts as example-4.8 with the forcings ordered the wrong way at t = 0");
}

}  // namespace gsvie
