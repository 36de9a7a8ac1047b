#include "gsvie/io.hpp"

#include "gsvie/errors.hpp"
#include "gsvie/format.hpp"

#include <cmath>
#include <fstream>

namespace gsvie {

namespace {

Json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

}  // namespace

Json to_json(const ControlMean& m) {
    return Json{{"label", m.label}, {"mean", number(m.mean)}, {"se", number(m.se)}, {"n", m.n}};
}

Json to_json(const RobustEstimate& e) {
    Json per = Json::array();
    for (const auto& m : e.per_control) per.push_back(to_json(m));
    Json j{{"functional", e.functional},
           {"value", number(e.value)},
           {"se", e.per_control.empty() ? Json(nullptr) : number(e.se())},
           {"argmax", e.per_control.empty() ? Json(nullptr) : Json(e.argmax().label)},
           {"scenarios_per_control", e.scenarios_per_control},
           {"seed", e.seed},
           {"controls", per}};
    return j;
}

Json to_json(const Witness& w) {
    return Json{{"detail", w.detail}, {"t_prime", w.t_prime}, {"t", w.t},     {"s", w.s},     {"x", w.x},
                {"y", w.y},           {"scenario", w.scenario}, {"lhs", number(w.lhs)}, {"rhs", number(w.rhs)}};
}

Json to_json(const AssumptionReport& r) {
    Json checks = Json::array();
    for (const auto& c : r.checks) {
        Json j{{"name", c.name}, {"status", to_string(c.status)}, {"samples", c.samples}, {"violations", c.violations}};
        j["witness"] = c.witness ? to_json(*c.witness) : Json(nullptr);
        checks.push_back(std::move(j));
    }
    return Json{{"schema_version", kSchemaVersion},
                {"comparison_applicable", r.comparison_applicable()},
                {"checks", checks}};
}

Json to_json(const ComparisonReport& r) {
    Json per = Json::object();
    for (const auto& [label, v] : r.per_control_min) per[label] = number(v);
    return Json{{"schema_version", kSchemaVersion},
                {"min_difference", number(r.min_difference)},
                {"tol", r.tol},
                {"violations", r.violations},
                {"violating_scenarios", r.violating_scenarios},
                {"scenarios", r.scenarios},
                {"worst",
                 {{"scenario", r.worst.scenario},
                  {"control", r.worst.control},
                  {"step", r.worst.step},
                  {"t", r.worst.t},
                  {"X1", number(r.worst.X1)},
                  {"X2", number(r.worst.X2)}}},
                {"per_control_min", per}};
}

Json to_json(const ConvergenceTable& t) {
    Json rows = Json::array();
    for (std::size_t q = 0; q < t.ns.size(); ++q) {
        rows.push_back(Json{{"n", t.ns[q]}, {"estimate", to_json(t.estimates[q])}});
    }
    return Json{{"slope", number(t.slope)}, {"intercept", number(t.intercept)}, {"rows", rows}};
}

Json to_json(const StoppingGrid& g) {
    Json reasons = Json::array();
    for (auto r : g.triggered_by) reasons.push_back(to_string(r));
    return Json{{"delta", g.delta}, {"tau", g.tau}, {"nodes", g.nodes}, {"triggered_by", reasons}};
}

std::string csv_schema_line() { return "# gsvie schema_version " + std::to_string(kSchemaVersion) + "\n"; }

void write_solutions_csv(std::ostream& os, const TimeGrid& grid, std::span<const SolutionPath> paths) {
    os << csv_schema_line() << "scenario_id,step,t,X\n";
    for (const auto& p : paths) {
        if (p.values.size() != grid.steps() + 1) throw InvalidArgument("write_solutions_csv: path not on the grid");
        for (Index i = 0; i <= grid.steps(); ++i)
            os << p.scenario_id << ',' << i << ',' << fmt17(grid.t(i)) << ',' << fmt17(p.values[i]) << '\n';
    }
}

namespace {

void estimate_rows(std::ostream& os, const std::string& n, const std::string& delta, const RobustEstimate& e) {
    for (const auto& m : e.per_control)
        os << n << ',' << delta << ',' << m.label << ',' << fmt17(m.mean) << ',' << fmt17(m.se) << '\n';
    os << n << ',' << delta << ",max," << fmt17(e.value) << ',' << fmt17(e.se()) << '\n';
}

}  // namespace

void write_convergence_csv(std::ostream& os, const ConvergenceTable* n_table, const TwoApproxTable* two_table) {
    os << csv_schema_line() << "n,delta,control,estimate,se\n";
    if (n_table)
        for (std::size_t q = 0; q < n_table->ns.size(); ++q)
            estimate_rows(os, std::to_string(n_table->ns[q]), "", n_table->estimates[q]);
    if (two_table)
        for (const auto& e : two_table->entries) estimate_rows(os, std::to_string(e.n), fmt17(e.delta), e.estimate);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace gsvie
