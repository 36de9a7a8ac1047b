#pragma once

// JSON reports and fixed-precision CSV tables.

#include "gsvie/comparison.hpp"
#include "gsvie/expectation.hpp"
#include "gsvie/volterra.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>
#include <span>
#include <string>

namespace gsvie {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

Json to_json(const ControlMean& m);
Json to_json(const RobustEstimate& e);
Json to_json(const Witness& w);
Json to_json(const AssumptionReport& r);
Json to_json(const ComparisonReport& r);
Json to_json(const ConvergenceTable& t);
Json to_json(const StoppingGrid& g);

/// First line of every CSV artifact.
std::string csv_schema_line();

/// scenario_id,step,t,X
void write_solutions_csv(std::ostream& os, const TimeGrid& grid, std::span<const SolutionPath> paths);

/// n,delta,control,estimate,se. Rows per control and one "max" row per estimate; delta is empty for the n-study.
void write_convergence_csv(std::ostream& os, const ConvergenceTable* n_table, const TwoApproxTable* two_table);

/// Writes text to a file, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& text);

/// Indented JSON (shortest round-trip doubles) with a trailing newline.
std::string dump(const Json& j);

}  // namespace gsvie
