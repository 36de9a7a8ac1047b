#pragma once

// Experiment configs: a YAML (or JSON) key tree validated against a versioned schema.

#include "gsvie/errors.hpp"
#include "gsvie/io.hpp"
#include "gsvie/registry.hpp"
#include "gsvie/scenario.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gsvie {

/// A config problem located by a JSON-pointer-like field path, e.g. "/run/scenarios".
class ConfigError : public InvalidArgument {
public:
    ConfigError(std::string field, const std::string& message)
        : InvalidArgument(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct SchemaError {
    std::string path;
    std::string message;
};

/// Checks `doc` against a JSON-Schema subset: type, properties, required, additionalProperties (false),
/// enum, minimum, exclusiveMinimum, maximum, items, minItems. Errors are in document order.
std::vector<SchemaError> validate_schema(const Json& doc, const Json& schema);

/// The published config schema.
const Json& config_schema();

/// Parses YAML or JSON text into a key tree. Unquoted YAML scalars become booleans, integers or
/// doubles when they read as such.
Json parse_config_text(const std::string& text);
Json load_config_tree(const std::filesystem::path& path);

struct FunctionalSpec {
    std::string kind = "power";  // power: B_T^p, abs: |B_T|, max: max_t B_t, qv: <B>_T
    double power = 2.0;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string command;  // optional; the CLI subcommand must agree when present
    double T = 1.0;
    Index N = 256;
    VolatilityBand band{1.0, 1.0};
    std::vector<ControlStrategy> controls{strategy::ConstantLo{}, strategy::ConstantHi{}};
    std::string system = "linear-sde";
    Parameters parameters;

    struct Run {
        std::size_t scenarios = 100;
        std::uint64_t seed = 0;
        NoiseKind noise = NoiseKind::gaussian;
        std::string method;  // command specific; empty selects the default
        int equation = 1;
        double tol = 1e-10;
        int max_iter = 100;
        std::optional<double> beta;
        std::string stopping = "node_sup";
        std::string initial_guess = "phi";
        std::vector<int> ns{2, 4, 8, 16, 32};
        std::vector<double> deltas{0.2, 0.1, 0.05};
        std::string stopping_mode = "with_phi";
        double tol_factor = 10.0;
        std::size_t samples = 10000;
        std::size_t assumption_scenarios = 16;
        double x_range = 10.0;
        FunctionalSpec functional;
    } run;

    struct Output {
        std::string directory = "out";
        std::vector<std::string> formats{"csv", "json"};
        bool scenarios = false;
    } output;
};

/// Validates against the schema, then builds the typed config. Throws ConfigError naming the field.
ExperimentConfig parse_config(const Json& tree);

/// Canonical tree with every default filled in; parse_config(to_json(c)) reproduces c.
Json to_json(const ExperimentConfig& c);

}  // namespace gsvie
