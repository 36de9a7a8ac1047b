#pragma once

// Built-in coefficient systems addressable by name from configs.

#include "gsvie/comparison.hpp"
#include "gsvie/volterra.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gsvie {

using Parameters = std::map<std::string, double>;

struct SystemRegistryEntry {
    std::string name;
    Parameters parameters;  // effective values after overrides
    std::string note;
    CoefficientSet coeffs;  // general form; for separable entries equation 1 with H = 1
    ForcingProcess phi;
    std::optional<ComparisonFixture> fixture;  // separable pair, if any
    std::vector<Probe> probes;                 // tuples worth checking explicitly
    VolatilityBand default_band;
};

/// Names accepted by make_system, in a stable order.
const std::vector<std::string>& registry_names();

/// Default parameters of an entry.
Parameters registry_defaults(const std::string& name);

/// Builds an entry; unknown names or parameter keys throw InvalidArgument.
SystemRegistryEntry make_system(const std::string& name, const Parameters& overrides = {});

}  // namespace gsvie
