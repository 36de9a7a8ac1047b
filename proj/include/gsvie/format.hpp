#pragma once

#include <fmt/format.h>

#include <string>

namespace gsvie {

/// Fixed 17-significant-digit decimal; round-trips every finite double.
inline std::string fmt17(double v) { return fmt::format("{:.17g}", v); }

}  // namespace gsvie
