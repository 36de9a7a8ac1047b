#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsvie {

/// Precondition violation on a public entry point.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A requested computation exceeds a hard size cap (e.g. full-path lattice N > 12).
class SizeLimitError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Solver iterate left the finite range or exceeded the blowup threshold.
class NumericalBlowup : public std::runtime_error {
public:
    NumericalBlowup(std::uint64_t scenario, std::size_t step, double value)
        : std::runtime_error("numerical blowup in scenario " + std::to_string(scenario) + " at step " +
                             std::to_string(step) + " (value " + std::to_string(value) + ")"),
          scenario_(scenario), step_(step), value_(value) {}

    std::uint64_t scenario() const noexcept { return scenario_; }
    std::size_t step() const noexcept { return step_; }
    double value() const noexcept { return value_; }

private:
    std::uint64_t scenario_;
    std::size_t step_;
    double value_;
};

/// Picard iteration hit max_iter. Carries the per-iteration weighted distances.
class NonConvergence : public std::runtime_error {
public:
    NonConvergence(std::string what, std::vector<double> history)
        : std::runtime_error(std::move(what)), history_(std::move(history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Wraps an evaluator failure with the scenario and control it happened on.
class ScenarioFailure : public std::runtime_error {
public:
    ScenarioFailure(std::uint64_t scenario, std::string control, const std::string& cause)
        : std::runtime_error("scenario " + std::to_string(scenario) + " (control " + control + "): " + cause),
          scenario_(scenario), control_(std::move(control)) {}

    std::uint64_t scenario() const noexcept { return scenario_; }
    const std::string& control() const noexcept { return control_; }

private:
    std::uint64_t scenario_;
    std::string control_;
};

}  // namespace gsvie
