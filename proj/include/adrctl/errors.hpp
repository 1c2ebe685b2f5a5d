#pragma once

#include <stdexcept>
#include <string>

namespace adrctl {

/// Base class of every error thrown by the library. `module()` names the
/// component that raised it, so the CLI can report provenance.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Invalid grid/scenario configuration (bad dimension, cell count, schema).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-positive coefficient field (a, w, f) where positivity is required.
class CoefficientError : public Error {
public:
    using Error::Error;
};

/// Right-hand side violates a solvability condition (e.g. nonzero mean).
class CompatibilityError : public Error {
public:
    using Error::Error;
};

/// A linear solve or iteration failed.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed or structurally unsuitable transition graph.
class GraphError : public Error {
public:
    using Error::Error;
};

/// Step size or control variation too large for the construction.
class StepSizeError : public Error {
public:
    using Error::Error;
};

/// A density lost positivity where the control law divides by it.
class PositivityError : public Error {
public:
    using Error::Error;
};

/// Inputs are inconsistent (mass mismatch, boundary point, bad plan).
class InputError : public Error {
public:
    using Error::Error;
};

}  // namespace adrctl
