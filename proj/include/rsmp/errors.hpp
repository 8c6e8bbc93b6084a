#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsmp {

/// Malformed input (generator, grid, Lévy specification, configuration value).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (negative elapsed time,
/// t > T, log of a non-positive value).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Ill-conditioned numerics: rank deficiency, Picard non-convergence.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model outside the class an estimator or solver supports.
class UnsupportedModel : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Missing or inconsistent inputs to an estimator (e.g. a BSDE solution that is required but absent).
class ConfigurationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The closed-form control's denominator vanished.
class SingularControl : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Forward Euler state left the finite range; carries the failing step.
class SimulationDiverged : public std::runtime_error {
public:
    SimulationDiverged(std::size_t step, double value)
        : std::runtime_error("simulation diverged at step " + std::to_string(step) +
                             " (state " + std::to_string(value) + ")"),
          step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Raised when a control rule reads a field its information level hides.
class InformationLeak : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace rsmp
