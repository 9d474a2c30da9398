#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mechanotaxis {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (e.g. S < 0).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A density-role field holds a non-positive value, or an explicit step would
/// drive one non-positive.
class PositivityLoss : public Error {
public:
    PositivityLoss(std::size_t cell, const std::string& what)
        : Error(what + " (cell " + std::to_string(cell) + ")"), cell_(cell) {}

    std::size_t cell() const noexcept { return cell_; }

private:
    std::size_t cell_;
};

/// The first integral has no finite second root: no periodic steady state.
class NoFinitePeriod : public Error {
public:
    using Error::Error;
};

/// A trajectory has not reached the steady-state threshold.
class NotSteady : public Error {
public:
    using Error::Error;
};

/// Growth-rate probe left the linear regime before collecting enough samples.
class FitWindowTooShort : public Error {
public:
    using Error::Error;
};

/// Numeric concentration probe gave no monotone trend.
class Inconclusive : public Error {
public:
    using Error::Error;
};

class InsufficientSamples : public Error {
public:
    using Error::Error;
};

/// Configuration parse or validation failure.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mechanotaxis
