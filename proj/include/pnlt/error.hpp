#pragma once

#include <stdexcept>
#include <string>

namespace pnlt {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. z = 0 for the kernel).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid object construction: non-elliptic kernel, malformed table, bad geometry.
class ConstructionError : public Error {
public:
    using Error::Error;
};

/// Iterative procedure failed to reach its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Missing data (table rows, uncovered sample points, unreadable files).
class LookupError : public Error {
public:
    using Error::Error;
};

/// Configuration parse or validation failure.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace pnlt
