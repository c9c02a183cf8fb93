#pragma once

#include <stdexcept>
#include <string>

namespace merit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when operand extents do not fit an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Raised for invalid configuration; the message names the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Raised when a loss or gradient becomes non-finite.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace merit
