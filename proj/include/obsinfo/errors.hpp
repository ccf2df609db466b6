#pragma once

#include <stdexcept>
#include <string>

namespace obsinfo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Vector or matrix sizes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A response lies outside the model's support, or a parameter is out of range.
class DomainError : public Error {
public:
    using Error::Error;
};

// A quantity the caller asked for is undefined on this input (Q = 0, mu = 0, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

// A design or estimation problem has no admissible solution.
class SolverError : public Error {
public:
    using Error::Error;
};

// Malformed or incomplete configuration. `field` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace obsinfo
