#pragma once

#include <stdexcept>
#include <string>

namespace moat {

/// Base class for every error the library raises. `exit_code()` is what the
/// CLI returns when the error escapes a subcommand.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual int exit_code() const noexcept { return 4; }
};

/// Invalid argument for a mathematical operation (bad index, empty set,
/// non-positive threshold, zeta with a <= b).
class DomainError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Input data problems: shape mismatches, non-finite values, too few subjects.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

/// Numerical failure during a computation.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

class SingularDesignError : public NumericError {
public:
    using NumericError::NumericError;
};

class SingularCovarianceError : public NumericError {
public:
    using NumericError::NumericError;
};

/// greedy_peel was handed a matrix with no positive weight.
class EmptyResultError : public NumericError {
public:
    using NumericError::NumericError;
};

/// A subnetwork whose densities do not exceed the background.
class NotTestableError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Simulation design that cannot be realised by a valid covariance matrix.
class InfeasibleDesignError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

}  // namespace moat
