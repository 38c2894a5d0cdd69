#pragma once

#include <stdexcept>
#include <string>

namespace agma {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or trajectory dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input lies outside the domain of an operation (empty set, zero mass, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A structural precondition (symmetry, partition coverage) was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    explicit ParseError(const std::string& what) : Error(what), line_(0) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Dataset produced no usable windows.
class EmptyDatasetError : public Error {
public:
    using Error::Error;
};

/// Checkpoint missing, unreadable, or inconsistent with the requested config.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// A loss or parameter became NaN/Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace agma
