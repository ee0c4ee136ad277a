#pragma once

#include <stdexcept>
#include <string>

namespace fcomb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file is missing a required column.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A field could not be parsed (quarter label, number).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A value lies outside its mathematical domain (nonpositive level, negative lambda).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid generator / backtest / sampler settings.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Caller violated a precondition (dimension mismatch, non-symmetric matrix).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Surrogate scale could not be calibrated for the requested interval.
class CalibrationError : public Error {
public:
    using Error::Error;
};

}  // namespace fcomb
