#pragma once

#include <stdexcept>
#include <string>

namespace bckl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Out-of-domain hyperparameter or argument (nonpositive length-scale, bad rate, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// A covariance or precision matrix could not be factorized even after jitter escalation.
class FactorizationError : public Error {
public:
    using Error::Error;
};

// Run configuration violates its schema or invariants.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data / files.
class DataError : public Error {
public:
    using Error::Error;
};

// A configuration document is malformed: unknown keys, wrong types.
class SchemaError : public DataError {
public:
    using DataError::DataError;
};

// Iterative solver failed too often for the run to be trusted.
class SolverError : public Error {
public:
    using Error::Error;
};

}  // namespace bckl
