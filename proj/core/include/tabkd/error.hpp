#pragma once

#include <stdexcept>
#include <string>

namespace tabkd {

/// Base class for all failures raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or malformed arguments to an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Unreadable or malformed input files, schemas and datasets.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite losses or gradients, divergence.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Contract violations such as updating a frozen bin spec.
class StateError : public Error {
public:
    using Error::Error;
};

/// Teacher query budget ran out before a run finished.
class BudgetExhausted : public Error {
public:
    using Error::Error;
};

}  // namespace tabkd
