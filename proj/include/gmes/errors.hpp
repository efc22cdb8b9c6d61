#pragma once

#include <stdexcept>
#include <string>

namespace gmes {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A covariance matrix could not be Cholesky-factorized.
class FactorizationError : public Error {
public:
    using Error::Error;
};

/// A quantity fell outside the domain where it is defined: negative
/// posterior variance beyond the round-off floor, barrier evaluated at or
/// inside the separation radius, point outside the domain box.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Separated batch initialization failed (box too small for m and r_div).
class InitializationError : public Error {
public:
    using Error::Error;
};

/// Configuration could not be parsed or failed validation.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The simulator observed two robots closer than the safe distance.
class SafetyViolation : public Error {
public:
    using Error::Error;
};

}  // namespace gmes
