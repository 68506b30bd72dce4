#pragma once

#include <stdexcept>
#include <string>

namespace kfdmd {

// Base of every error raised by the library. The CLI maps the subclasses
// onto exit codes (config 2, numerical 3, io 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad arguments, shape mismatches, violated preconditions, bad configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Rank deficiency, non-PSD covariances, singular solves.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Overflow of eigenvalue powers and similar non-finite results.
class RangeError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace kfdmd
