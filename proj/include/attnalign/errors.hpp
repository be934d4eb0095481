#pragma once

#include <stdexcept>
#include <string>

namespace attnalign {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad dimensions or inconsistent model configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Mismatched or empty shapes (rows of different lengths, empty inputs, ...).
struct ShapeError : Error {
    using Error::Error;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

// The max-prob temperature quadratic has no real root; callers fall back to
// the empirical grid search.
struct NoRealRootError : DomainError {
    using DomainError::DomainError;
};

// Leading quadratic coefficient is not positive.
struct DegenerateCoefficientError : DomainError {
    using DomainError::DomainError;
};

// A Gaussian fit was requested on a constant vector.
struct ZeroSigmaError : DomainError {
    using DomainError::DomainError;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace attnalign
