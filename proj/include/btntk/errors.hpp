#ifndef BTNTK_ERRORS_HPP
#define BTNTK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace btntk {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file (bad magic number, truncated payload, ...).
struct FormatError : Error {
    using Error::Error;
};

/// Shapes of matrices or vectors do not agree.
struct DimensionError : Error {
    using Error::Error;
};

/// An input that cannot be normalized or otherwise used (e.g. a zero vector).
struct DegenerateInputError : Error {
    using Error::Error;
};

/// Caller violated a documented precondition.
struct PreconditionError : Error {
    using Error::Error;
};

/// A numerical invariant (symmetry, finiteness) was broken on input.
struct InvariantError : Error {
    using Error::Error;
};

/// Training produced a non-finite loss.
struct DivergenceError : Error {
    DivergenceError(const std::string& what, long epoch) : Error(what), epoch(epoch) {}
    long epoch;
};

/// ODE integration produced a non-finite state.
struct IntegrationError : Error {
    IntegrationError(const std::string& what, double time) : Error(what), time(time) {}
    double time;
};

struct CalibrationError : Error {
    using Error::Error;
};

} // namespace btntk

#endif
