#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dms {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidDimension : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DegenerateInput : public Error {
public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Raised when an iterative scheme produces a non-finite value.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::size_t iteration)
        : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

class DivergenceError : public NumericalError {
public:
    explicit DivergenceError(std::size_t iteration)
        : NumericalError("non-finite objective", iteration) {}
};

class JacobianOverflow : public NumericalError {
public:
    explicit JacobianOverflow(std::size_t iteration)
        : NumericalError("non-finite Jacobian entry", iteration) {}
};

// A Monte-Carlo replicate failed; wraps the underlying message.
class ReplicateError : public Error {
public:
    ReplicateError(std::size_t replicate, const std::string& cause)
        : Error("replicate " + std::to_string(replicate) + ": " + cause), replicate_(replicate) {}

    std::size_t replicate() const noexcept { return replicate_; }

private:
    std::size_t replicate_;
};

} // namespace dms
