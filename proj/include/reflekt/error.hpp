#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reflekt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input: bad configuration, violated hypothesis, domain without the
/// origin in its interior. The CLI maps these to exit status 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Field or measure dimensions do not match the grid they are used with.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An iterative method stopped before reaching its tolerance.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// The simulated state became non-finite or exceeded the blow-up guard.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, std::size_t step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace reflekt
