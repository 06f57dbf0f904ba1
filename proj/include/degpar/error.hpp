#pragma once

#include <stdexcept>
#include <string>

namespace degpar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation does not hold.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The weight was evaluated where it is infinite (eps = 0, a < 0, y = 0).
class SingularEvaluation : public Error {
public:
    using Error::Error;
};

/// A theorem hypothesis (exponent window, integrability range) is violated.
class HypothesisViolation : public Error {
public:
    using Error::Error;
};

/// The iterative linear solver did not reach its residual target.
class SolverFailure : public Error {
public:
    SolverFailure(const std::string& what, double residual, int iterations)
        : Error(what + " (relative residual " + std::to_string(residual) + " after "
                + std::to_string(iterations) + " iterations)"),
          residual_(residual),
          iterations_(iterations) {}

    [[nodiscard]] double residual() const noexcept { return residual_; }
    [[nodiscard]] int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

#define DEGPAR_REQUIRE(cond, Exc, msg) \
    do {                               \
        if (!(cond)) throw Exc(msg);   \
    } while (false)

}  // namespace degpar
