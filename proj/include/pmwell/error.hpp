#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pmwell {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Two fields living on different grids were combined.
class GridMismatch : public Error {
public:
    GridMismatch() : Error("fields live on different grids") {}
};

/// An iterative method ran out of iterations. `best` carries the best iterate
/// found so far, which is still meaningful to the caller (an upper bound for
/// minimizations, a lower bound for maximizations).
template <class Best>
class NonConvergence : public Error {
public:
    NonConvergence(std::string what, Best best, double residual)
        : Error(std::move(what)), best_(std::move(best)), residual_(residual) {}

    const Best& best() const noexcept { return best_; }
    double residual() const noexcept { return residual_; }

private:
    Best best_;
    double residual_;
};

/// A scalar root search found no sign change. `sign` is the sign observed
/// over the whole search interval.
class NoRoot : public Error {
public:
    NoRoot(std::string what, int sign) : Error(std::move(what)), sign_(sign) {}
    int sign() const noexcept { return sign_; }

private:
    int sign_;
};

/// A theorem-based estimate was requested outside its hypotheses.
class NotApplicable : public Error {
public:
    using Error::Error;
};

class LinearSolveFailure : public Error {
public:
    using Error::Error;
};

/// The Picard iteration of a semi-implicit step did not settle; callers
/// halve the step and retry.
class PicardStall : public Error {
public:
    PicardStall(std::string what, double update_norm)
        : Error(std::move(what)), update_norm_(update_norm) {}
    double update_norm() const noexcept { return update_norm_; }

private:
    double update_norm_;
};

class InsufficientDecay : public Error {
public:
    using Error::Error;
};

/// Amplitude tuning could not reach the requested energy. The attainable
/// range on the requested branch is reported.
class TargetUnreachable : public Error {
public:
    TargetUnreachable(std::string what, double lo, double hi)
        : Error(std::move(what)), lo_(lo), hi_(hi) {}
    double attainable_lo() const noexcept { return lo_; }
    double attainable_hi() const noexcept { return hi_; }

private:
    double lo_;
    double hi_;
};

/// Configuration could not be parsed or violates a stated invariant.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace pmwell
