#pragma once

#include <stdexcept>
#include <string>

namespace pricer {

// Base of every error the library throws. Callers that only need to know
// "something in the pricer failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inputs outside the mathematical domain of an operation (sigma <= 0, tau <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// A price violates the no-arbitrage band of its contract.
class BoundsViolation : public Error {
public:
    using Error::Error;
};

// Intermediate values left the representable range.
class NumericalOverflow : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent on-disk content.
class FormatError : public Error {
public:
    using Error::Error;
};

// Training produced NaN/inf; carries the global step index.
class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(const std::string& what, long step) : Error(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace pricer
