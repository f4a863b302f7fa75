#pragma once

#include <stdexcept>
#include <string>

namespace rcspa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Evaluation point outside the domain of a CGF (or a non-finite result there).
/// `step` is the process step where nesting failed, -1 when not applicable.
class DomainViolation : public Error {
public:
    explicit DomainViolation(const std::string& what, int step = -1)
        : Error(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

class UnsupportedKind : public Error {
public:
    using Error::Error;
};

class TruncationFailure : public Error {
public:
    using Error::Error;
};

class InvalidPmf : public Error {
public:
    using Error::Error;
};

/// Input document could not be parsed; the message carries the field path.
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace rcspa
