#pragma once

#include <stdexcept>
#include <string>

namespace topoevo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Graph violates a structural or geometric invariant.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Malformed text or binary input.
class ParseError : public Error {
  public:
    using Error::Error;
};

/// A mutation could not produce a valid graph; the caller may retry with another draw.
class MutationRejected : public Error {
  public:
    using Error::Error;
};

/// Individual exceeds a configured resource budget.
class BudgetExceeded : public Error {
  public:
    using Error::Error;
};

/// Tensor or batch dimensions disagree with the graph.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Snapshot content does not match its checksum.
class CorruptionError : public Error {
  public:
    using Error::Error;
};

} // namespace topoevo
