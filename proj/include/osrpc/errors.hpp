#pragma once

#include <stdexcept>
#include <string>

namespace osrpc {

// Invalid distribution parameters, malformed configs, bad bounds.
class InvalidParameterError : public std::invalid_argument {
 public:
  explicit InvalidParameterError(const std::string& msg)
      : std::invalid_argument(msg) {}
};

// File/CSV/JSON ingestion failures; carries row/column context in the message.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: underflow of truncation intervals, non-finite
// likelihoods, domain violations in special functions.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Cholesky (or similar) failure; names the failing leading minor.
class DecompositionError : public NumericError {
 public:
  DecompositionError(const std::string& msg, int leading_minor)
      : NumericError(msg), leading_minor_(leading_minor) {}
  int leading_minor() const { return leading_minor_; }

 private:
  int leading_minor_;
};

// Adaptive phase retained zero nonempty clusters.
class DegenerateFitError : public std::runtime_error {
 public:
  explicit DegenerateFitError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace osrpc
