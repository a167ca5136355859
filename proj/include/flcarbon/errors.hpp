#pragma once

#include <stdexcept>
#include <string>

namespace flcarbon {

/// Invalid input, configuration or precondition violation.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Local optimizer produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A compressed payload that cannot be decoded against its declared size.
class MalformedPayload : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace detail
}  // namespace flcarbon
