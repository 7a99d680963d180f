#pragma once

#include <stdexcept>
#include <string>

namespace hecnn {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration, shape mismatch, or a violated layout precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A multiplicative operation was attempted on a ciphertext with no level left.
class DepthBudgetError : public Error {
 public:
  using Error::Error;
};

// Operands encrypted under different session keys.
class KeyMismatchError : public Error {
 public:
  using Error::Error;
};

// A party tried to use secret key material it does not hold.
class AuthorizationError : public Error {
 public:
  using Error::Error;
};

// Cost table lacks a (kind, level) entry needed for an estimate.
class MissingCostError : public Error {
 public:
  using Error::Error;
};

// Prefixes the message of `e` with a context label ("FL1", "step 8", ...)
// while keeping the dynamic error category.
[[noreturn]] void rethrow_with_context(const std::string& context);

}  // namespace hecnn
