#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace driverchain {

/// Argument outside the mathematical domain of an operation (LoA outside [0,3], negative x).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Input data violates the trace or config schema.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Estimation or propagation hit something it cannot represent, e.g. an undefined row
/// reachable with positive probability.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A published percentage row admits no integer solution.
class InconsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A published percentage row admits more than one integer solution.
class AmbiguityError : public std::runtime_error {
 public:
  AmbiguityError(const std::string& what, std::vector<std::vector<std::int64_t>> candidates)
      : std::runtime_error(what), candidates_(std::move(candidates)) {}

  const std::vector<std::vector<std::int64_t>>& candidates() const noexcept { return candidates_; }

 private:
  std::vector<std::vector<std::int64_t>> candidates_;
};

/// A statistical test cannot be applied to the data it was given (degenerate table, df = 0).
class InapplicableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace driverchain
