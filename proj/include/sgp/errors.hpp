#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sgp {

/// Bad sizes, empty inputs, out-of-range arguments.
class InvalidArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Cholesky factorization failed even at the top of the jitter ladder.
/// Usually signals duplicate/degenerate inducing inputs or pathological
/// hyperparameters.
class NotPositiveDefiniteError : public std::runtime_error {
public:
  NotPositiveDefiniteError(const std::string& what, std::vector<double> ladder)
      : std::runtime_error(what), attempted_jitters(std::move(ladder)) {}

  std::vector<double> attempted_jitters;
};

/// File parsing / malformed data problems. Messages carry file and line.
class IngestionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A quantity that must be non-negative up to round-off came out clearly
/// negative; indicates a real bug rather than benign floating-point noise.
class InternalConsistencyError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

}  // namespace sgp
