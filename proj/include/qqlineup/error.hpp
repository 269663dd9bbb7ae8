#ifndef QQLINEUP_ERROR_HPP
#define QQLINEUP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace qqlineup {

/// Argument outside the mathematical domain of a function (non-finite input,
/// probability outside (0,1), non-positive scale).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller violated a usage contract (mismatched table, bad layout, sample
/// size outside the supported range).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well formed but degenerate: zero spread, all-equal values.
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure; the message names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qqlineup

#endif  // QQLINEUP_ERROR_HPP
