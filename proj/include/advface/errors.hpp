#pragma once

#include <stdexcept>
#include <string>

namespace advface {

// Raised when a caller breaks an operation's precondition (bad dims,
// overlapping masks, invalid config values, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileNotFoundError : public IoError {
 public:
  using IoError::IoError;
};

class UnsupportedFormatError : public IoError {
 public:
  using IoError::IoError;
};

class CorruptDataError : public IoError {
 public:
  using IoError::IoError;
};

// Every capture point of a physical evaluation was discarded by cleaning.
class DegenerateGridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace advface
