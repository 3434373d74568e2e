#pragma once

#include <stdexcept>
#include <string>

namespace fedloc {

// Caller bugs: mismatched dimensions, broken preconditions.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad configuration or argument values (L out of range, beta <= 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values fed into a numeric routine.
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal state went non-finite (e.g. pairwise model distances).
class InvalidState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; message names the epoch.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CSV header missing required columns; message lists them.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A data row failed to parse; message names the file line.
class RowParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A filter selected nothing.
class EmptySelection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Partition demand exceeds the available sample pool.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every label was zeroed out by at least one model during fusion.
class DegenerateFusion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Evaluation asked for an empty or unusable test set.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required input file is missing or unreadable (CLI maps this to a
// usage error, exit code 2).
class InputFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Output I/O failure (CLI maps this to a runtime error, exit code 1).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedloc
