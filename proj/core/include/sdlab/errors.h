#pragma once

#include <stdexcept>
#include <string>

namespace sdlab {

// Invalid user-supplied configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/length mismatches and malformed data structures.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values during training. The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A broken internal scheduling invariant (missing snapshot, missing delta).
class ScheduleError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sdlab
