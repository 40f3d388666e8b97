#pragma once

#include <stdexcept>
#include <string>

namespace sgrl {

// Bad arguments, malformed configs, shape mismatches. Maps to exit code 1.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Failures detected mid-run (non-finite loss, I/O errors). Maps to exit code 2.
struct RuntimeFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail_arg(const std::string& msg) { throw InvalidArgument(msg); }
[[noreturn]] inline void fail_run(const std::string& msg) { throw RuntimeFault(msg); }

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) fail_arg(msg);
}

}  // namespace sgrl
