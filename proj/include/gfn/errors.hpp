#pragma once

#include <stdexcept>
#include <string>

namespace gfn {

/// Invalid or inconsistent user-supplied configuration. CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unrecoverable failure mid-run (NaN loss, corrupt checkpoint). CLI maps this to exit code 2.
struct RuntimeAbort : std::runtime_error {
  explicit RuntimeAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gfn
