#pragma once

#include <stdexcept>
#include <string>

namespace usaad {

// Bad flags, bad config values, contract violations at the API boundary.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing/unreadable/ill-formed inputs on disk.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during optimization.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace usaad
