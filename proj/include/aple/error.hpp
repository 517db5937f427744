// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace aple {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or image extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, zero norms, and other arithmetic failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration. Carries every offending field, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::string message) : Error(message), issues_{std::move(message)} {}
  explicit ConfigError(std::vector<std::string> issues);

  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  std::vector<std::string> issues_;
};

/// API misuse: wrong argument kinds, out-of-range labels, empty splits.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. The message holds the diagnostic snapshot.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace aple
