#pragma once

#include <stdexcept>
#include <string>

namespace bpre {

/// Base class for every error thrown by the library. The status code maps
/// one-to-one onto the process exit codes of the runner.
class Error : public std::runtime_error {
 public:
  enum class Kind { kInvalidArgument = 1, kConfig = 2, kNumeric = 3, kBudget = 4, kIo = 5 };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error(Kind::kInvalidArgument, what) {}
};

/// Unknown or malformed configuration key. The message names the key.
struct ConfigError : Error {
  ConfigError(const std::string& key, const std::string& what)
      : Error(Kind::kConfig, key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Numerical instability; the message carries the violated bound.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(Kind::kNumeric, what) {}
};

/// A configured resource cap (particle count, jump count) was exceeded.
struct BudgetError : Error {
  explicit BudgetError(const std::string& what) : Error(Kind::kBudget, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(Kind::kIo, what) {}
};

}  // namespace bpre
