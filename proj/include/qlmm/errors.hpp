/**
 * @file errors.hpp
 * @brief Exception types shared by every qlmm module.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qlmm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Value or exponent field above the largest representable value of a format.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Value below the smallest representable positive value (zero included).
class UnderflowError : public Error {
 public:
  using Error::Error;
};

/// Margined addition whose exponent gap does not fit in the margin register.
class MarginError : public Error {
 public:
  explicit MarginError(const std::string& what, std::size_t step = npos) : Error(what), step_(step) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  [[nodiscard]] std::size_t step() const noexcept { return step_; }
  [[nodiscard]] bool has_step() const noexcept { return step_ != npos; }

 private:
  std::size_t step_;
};

/// A weighted sum that should be positive by bias construction went negative.
class NegativeResultError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class RootFindingError : public Error {
 public:
  using Error::Error;
};

class SchemeError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

class NoFeasibleCandidateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration; `key()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(key) {}

  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace qlmm
