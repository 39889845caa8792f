#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lobdiff {

// Book geometry. Level index map: 0..9 = Ask10..Ask1, 10..19 = Bid1..Bid10.
inline constexpr int kBookDepth = 10;
inline constexpr int kLevels = 2 * kBookDepth;
inline constexpr int kWindowLength = 32;

// Retained session is [10:00:00, 15:30:00) in seconds after midnight.
inline constexpr int kSessionStart = 36000;
inline constexpr int kSessionEnd = 55800;
inline constexpr int kSessionSeconds = kSessionEnd - kSessionStart;  // 19800

/// Time-major L x D block of volumes (rows = seconds, columns = levels).
using Window = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LevelVector = std::array<double, kLevels>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition (shapes, variants, empty inputs).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// A non-finite value appeared in a numeric pipeline.
class NumericError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace lobdiff
