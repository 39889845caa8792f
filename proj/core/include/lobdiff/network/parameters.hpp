#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lobdiff/network/config.hpp"

namespace lobdiff {

struct ParamTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// All learnable tensors of one network, stored contiguously so optimizers,
/// EMA and checkpoints can treat them as a single vector. Each tensor is a
/// column-major rows x cols block of `values()`.
class NetworkParameters {
 public:
  NetworkParameters() = default;
  /// Zero-filled parameters with the layout of `config`.
  explicit NetworkParameters(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  const ParamTensor& tensor(std::string_view name) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  Eigen::Map<Eigen::MatrixXd> matrix(std::string_view name);
  Eigen::Map<const Eigen::MatrixXd> matrix(std::string_view name) const;

  bool all_finite() const;

  friend bool operator==(const NetworkParameters& a, const NetworkParameters& b) {
    return a.config_ == b.config_ && a.values_ == b.values_;
  }

 private:
  NetworkConfig config_;
  std::vector<ParamTensor> tensors_;
  std::vector<double> values_;
};

/// Deterministic initialization: fan-in scaled normals for weights, zero
/// biases, zero FiLM scale rows and a zero final head so the untrained
/// network predicts exactly 0.
NetworkParameters init_parameters(const NetworkConfig& config, std::uint64_t seed);

}  // namespace lobdiff
