#include "lobdiff/network/parameters.hpp"

#include <cmath>

#include "lobdiff/common.hpp"
#include "lobdiff/rng.hpp"
#include "layout.hpp"

namespace lobdiff {

NetworkParameters::NetworkParameters(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto slots = detail::build_layout(config_, [&](const std::string& name, const detail::Slot& s,
                                                       const detail::InitRule&) {
    tensors_.push_back(ParamTensor{name, s.rows, s.cols, s.offset});
  });
  values_.assign(slots.total, 0.0);
}

const ParamTensor& NetworkParameters::tensor(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ContractError("no parameter tensor named '" + std::string(name) + "'");
}

Eigen::Map<Eigen::MatrixXd> NetworkParameters::matrix(std::string_view name) {
  const auto& t = tensor(name);
  return {values_.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<const Eigen::MatrixXd> NetworkParameters::matrix(std::string_view name) const {
  const auto& t = tensor(name);
  return {values_.data() + t.offset, t.rows, t.cols};
}

bool NetworkParameters::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

NetworkParameters init_parameters(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParameters params(config);
  Rng rng(derive_seed(seed, "network_init"));
  auto& values = params.values();
  detail::build_layout(params.config(), [&](const std::string&, const detail::Slot& s, const detail::InitRule& rule) {
    double* base = values.data() + s.offset;
    switch (rule.kind) {
      case detail::InitKind::kZero:
        break;
      case detail::InitKind::kNormal:
        for (int c = 0; c < s.cols; ++c) {
          for (int r = 0; r < s.rows; ++r) base[c * s.rows + r] = rule.gain * rng.normal();
        }
        break;
      case detail::InitKind::kFanIn: {
        const double sd = std::sqrt(rule.gain / s.cols);
        for (int c = 0; c < s.cols; ++c) {
          for (int r = 0; r < s.rows; ++r) base[c * s.rows + r] = sd * rng.normal();
        }
        break;
      }
      case detail::InitKind::kFilm: {
        // Top half of the rows produce scales and stay zero; bottom half produce shifts.
        const double sd = std::sqrt(rule.gain / s.cols);
        for (int c = 0; c < s.cols; ++c) {
          for (int r = s.rows / 2; r < s.rows; ++r) base[c * s.rows + r] = sd * rng.normal();
        }
        break;
      }
    }
  });
  return params;
}

}  // namespace lobdiff
