#include "lobdiff/data/normalization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace lobdiff {

void NormalizationSpec::validate() const {
  if (!(scale_const > 0.0)) throw ConfigError("normalization const must be > 0");
  for (int j = 0; j < kLevels; ++j) {
    if (!(clip_caps[j] > 0.0)) throw ConfigError("clip cap for level " + std::to_string(j) + " must be > 0");
  }
  if (!(lambda_scale > 0.0)) throw ConfigError("lambda_scale must be > 0");
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile of an empty sample");
  if (q < 0.0 || q > 1.0) throw ConfigError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NormalizationSpec fit_normalization(std::span<const SnapshotSeries> train, double q, double scale_const) {
  std::size_t total = 0;
  for (const auto& s : train) total += s.size();
  if (total == 0) throw ContractError("fit_normalization needs a non-empty training split");

  NormalizationSpec spec;
  spec.scale_const = scale_const;
  std::vector<double> level(total);
  for (int j = 0; j < kLevels; ++j) {
    std::size_t n = 0;
    bool all_zero = true;
    for (const auto& s : train) {
      for (const auto& snap : s.snapshots) {
        level[n++] = snap.volumes[j];
        all_zero = all_zero && snap.volumes[j] == 0.0;
      }
    }
    if (all_zero) {
      spdlog::warn("fit_normalization: level {} is identically zero; cap set to 1", j);
      spec.clip_caps[j] = 1.0;
    } else {
      spec.clip_caps[j] = empirical_quantile(level, q);
    }
  }

  double sum = 0.0;
  for (const auto& s : train) {
    for (const auto& snap : s.snapshots) sum += clipped_liquidity(snap.volumes, spec);
  }
  spec.lambda_scale = sum / static_cast<double>(total);
  if (!(spec.lambda_scale > 0.0)) {
    spdlog::warn("fit_normalization: training liquidity is zero; lambda_scale set to 1");
    spec.lambda_scale = 1.0;
  }
  spec.validate();
  return spec;
}

double normalize_value(double x, double cap, double scale_const) {
  if (x < 0.0 || std::isnan(x)) throw std::domain_error("normalize: volume must be >= 0");
  return std::sqrt(std::min(x, cap)) / scale_const;
}

double denormalize_value(double y, double scale_const) {
  const double r = std::max(y, 0.0) * scale_const;
  return r * r;
}

LevelVector normalize(const LevelVector& x, const NormalizationSpec& spec) {
  LevelVector y{};
  for (int j = 0; j < kLevels; ++j) y[j] = normalize_value(x[j], spec.clip_caps[j], spec.scale_const);
  return y;
}

LevelVector denormalize(const LevelVector& y, const NormalizationSpec& spec) {
  LevelVector x{};
  for (int j = 0; j < kLevels; ++j) x[j] = denormalize_value(y[j], spec.scale_const);
  return x;
}

Window normalize(const Window& raw, const NormalizationSpec& spec) {
  if (raw.cols() != kLevels) throw ContractError("normalize: window must have 20 columns");
  Window out(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (int j = 0; j < kLevels; ++j) out(r, j) = normalize_value(raw(r, j), spec.clip_caps[j], spec.scale_const);
  }
  return out;
}

Window denormalize(const Window& normalized, const NormalizationSpec& spec) {
  Window out(normalized.rows(), normalized.cols());
  for (Eigen::Index r = 0; r < normalized.rows(); ++r) {
    for (Eigen::Index j = 0; j < normalized.cols(); ++j) out(r, j) = denormalize_value(normalized(r, j), spec.scale_const);
  }
  return out;
}

double clipped_liquidity(const LevelVector& x, const NormalizationSpec& spec) {
  double s = 0.0;
  for (int j = 0; j < kLevels; ++j) s += std::min(x[j], spec.clip_caps[j]);
  return s;
}

void write_normalization(const NormalizationSpec& spec, const std::filesystem::path& path) {
  nlohmann::json j;
  j["const"] = spec.scale_const;
  j["clip_caps"] = spec.clip_caps;
  j["lambda_scale"] = spec.lambda_scale;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

NormalizationSpec read_normalization(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  NormalizationSpec spec;
  for (const auto& [key, value] : j.items()) {
    if (key == "const") {
      spec.scale_const = value.get<double>();
    } else if (key == "clip_caps") {
      if (!value.is_array() || value.size() != kLevels) throw ConfigError("clip_caps must hold 20 numbers");
      for (int k = 0; k < kLevels; ++k) spec.clip_caps[k] = value[k].get<double>();
    } else if (key == "lambda_scale") {
      spec.lambda_scale = value.get<double>();
    } else {
      throw ConfigError("unknown normalization key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

}  // namespace lobdiff
