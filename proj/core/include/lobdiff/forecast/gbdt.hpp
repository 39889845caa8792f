#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lobdiff/common.hpp"

namespace lobdiff {

/// Histogram gradient-boosted regression trees on squared loss. Trees grow
/// leaf-wise (largest gain first) up to num_leaves and max_depth; each tree
/// sees a fresh `subsample` fraction of rows drawn without replacement.
struct GbdtConfig {
  int n_trees = 500;
  int max_depth = 8;
  int num_leaves = 31;
  double learning_rate = 0.05;
  double subsample = 0.8;
  int min_samples_leaf = 20;
  int max_bins = 64;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const GbdtConfig&) const = default;
};

void to_json(nlohmann::json& j, const GbdtConfig& c);
void from_json(const nlohmann::json& j, GbdtConfig& c);

/// Row-major sample matrix: rows x cols values.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

class GbdtModel {
 public:
  struct Tree {
    // Node k is a leaf when feature[k] < 0. x <= threshold goes left.
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<int> left, right;
    std::vector<double> value;
    bool operator==(const Tree&) const = default;
  };

  double predict(std::span<const double> features) const;
  std::vector<double> predict(const FeatureMatrix& x) const;

  double base_score() const { return base_score_; }
  std::size_t feature_count() const { return feature_count_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const GbdtConfig& config() const { return config_; }

  nlohmann::json to_json() const;
  static GbdtModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static GbdtModel load(const std::filesystem::path& path);

  bool operator==(const GbdtModel&) const = default;

 private:
  friend GbdtModel train_gbdt(const FeatureMatrix&, std::span<const double>, const GbdtConfig&);
  GbdtConfig config_;
  std::size_t feature_count_ = 0;
  double base_score_ = 0.0;
  std::vector<Tree> trees_;
};

/// Deterministic for a fixed config and input order. A zero-variance target
/// logs a warning and returns the constant model.
GbdtModel train_gbdt(const FeatureMatrix& x, std::span<const double> y, const GbdtConfig& config);

}  // namespace lobdiff
