#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lobdiff/common.hpp"
#include "lobdiff/data/snapshot.hpp"
#include "lobdiff/forecast/gbdt.hpp"
#include "lobdiff/sampling/sampler.hpp"

namespace lobdiff {

inline constexpr int kForecastHistory = 32;
inline constexpr std::size_t kForecastFeatures = kForecastHistory * kLevels + 1;

/// Past rows anchor-L+1..anchor flattened time-then-level, then tau at the
/// anchor. The target is the total raw volume over rows anchor+1..anchor+H.
struct ForecastSample {
  std::vector<double> features;
  double target = 0.0;
  std::size_t anchor = 0;  // series index of the last past row
  std::string day;
  bool synthetic = false;
};

struct ForecastConfig {
  int horizon = 10;
  int history = kForecastHistory;
  int anchor_stride = 1;
  GbdtConfig gbdt;

  void validate() const;
  bool operator==(const ForecastConfig&) const = default;
};

void to_json(nlohmann::json& j, const ForecastConfig& c);
void from_json(const nlohmann::json& j, ForecastConfig& c);

/// Every anchor whose span [t-L+1, t+H] is contiguous in time, stepping by
/// `stride`. Too short a series gives an empty list.
std::vector<ForecastSample> build_targets(const SnapshotSeries& series, int history, int horizon, int stride = 1);

/// Synthetic samples: real past taken from `series`, target summed over the
/// first `horizon` generated rows. Generated windows are keyed by the series
/// index of their last future row, so the anchor is anchor_id - window length.
std::vector<ForecastSample> synthetic_samples(const SnapshotSeries& series, const GeneratedSet& set, int history,
                                              int horizon);

FeatureMatrix to_matrix(std::span<const ForecastSample> samples);
std::vector<double> targets_of(std::span<const ForecastSample> samples);

/// Needs at least 1000 samples.
GbdtModel train_forecaster(std::span<const ForecastSample> samples, const GbdtConfig& config);

struct ForecastMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  bool operator==(const ForecastMetrics&) const = default;
};

/// r2 = 1 - SSE / SST with SST about the mean of `truth`.
ForecastMetrics forecast_metrics(std::span<const double> predictions, std::span<const double> truth);
ForecastMetrics evaluate_forecaster(const GbdtModel& model, std::span<const ForecastSample> test);

struct ForecastReport {
  int horizon = 0;
  std::size_t n_real_train = 0, n_synthetic_train = 0, n_test = 0;
  ForecastMetrics real, augmented;
  // Percent; positive means the augmented arm is better.
  double mse_improvement = 0.0, mae_improvement = 0.0, r2_improvement = 0.0;
};

/// Throws ContractError when a test sample's span [t-L+1, t+H] meets any
/// training sample's span on the same day.
void check_no_leakage(std::span<const ForecastSample> train, std::span<const ForecastSample> test, int history,
                      int horizon);

/// Arm A trains on `real_train`; arm B on real plus synthetic. Both are
/// scored on `test`.
ForecastReport compare_arms(std::span<const ForecastSample> real_train, std::span<const ForecastSample> synthetic,
                            std::span<const ForecastSample> test, const ForecastConfig& config);

nlohmann::json report_json(const ForecastReport& r);
/// One CSV row per horizon, plus a JSON array beside it.
void write_forecast_reports(std::span<const ForecastReport> reports, const std::filesystem::path& csv_path,
                            const std::filesystem::path& json_path);

}  // namespace lobdiff
