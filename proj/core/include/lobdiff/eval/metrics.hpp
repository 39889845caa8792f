#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lobdiff/common.hpp"
#include "lobdiff/data/snapshot.hpp"
#include "lobdiff/sampling/sampler.hpp"

namespace lobdiff {

/// A fit that cannot be made from the data at hand (too few usable points).
class FitError : public Error {
 public:
  using Error::Error;
};

/// One vector of pooled raw volumes per level.
using LevelPools = std::vector<std::vector<double>>;

LevelPools pool_levels(std::span<const Window> windows);
LevelPools pool_levels(const SnapshotSeries& series);
/// n x 20 raw volume matrix of a series.
Window series_matrix(const SnapshotSeries& series);
std::vector<Window> generated_windows(const GeneratedSet& set);

/// Exact 1-Wasserstein distance between two empirical distributions, the
/// integral of |F - G| over the merged support.
double wasserstein1(std::span<const double> a, std::span<const double> b);
/// Largest gap between the two empirical CDFs.
double ks_statistic(std::span<const double> a, std::span<const double> b);
/// KL(real || fake) on `bins` equal-width bins spanning the pooled range, with
/// `smoothing` added to every bin probability before renormalizing.
double kl_divergence(std::span<const double> real, std::span<const double> fake, int bins = 100,
                     double smoothing = 1e-10);

struct MarginalDistances {
  std::vector<double> wasserstein, kl, ks;  // per level
  double mean_wasserstein = 0.0, mean_kl = 0.0, mean_ks = 0.0;
};

/// Per-level distances and their unweighted means. Every level needs at least
/// `min_samples` values on both sides; an empty level is named in the error.
MarginalDistances marginal_distances(const LevelPools& real, const LevelPools& fake, std::size_t min_samples = 100);

Eigen::VectorXd avg_volume_per_level(const Window& series);
Eigen::VectorXd avg_volume_per_level(std::span<const Window> windows);

/// Pearson correlation across levels. A zero-variance level gets 0 off the
/// diagonal and 1 on it (with a warning).
Eigen::MatrixXd cross_corr(const Window& series);
Eigen::MatrixXd cross_corr(std::span<const Window> windows);
/// Same on first differences; for windows the differences stay inside each window.
Eigen::MatrixXd diff_corr(const Window& series);
Eigen::MatrixXd diff_corr(std::span<const Window> windows);

/// Biased ACF of one level at lags 1..max_lag. For windows, lag products are
/// taken inside each window around the pooled mean.
std::vector<double> acf(const Window& series, int level, int max_lag = 100);
std::vector<double> acf(std::span<const Window> windows, int level, int max_lag);

struct PowerLawFit {
  double C = 0.0;
  double gamma = 0.0;
  double r2 = 0.0;
  int lags_used = 0;
};

/// OLS of log ACF(l) on log l over lags [first_lag, last_lag] with ACF(l) > 0.
/// acf_values[0] is lag 1. Fewer than 5 usable lags is a FitError.
PowerLawFit powerlaw_fit(std::span<const double> acf_values, int first_lag = 1, int last_lag = 100);

struct MetricsReport {
  MarginalDistances marginals;
  Eigen::VectorXd avg_real, avg_fake;
  Eigen::MatrixXd cross_real, cross_fake, diff_real, diff_fake;
  std::vector<std::vector<double>> acf_real, acf_fake;  // per level
  std::vector<std::optional<PowerLawFit>> fit_real, fit_fake;
};

/// Real marginals come from the real windows. The real profile, correlations
/// and ACF (lags up to max_lag) use `real_series` when it is nonempty, each
/// series treated as its own stretch of time. Generated windows only support
/// lags below their length.
MetricsReport compute_metrics(std::span<const Window> real_windows, std::span<const Window> fake_windows,
                              std::span<const Window> real_series = {}, int max_lag = 100);

/// marginals.csv, avg_volume.csv, {cross,diff}_corr_{real,fake}.csv,
/// acf_{real,fake}.csv, powerlaw.csv and a metrics.json bundle.
void write_metrics(const MetricsReport& report, const std::filesystem::path& dir);

struct CounterfactualGrid {
  static constexpr int kRows = 4;
  std::vector<std::string> row_names;
  std::vector<std::vector<double>> cells;  // kRows x bin count
};

/// Table rows: Real_bin vs Fake_bin; Real_all vs Fake_bin; Real_bin vs
/// Fake_OL_all; Real_bin vs Fake_UL_all. Each cell is the mean-over-levels
/// 1-Wasserstein distance. `factual[k]` must be generated for `real[k]`.
CounterfactualGrid counterfactual_grid(std::span<const Window> real, const QuintileBins& bins,
                                       std::span<const Window> factual, std::span<const Window> over,
                                       std::span<const Window> under);

void write_counterfactual_grid(const CounterfactualGrid& grid, const std::filesystem::path& path);

}  // namespace lobdiff
