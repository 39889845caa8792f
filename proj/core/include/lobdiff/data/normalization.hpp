#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "lobdiff/common.hpp"
#include "lobdiff/data/snapshot.hpp"

namespace lobdiff {

/// Clipping caps plus the square-root scaling used to map raw volumes into
/// model space: y = sqrt(min(x, cap)) / scale_const.
struct NormalizationSpec {
  double scale_const = 15.0;
  LevelVector clip_caps{};
  double lambda_scale = 1.0;  // mean training liquidity, divides the raw liquidity condition

  void validate() const;
};

/// Linear-interpolated empirical quantile (the "type 7" rule).
double empirical_quantile(std::vector<double> values, double q);

/// Fits per-level caps at quantile q over the training split and the mean
/// clipped liquidity. A level that is identically zero gets cap 1.
NormalizationSpec fit_normalization(std::span<const SnapshotSeries> train, double q = 0.99,
                                    double scale_const = 15.0);

double normalize_value(double x, double cap, double scale_const);
/// Inverse map. Negative inputs are clamped to zero before squaring.
double denormalize_value(double y, double scale_const);

LevelVector normalize(const LevelVector& x, const NormalizationSpec& spec);
LevelVector denormalize(const LevelVector& y, const NormalizationSpec& spec);

/// Row-wise forms for L x D windows.
Window normalize(const Window& raw, const NormalizationSpec& spec);
Window denormalize(const Window& normalized, const NormalizationSpec& spec);

/// Raw clipped liquidity of one snapshot, i.e. sum_j min(x_j, cap_j).
double clipped_liquidity(const LevelVector& x, const NormalizationSpec& spec);

/// Structured text with keys `const`, `clip_caps`, `lambda_scale`.
void write_normalization(const NormalizationSpec& spec, const std::filesystem::path& path);
NormalizationSpec read_normalization(const std::filesystem::path& path);

}  // namespace lobdiff
