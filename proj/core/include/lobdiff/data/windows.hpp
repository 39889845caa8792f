#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lobdiff/common.hpp"
#include "lobdiff/data/normalization.hpp"
#include "lobdiff/data/snapshot.hpp"

namespace lobdiff {

/// A conditioning unit: normalized past and future blocks plus the
/// time-of-day and liquidity sequences aligned with the future rows.
struct WindowSample {
  Window past;    // L x D, normalized
  Window future;  // L x D, normalized
  std::vector<double> tau;  // L values in [0, 1]
  std::vector<double> lam;  // L values: clipped raw liquidity / lambda_scale
  int anchor_time = 0;      // second of the last past row
  std::size_t anchor_index = 0;  // series index of the last future row
  std::string day;

  double mean_lambda() const;
};

/// Seconds elapsed since 10:00:00 divided by the session length.
double time_of_day_fraction(int time_of_day);

/// Builds windows whose last future row sits at indices 2L-1, 2L-1+stride, ...
/// Windows that straddle a timestamp gap are discarded.
std::vector<WindowSample> build_windows(const SnapshotSeries& series, const NormalizationSpec& spec,
                                        int length = kWindowLength, int stride = 1);

/// Recomputes every lambda value from the future rows; true when all agree to rel_tol.
bool lambda_consistent(const WindowSample& w, const NormalizationSpec& spec, double rel_tol = 1e-6);

}  // namespace lobdiff
