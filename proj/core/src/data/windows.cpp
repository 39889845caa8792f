#include "lobdiff/data/windows.hpp"

#include <algorithm>
#include <cmath>

namespace lobdiff {

double WindowSample::mean_lambda() const {
  if (lam.empty()) return 0.0;
  double s = 0.0;
  for (double v : lam) s += v;
  return s / static_cast<double>(lam.size());
}

double time_of_day_fraction(int time_of_day) {
  return static_cast<double>(time_of_day - kSessionStart) / static_cast<double>(kSessionSeconds);
}

std::vector<WindowSample> build_windows(const SnapshotSeries& series, const NormalizationSpec& spec,
                                        int length, int stride) {
  if (length < 1) throw ConfigError("window length must be >= 1");
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  std::vector<WindowSample> out;
  const auto span = static_cast<std::size_t>(2 * length);
  if (series.size() < span) return out;

  for (std::size_t end = span - 1; end < series.size(); end += static_cast<std::size_t>(stride)) {
    const std::size_t begin = end + 1 - span;
    if (!series.contiguous(begin, end)) continue;

    WindowSample w;
    w.past.resize(length, kLevels);
    w.future.resize(length, kLevels);
    w.tau.resize(length);
    w.lam.resize(length);
    for (int r = 0; r < length; ++r) {
      const auto& past = series[begin + r];
      const auto& future = series[begin + length + r];
      const LevelVector yp = normalize(past.volumes, spec);
      const LevelVector yf = normalize(future.volumes, spec);
      for (int j = 0; j < kLevels; ++j) {
        w.past(r, j) = yp[j];
        w.future(r, j) = yf[j];
      }
      w.tau[r] = time_of_day_fraction(future.time_of_day);
      w.lam[r] = clipped_liquidity(future.volumes, spec) / spec.lambda_scale;
    }
    w.anchor_time = series[begin + length - 1].time_of_day;
    w.anchor_index = end;
    w.day = series.day;
    out.push_back(std::move(w));
  }
  return out;
}

bool lambda_consistent(const WindowSample& w, const NormalizationSpec& spec, double rel_tol) {
  const Window raw = denormalize(w.future, spec);
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    const double expected = raw.row(r).sum() / spec.lambda_scale;
    const double scale = std::max(std::abs(expected), 1e-300);
    if (std::abs(expected - w.lam[static_cast<std::size_t>(r)]) > rel_tol * scale) return false;
  }
  return true;
}

}  // namespace lobdiff
