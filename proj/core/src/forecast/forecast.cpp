#include "lobdiff/forecast/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lobdiff/data/windows.hpp"
#include "../format_util.hpp"
#include "../json_util.hpp"

namespace lobdiff {

void ForecastConfig::validate() const {
  if (horizon < 1) throw ConfigError("forecast.horizon must be >= 1");
  if (history < 1) throw ConfigError("forecast.history must be >= 1");
  if (anchor_stride < 1) throw ConfigError("forecast.anchor_stride must be >= 1");
  gbdt.validate();
}

void to_json(nlohmann::json& j, const ForecastConfig& c) {
  j = nlohmann::json{
      {"horizon", c.horizon}, {"history", c.history}, {"anchor_stride", c.anchor_stride}, {"gbdt", c.gbdt}};
}

void from_json(const nlohmann::json& j, ForecastConfig& c) {
  detail::JsonReader r(j, "forecast");
  r.get("horizon", c.horizon);
  r.get("history", c.history);
  r.get("anchor_stride", c.anchor_stride);
  if (const auto* g = r.child("gbdt")) g->get_to(c.gbdt);
  r.finish();
}

namespace {

std::vector<double> past_features(const SnapshotSeries& series, std::size_t anchor, int history) {
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(history) * kLevels + 1);
  for (std::size_t t = anchor + 1 - static_cast<std::size_t>(history); t <= anchor; ++t) {
    const auto& v = series.snapshots[t].volumes;
    f.insert(f.end(), v.begin(), v.end());
  }
  f.push_back(time_of_day_fraction(series.snapshots[anchor].time_of_day));
  return f;
}

}  // namespace

std::vector<ForecastSample> build_targets(const SnapshotSeries& series, int history, int horizon, int stride) {
  if (history < 1 || horizon < 1 || stride < 1) throw ConfigError("build_targets: history, horizon, stride must be >= 1");
  std::vector<ForecastSample> out;
  const std::size_t n = series.snapshots.size();
  const auto L = static_cast<std::size_t>(history);
  const auto H = static_cast<std::size_t>(horizon);
  if (n < L + H) return out;
  for (std::size_t t = L - 1; t + H < n; t += static_cast<std::size_t>(stride)) {
    if (!series.contiguous(t + 1 - L, t + H)) continue;
    ForecastSample s;
    s.features = past_features(series, t, history);
    double y = 0.0;
    // One running sum, time then level, so the value is reproducible bit for bit.
    for (std::size_t i = 1; i <= H; ++i) {
      for (double v : series.snapshots[t + i].volumes) y += v;
    }
    s.target = y;
    s.anchor = t;
    s.day = series.day;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ForecastSample> synthetic_samples(const SnapshotSeries& series, const GeneratedSet& set, int history,
                                              int horizon) {
  std::vector<ForecastSample> out;
  out.reserve(set.windows.size());
  const auto L = static_cast<std::size_t>(history);
  for (const auto& g : set.windows) {
    const auto len = static_cast<std::size_t>(g.volumes.rows());
    if (static_cast<Eigen::Index>(horizon) > g.volumes.rows()) {
      throw ContractError("synthetic_samples: horizon exceeds the generated window length");
    }
    if (g.anchor_id < len || g.anchor_id >= series.snapshots.size()) {
      throw ContractError("synthetic_samples: anchor " + std::to_string(g.anchor_id) + " is outside the series");
    }
    const std::size_t t = g.anchor_id - len;
    if (t + 1 < L || !series.contiguous(t + 1 - L, t)) {
      throw ContractError("synthetic_samples: no contiguous real past for anchor " + std::to_string(g.anchor_id));
    }
    ForecastSample s;
    s.features = past_features(series, t, history);
    s.target = g.volumes.topRows(horizon).sum();
    s.anchor = t;
    s.day = series.day;
    s.synthetic = true;
    out.push_back(std::move(s));
  }
  return out;
}

FeatureMatrix to_matrix(std::span<const ForecastSample> samples) {
  FeatureMatrix m;
  m.rows = samples.size();
  m.cols = samples.empty() ? 0 : samples.front().features.size();
  m.values.reserve(m.rows * m.cols);
  for (const auto& s : samples) {
    if (s.features.size() != m.cols) throw ContractError("to_matrix: samples have different feature counts");
    m.values.insert(m.values.end(), s.features.begin(), s.features.end());
  }
  return m;
}

std::vector<double> targets_of(std::span<const ForecastSample> samples) {
  std::vector<double> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.target);
  return y;
}

GbdtModel train_forecaster(std::span<const ForecastSample> samples, const GbdtConfig& config) {
  if (samples.size() < 1000) {
    throw ContractError("train_forecaster: need at least 1000 samples, got " + std::to_string(samples.size()));
  }
  const auto y = targets_of(samples);
  return train_gbdt(to_matrix(samples), y, config);
}

ForecastMetrics forecast_metrics(std::span<const double> predictions, std::span<const double> truth) {
  if (truth.empty() || predictions.size() != truth.size()) {
    throw ContractError("forecast_metrics: need equal, nonempty prediction and truth vectors");
  }
  const double n = static_cast<double>(truth.size());
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sse = 0.0, sae = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = predictions[i] - truth[i];
    sse += e * e;
    sae += std::abs(e);
    sst += (truth[i] - mean) * (truth[i] - mean);
  }
  ForecastMetrics m;
  m.mse = sse / n;
  m.mae = sae / n;
  m.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : -INFINITY);
  return m;
}

ForecastMetrics evaluate_forecaster(const GbdtModel& model, std::span<const ForecastSample> test) {
  if (test.empty()) throw ContractError("evaluate_forecaster: empty test set");
  std::vector<double> pred;
  pred.reserve(test.size());
  for (const auto& s : test) pred.push_back(model.predict(s.features));
  const auto y = targets_of(test);
  return forecast_metrics(pred, y);
}

void check_no_leakage(std::span<const ForecastSample> train, std::span<const ForecastSample> test, int history,
                      int horizon) {
  // Per day: train spans sorted by start with a running max of their ends.
  struct Spans {
    std::vector<std::pair<long, long>> s;
    std::vector<long> max_end;
  };
  const long L = history;
  const long H = horizon;
  std::map<std::string, Spans> by_day;
  for (const auto& t : train) {
    const long a = static_cast<long>(t.anchor);
    by_day[t.day].s.emplace_back(a - L + 1, a + H);
  }
  for (auto& [day, sp] : by_day) {
    std::sort(sp.s.begin(), sp.s.end());
    long m = sp.s.front().second;
    for (const auto& iv : sp.s) {
      m = std::max(m, iv.second);
      sp.max_end.push_back(m);
    }
  }
  for (const auto& t : test) {
    const auto it = by_day.find(t.day);
    if (it == by_day.end()) continue;
    const long a = static_cast<long>(t.anchor) - L + 1;
    const long b = static_cast<long>(t.anchor) + H;
    const auto& sp = it->second;
    const auto last = std::upper_bound(sp.s.begin(), sp.s.end(), std::pair{b, std::numeric_limits<long>::max()});
    if (last == sp.s.begin()) continue;
    const auto k = static_cast<std::size_t>(last - sp.s.begin()) - 1;
    if (sp.max_end[k] >= a) {
      throw ContractError("forecast leakage: test anchor " + std::to_string(t.anchor) + " on day " + t.day +
                          " overlaps a training span");
    }
  }
}

namespace {

double pct(double num, double den) { return den == 0.0 ? 0.0 : 100.0 * num / std::abs(den); }

}  // namespace

ForecastReport compare_arms(std::span<const ForecastSample> real_train, std::span<const ForecastSample> synthetic,
                            std::span<const ForecastSample> test, const ForecastConfig& config) {
  config.validate();
  if (test.empty()) throw ContractError("compare_arms: empty test set");
  check_no_leakage(real_train, test, config.history, config.horizon);
  check_no_leakage(synthetic, test, config.history, config.horizon);

  ForecastReport r;
  r.horizon = config.horizon;
  r.n_real_train = real_train.size();
  r.n_synthetic_train = synthetic.size();
  r.n_test = test.size();

  spdlog::info("forecast H={}: real arm on {} samples", config.horizon, real_train.size());
  const GbdtModel real_model = train_forecaster(real_train, config.gbdt);
  r.real = evaluate_forecaster(real_model, test);
  if (synthetic.empty()) {
    r.augmented = r.real;  // same data and seed give the same model
  } else {
    std::vector<ForecastSample> all(real_train.begin(), real_train.end());
    all.insert(all.end(), synthetic.begin(), synthetic.end());
    spdlog::info("forecast H={}: augmented arm on {} samples", config.horizon, all.size());
    r.augmented = evaluate_forecaster(train_forecaster(all, config.gbdt), test);
  }
  r.mse_improvement = pct(r.real.mse - r.augmented.mse, r.real.mse);
  r.mae_improvement = pct(r.real.mae - r.augmented.mae, r.real.mae);
  r.r2_improvement = pct(r.augmented.r2 - r.real.r2, r.real.r2);
  return r;
}

nlohmann::json report_json(const ForecastReport& r) {
  auto arm = [](const ForecastMetrics& m) { return nlohmann::json{{"mse", m.mse}, {"mae", m.mae}, {"r2", m.r2}}; };
  return {{"horizon", r.horizon},
          {"n_real_train", r.n_real_train},
          {"n_synthetic_train", r.n_synthetic_train},
          {"n_test", r.n_test},
          {"real", arm(r.real)},
          {"augmented", arm(r.augmented)},
          {"improvement_pct", {{"mse", r.mse_improvement}, {"mae", r.mae_improvement}, {"r2", r.r2_improvement}}}};
}

void write_forecast_reports(std::span<const ForecastReport> reports, const std::filesystem::path& csv_path,
                            const std::filesystem::path& json_path) {
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw Error("cannot write " + csv_path.string());
  csv << "horizon,n_real_train,n_synthetic_train,n_test,real_mse,real_mae,real_r2,aug_mse,aug_mae,aug_r2,"
         "mse_improvement_pct,mae_improvement_pct,r2_improvement_pct\n";
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    using detail::format_double;
    csv << r.horizon << ',' << r.n_real_train << ',' << r.n_synthetic_train << ',' << r.n_test << ','
        << format_double(r.real.mse) << ',' << format_double(r.real.mae) << ',' << format_double(r.real.r2) << ','
        << format_double(r.augmented.mse) << ',' << format_double(r.augmented.mae) << ','
        << format_double(r.augmented.r2) << ',' << format_double(r.mse_improvement) << ','
        << format_double(r.mae_improvement) << ',' << format_double(r.r2_improvement) << '\n';
    arr.push_back(report_json(r));
  }
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw Error("cannot write " + json_path.string());
  js << arr.dump(2) << '\n';
}

}  // namespace lobdiff
