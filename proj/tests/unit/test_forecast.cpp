#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "lobdiff/data/synth_market.hpp"
#include "lobdiff/data/windows.hpp"
#include "lobdiff/forecast/forecast.hpp"
#include "lobdiff/rng.hpp"

using namespace lobdiff;

namespace {

SnapshotSeries constant_series(int n, double v, int start = kSessionStart) {
  SnapshotSeries s;
  s.day = "d";
  for (int t = 0; t < n; ++t) {
    VolumeSnapshot snap;
    snap.time_of_day = start + t;
    snap.volumes.fill(v);
    s.snapshots.push_back(snap);
  }
  return s;
}

SnapshotSeries small_market(int seconds, std::uint64_t seed = 3) {
  auto cfg = SynthMarketConfig::desk(seed, "day0");
  cfg.n_seconds = seconds;
  return synth_market(cfg);
}

GbdtConfig quick_gbdt() {
  GbdtConfig c;
  c.n_trees = 60;
  c.learning_rate = 0.2;
  c.seed = 5;
  return c;
}

FeatureMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng r(seed);
  FeatureMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.values.resize(rows * cols);
  for (auto& v : m.values) v = r.uniform();
  return m;
}

}  // namespace

TEST(BuildTargets, ConstantVolumes) {
  const auto ones = build_targets(constant_series(100, 1.0), 32, 10);
  ASSERT_FALSE(ones.empty());
  for (const auto& s : ones) {
    EXPECT_EQ(s.target, 200.0);
    EXPECT_EQ(s.features.size(), kForecastFeatures);
  }
  EXPECT_EQ(ones.size(), 100u - 32u - 10u + 1u);
  for (const auto& s : build_targets(constant_series(100, 2.5), 32, 30)) EXPECT_EQ(s.target, 600.0 * 2.5);
  EXPECT_TRUE(build_targets(constant_series(41, 1.0), 32, 10).empty());
  EXPECT_EQ(build_targets(constant_series(42, 1.0), 32, 10).size(), 1u);
}

TEST(BuildTargets, MatchesBruteForceOracle) {
  const auto series = small_market(1200);
  const auto samples = build_targets(series, 32, 30);
  ASSERT_GE(samples.size(), 1000u);
  Rng pick(2);
  for (int k = 0; k < 1000; ++k) {
    const auto& s = samples[static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(samples.size()) - 1))];
    double y = 0.0;
    for (int i = 1; i <= 30; ++i) {
      for (int j = 0; j < kLevels; ++j) y += series.snapshots[s.anchor + static_cast<std::size_t>(i)].volumes[static_cast<std::size_t>(j)];
    }
    ASSERT_EQ(s.target, y) << "anchor " << s.anchor;
    std::size_t f = 0;
    for (std::size_t t = s.anchor - 31; t <= s.anchor; ++t) {
      for (int j = 0; j < kLevels; ++j) ASSERT_EQ(s.features[f++], series.snapshots[t].volumes[static_cast<std::size_t>(j)]);
    }
    ASSERT_EQ(s.features[f], time_of_day_fraction(series.snapshots[s.anchor].time_of_day));
  }
}

TEST(BuildTargets, AnchorsNeverSpanGaps) {
  auto s = constant_series(120, 1.0);
  for (std::size_t t = 60; t < s.snapshots.size(); ++t) s.snapshots[t].time_of_day += 5;  // gap after row 59
  const auto samples = build_targets(s, 32, 10);
  for (const auto& x : samples) {
    EXPECT_TRUE(x.anchor + 10 < 60 || x.anchor >= 60 + 31) << x.anchor;
  }
  EXPECT_EQ(samples.size(), (60u - 41u) + (60u - 41u));
  const auto strided = build_targets(constant_series(100, 1.0), 32, 10, 4);
  for (const auto& x : strided) EXPECT_EQ((x.anchor - 31) % 4, 0u);
}

TEST(Gbdt, LearnsLinearSignal) {
  const auto x = random_matrix(3000, 5, 1);
  std::vector<double> y(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) y[r] = 3.0 * x.values[r * x.cols];
  const auto model = train_gbdt(x, y, quick_gbdt());
  const auto test = random_matrix(1000, 5, 2);
  std::vector<double> truth(test.rows);
  for (std::size_t r = 0; r < test.rows; ++r) truth[r] = 3.0 * test.values[r * test.cols];
  EXPECT_GT(forecast_metrics(model.predict(test), truth).r2, 0.99);
}

TEST(Gbdt, ConstantTargetGivesConstantModel) {
  const auto x = random_matrix(1000, 3, 3);
  const std::vector<double> y(x.rows, 7.25);
  const auto model = train_gbdt(x, y, quick_gbdt());
  for (double p : model.predict(random_matrix(50, 3, 4))) EXPECT_EQ(p, 7.25);
}

TEST(Gbdt, SeededDeterminismAndSerialization) {
  const auto x = random_matrix(1500, 4, 5);
  std::vector<double> y(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) y[r] = std::sin(6.0 * x.values[r * 4]) + x.values[r * 4 + 1];
  const auto a = train_gbdt(x, y, quick_gbdt());
  const auto b = train_gbdt(x, y, quick_gbdt());
  EXPECT_EQ(a, b);
  auto other = quick_gbdt();
  other.seed = 6;
  EXPECT_NE(train_gbdt(x, y, other).predict(x), a.predict(x));

  const auto path = std::filesystem::temp_directory_path() / "lobdiff_test_gbdt.json";
  a.save(path);
  const auto back = GbdtModel::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.predict(x), a.predict(x));
}

TEST(Gbdt, TreesRespectLeafAndDepthLimits) {
  const auto x = random_matrix(2000, 3, 7);
  std::vector<double> y(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) y[r] = x.values[r * 3] * x.values[r * 3 + 1];
  GbdtConfig c = quick_gbdt();
  c.num_leaves = 7;
  c.max_depth = 3;
  c.n_trees = 10;
  const auto model = train_gbdt(x, y, c);
  ASSERT_EQ(model.trees().size(), 10u);
  for (const auto& t : model.trees()) {
    int leaves = 0;
    for (int f : t.feature) leaves += f < 0;
    EXPECT_LE(leaves, 7);
    std::vector<int> depth(t.feature.size(), 0);
    for (std::size_t k = 0; k < t.feature.size(); ++k) {
      if (t.feature[k] < 0) continue;
      depth[static_cast<std::size_t>(t.left[k])] = depth[static_cast<std::size_t>(t.right[k])] = depth[k] + 1;
    }
    EXPECT_LE(*std::max_element(depth.begin(), depth.end()), 3);
  }
}

TEST(Gbdt, ConfigValidation) {
  GbdtConfig c;
  EXPECT_NO_THROW(c.validate());
  c.subsample = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  nlohmann::json j = GbdtConfig{};
  EXPECT_EQ(j.get<GbdtConfig>(), GbdtConfig{});
  j["trees"] = 3;
  EXPECT_THROW((void)j.get<GbdtConfig>(), ConfigError);
}

TEST(ForecastMetrics, Definitions) {
  const std::vector<double> y{1, 2, 3, 4};
  const auto perfect = forecast_metrics(y, y);
  EXPECT_EQ(perfect.mse, 0.0);
  EXPECT_EQ(perfect.mae, 0.0);
  EXPECT_EQ(perfect.r2, 1.0);
  const std::vector<double> mean(4, 2.5);
  EXPECT_NEAR(forecast_metrics(mean, y).r2, 0.0, 1e-9);
  const std::vector<double> far(4, 10.0);
  const auto bad = forecast_metrics(far, y);
  EXPECT_LT(bad.r2, 0.0);
  EXPECT_DOUBLE_EQ(bad.mae, 7.5);
  EXPECT_DOUBLE_EQ(bad.mse, (81 + 64 + 49 + 36) / 4.0);
}

TEST(ForecastMetrics, MeanPredictorOnRealTargets) {
  const auto samples = build_targets(small_market(600), 32, 10);
  const auto y = targets_of(samples);
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  EXPECT_NEAR(forecast_metrics(std::vector<double>(y.size(), m), y).r2, 0.0, 1e-9);
}

TEST(CompareArms, LeakageGuard) {
  const auto samples = build_targets(small_market(600), 32, 10);
  std::vector<ForecastSample> train(samples.begin(), samples.begin() + 300);
  std::vector<ForecastSample> test(samples.begin() + 300, samples.end());
  EXPECT_THROW(check_no_leakage(train, test, 32, 10), ContractError);
  // Spans [t-31, t+10]: a gap of 41 anchors clears it.
  std::vector<ForecastSample> clear(samples.begin() + 300 + 41, samples.end());
  EXPECT_NO_THROW(check_no_leakage(train, clear, 32, 10));
  std::vector<ForecastSample> almost(samples.begin() + 300 + 40, samples.end());
  EXPECT_THROW(check_no_leakage(train, almost, 32, 10), ContractError);
  for (auto& s : almost) s.day = "other";
  EXPECT_NO_THROW(check_no_leakage(train, almost, 32, 10));
}

TEST(CompareArms, EmptySyntheticGivesIdenticalArms) {
  const auto samples = build_targets(small_market(1700), 32, 10);
  std::vector<ForecastSample> train(samples.begin(), samples.begin() + 1200);
  std::vector<ForecastSample> test(samples.begin() + 1250, samples.end());
  ForecastConfig cfg;
  cfg.gbdt = quick_gbdt();
  const auto r = compare_arms(train, {}, test, cfg);
  EXPECT_EQ(r.real, r.augmented);
  EXPECT_EQ(r.mse_improvement, 0.0);
  EXPECT_EQ(r.mae_improvement, 0.0);
  EXPECT_EQ(r.r2_improvement, 0.0);
  EXPECT_THROW(compare_arms(std::span(train).first(999), {}, test, cfg), ContractError);
}

TEST(CompareArms, SyntheticSamplesAndReport) {
  const auto series = small_market(1700);
  const auto samples = build_targets(series, 32, 10);
  std::vector<ForecastSample> train(samples.begin(), samples.begin() + 1200);
  std::vector<ForecastSample> test(samples.begin() + 1250, samples.end());

  // Stand-in generated set: the real future rows, shifted by a constant.
  GeneratedSet set;
  for (std::size_t anchor = 100; anchor < 1000; anchor += 50) {
    GeneratedWindow g;
    g.anchor_id = anchor;
    g.volumes.resize(32, kLevels);
    for (int r = 0; r < 32; ++r) {
      for (int j = 0; j < kLevels; ++j) {
        g.volumes(r, j) = series.snapshots[anchor - 31 + static_cast<std::size_t>(r)].volumes[static_cast<std::size_t>(j)] + 1.0;
      }
    }
    set.windows.push_back(g);
  }
  const auto synth = synthetic_samples(series, set, 32, 10);
  ASSERT_EQ(synth.size(), set.windows.size());
  for (const auto& s : synth) {
    const auto real = std::find_if(samples.begin(), samples.end(), [&](const ForecastSample& x) { return x.anchor == s.anchor; });
    ASSERT_NE(real, samples.end());
    EXPECT_EQ(s.features, real->features);
    EXPECT_NEAR(s.target, real->target + 200.0, 1e-6);
    EXPECT_TRUE(s.synthetic);
  }

  ForecastConfig cfg;
  cfg.gbdt = quick_gbdt();
  const auto r = compare_arms(train, synth, test, cfg);
  EXPECT_EQ(r.n_synthetic_train, synth.size());
  EXPECT_GT(r.real.mse, 0.0);
  EXPECT_NEAR(r.mse_improvement, 100.0 * (r.real.mse - r.augmented.mse) / r.real.mse, 1e-9);

  const auto dir = std::filesystem::temp_directory_path();
  const std::vector<ForecastReport> reports{r, r};
  write_forecast_reports(reports, dir / "lobdiff_fc.csv", dir / "lobdiff_fc.json");
  std::ifstream js(dir / "lobdiff_fc.json");
  const auto j = nlohmann::json::parse(js);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["horizon"], 10);
  EXPECT_DOUBLE_EQ(j[0]["real"]["mse"].get<double>(), r.real.mse);
  std::ifstream csv(dir / "lobdiff_fc.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 3);
  std::filesystem::remove(dir / "lobdiff_fc.csv");
  std::filesystem::remove(dir / "lobdiff_fc.json");
}
