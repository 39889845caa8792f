#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "lobdiff/data/synth_market.hpp"
#include "lobdiff/data/windows.hpp"
#include "lobdiff/network/score_network.hpp"
#include "lobdiff/training/trainer.hpp"

using namespace lobdiff;

namespace {

NetworkConfig tiny_net(bool conditional) {
  NetworkConfig c;
  c.channels = 8;
  c.n_res_layers = 2;
  c.dilation_cycle = {1, 2};
  c.n_heads = 2;
  c.step_embed_dim = 16;
  c.cond_embed_dim = 16;
  c.liquidity_conditioned = conditional;
  return c;
}

struct Data {
  std::vector<WindowSample> train, val;
};

Data small_data() {
  auto cfg = SynthMarketConfig::desk(3, "day0");
  cfg.n_seconds = 900;
  const auto series = synth_market(cfg);
  const auto spec = fit_normalization(std::span(&series, 1));
  auto all = build_windows(series, spec, 32, 24);
  Data d;
  d.val.assign(all.end() - 6, all.end());
  d.train.assign(all.begin(), all.end() - 6);
  return d;
}

TrainConfig quick_config(bool conditional) {
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.batch_size = 8;
  t.max_epochs = 3;
  t.seed = 11;
  t.conditional = conditional;
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lobdiff_test_" + name);
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndUnknownKey) {
  TrainConfig c = quick_config(true);
  c.min_delta = 0.0025;
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<TrainConfig>(), c);
  nlohmann::json bad = j;
  bad["learning_rte"] = 1.0;
  try {
    (void)bad.get<TrainConfig>();
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.learning_rte"), std::string::npos);
  }
}

TEST(TrainConfig, RejectsInvalidValues) {
  auto check = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  check([](TrainConfig& c) { c.ema_alpha = 1.0; });
  check([](TrainConfig& c) { c.ema_alpha = 0.0; });
  check([](TrainConfig& c) { c.patience = 0; });
  check([](TrainConfig& c) { c.min_delta = -1e-3; });
  check([](TrainConfig& c) { c.batch_size = 0; });
  check([](TrainConfig& c) { c.learning_rate = 0.0; });
  check([](TrainConfig& c) { c.p_drop = 1.5; });
  TrainConfig ok;
  EXPECT_NO_THROW(ok.validate());
}

TEST(EarlyStopping, SubThresholdGainsAreNotImprovements) {
  EarlyStopping s(0.001, 3);
  EXPECT_FALSE(s.update(1.0));
  EXPECT_TRUE(s.improved_last());
  EXPECT_FALSE(s.update(0.9995));
  EXPECT_FALSE(s.improved_last());
  EXPECT_FALSE(s.update(0.9990));
  EXPECT_FALSE(s.improved_last());
  EXPECT_EQ(s.epochs_since_improve(), 2);
  EXPECT_TRUE(s.update(0.9991));
  EXPECT_DOUBLE_EQ(s.best(), 1.0);
  EarlyStopping t(0.001, 3);
  t.update(1.0);
  t.update(0.9989);
  EXPECT_TRUE(t.improved_last());
}

TEST(EarlyStopping, FiresExactlyAfterPatienceQuietEpochs) {
  for (int patience : {1, 2, 5, 100}) {
    EarlyStopping s(0.001, patience);
    s.update(2.0);
    int quiet = 0;
    bool stopped = false;
    while (!stopped && quiet <= patience) {
      stopped = s.update(2.0 - 0.0009);
      ++quiet;
    }
    EXPECT_EQ(quiet, patience);
  }
}

TEST(EarlyStopping, RealImprovementResetsTheCounter) {
  EarlyStopping s(0.001, 2);
  s.update(1.0);
  EXPECT_FALSE(s.update(1.0));
  EXPECT_FALSE(s.update(0.95));
  EXPECT_EQ(s.epochs_since_improve(), 0);
  EXPECT_DOUBLE_EQ(s.best(), 0.95);
}

TEST(Ema, PointExamples) {
  std::vector<double> ema{0.0};
  ema_update(ema, {1.0}, 0.999);
  EXPECT_NEAR(ema[0], 0.001, 1e-15);
  std::vector<double> fixed{0.3, -2.0};
  ema_update(fixed, {0.3, -2.0}, 0.999);
  EXPECT_EQ(fixed, (std::vector<double>{0.3, -2.0}));
  std::vector<double> deg{5.0};
  ema_update(deg, {7.0}, 0.0);
  EXPECT_EQ(deg[0], 7.0);
  std::vector<double> short_ema{1.0};
  EXPECT_THROW(ema_update(short_ema, {1.0, 2.0}, 0.5), ContractError);
}

TEST(Ema, GeometricConvergenceToConstantParams) {
  const double alpha = 0.999;
  const std::vector<double> theta{1.5, -0.25, 3.0};
  const std::vector<double> ema0{0.0, 1.0, -4.0};
  std::vector<double> ema = ema0;
  const int k = 2500;
  for (int i = 0; i < k; ++i) ema_update(ema, theta, alpha);
  for (std::size_t j = 0; j < ema.size(); ++j) {
    const double expect = theta[j] + (ema0[j] - theta[j]) * std::pow(alpha, k);
    EXPECT_NEAR(ema[j], expect, 1e-9 * std::abs(expect));
  }
}

TEST(Adam, FirstStepMovesByLearningRateInGradientSign) {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.grad_clip = 0.0;
  std::vector<double> p{1.0, 1.0, 1.0};
  std::vector<double> g{0.5, -2.0, 0.0};
  AdamState st;
  adam_step(p, g, st, cfg);
  EXPECT_NEAR(p[0], 0.99, 1e-8);
  EXPECT_NEAR(p[1], 1.01, 1e-8);
  EXPECT_EQ(p[2], 1.0);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, ClipsGlobalNorm) {
  TrainConfig cfg;
  cfg.grad_clip = 1.0;
  std::vector<double> p{0.0, 0.0};
  std::vector<double> g{30.0, 40.0};
  AdamState st;
  EXPECT_DOUBLE_EQ(adam_step(p, g, st, cfg), 50.0);
  // First moment holds (1 - beta1) times the clipped gradient (0.6, 0.8).
  EXPECT_NEAR(st.m[0], 0.1 * 0.6, 1e-12);
  EXPECT_NEAR(st.m[1], 0.1 * 0.8, 1e-12);
  std::vector<double> bad{std::nan(""), 0.0};
  EXPECT_THROW(adam_step(p, bad, st, cfg), NumericError);
}

TEST(Validate, FixedDrawAndZeroNetBaseline) {
  const Data d = small_data();
  const auto params = init_parameters(tiny_net(true), 4);
  const auto sched = desk_schedule();
  const double a = validate(params, d.val, sched, 9);
  EXPECT_EQ(a, validate(params, d.val, sched, 9));
  EXPECT_NE(a, validate(params, d.val, sched, 10));
  // The head is zero at init, so this is the mean square of unit normals.
  EXPECT_NEAR(a, 1.0, 0.1);
  EXPECT_THROW(validate(params, {}, sched, 9), ContractError);
}

TEST(Train, ZeroEpochsReturnsInitState) {
  const Data d = small_data();
  TrainConfig t = quick_config(true);
  t.max_epochs = 0;
  const auto s = train(d.train, d.val, tiny_net(true), t, desk_schedule());
  EXPECT_TRUE(s.history.empty());
  EXPECT_EQ(s.epoch, 0);
  EXPECT_EQ(s.params, init_train_state(tiny_net(true), t, desk_schedule()).params);
  EXPECT_EQ(s.ema_params, s.params);
}

TEST(Train, RejectsEmptySetsAndVariantMismatch) {
  const Data d = small_data();
  const TrainConfig t = quick_config(true);
  EXPECT_THROW(train({}, d.val, tiny_net(true), t, desk_schedule()), ContractError);
  EXPECT_THROW(train(d.train, {}, tiny_net(true), t, desk_schedule()), ContractError);
  EXPECT_THROW(train(d.train, d.val, tiny_net(false), t, desk_schedule()), ConfigError);
}

TEST(Train, DeterministicHistoryAndParameters) {
  const Data d = small_data();
  const TrainConfig t = quick_config(true);
  const auto a = train(d.train, d.val, tiny_net(true), t, desk_schedule());
  const auto b = train(d.train, d.val, tiny_net(true), t, desk_schedule());
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.ema_params, b.ema_params);
  EXPECT_NE(a.params, a.ema_params);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const Data d = small_data();
  TrainConfig t = quick_config(true);
  const auto full = train(d.train, d.val, tiny_net(true), t, desk_schedule());
  t.max_epochs = 1;
  auto part = train(d.train, d.val, tiny_net(true), t, desk_schedule());
  const auto path = temp_path("resume.ckpt");
  save_checkpoint(part, path);
  auto resumed = load_checkpoint(path);
  resumed.train_config.max_epochs = 3;
  resume_training(resumed, d.train, d.val);
  std::filesystem::remove(path);
  EXPECT_EQ(resumed.history, full.history);
  EXPECT_EQ(resumed.params, full.params);
}

TEST(Train, InjectedPlateauTriggersEarlyStop) {
  const Data d = small_data();
  TrainConfig t = quick_config(false);
  t.patience = 4;
  t.max_epochs = 50;
  t.batch_size = 64;
  TrainHooks hooks;
  // 1.0, 0.9995, 0.9990, then flat: never better than the first value by more than 0.001.
  hooks.val_override = [](int epoch, double) { return std::max(1.0 - 0.0005 * (epoch - 1), 0.999); };
  const auto s = train(std::span(d.train).first(4), d.val, tiny_net(false), t, desk_schedule(), hooks);
  EXPECT_TRUE(s.stopped_early);
  EXPECT_EQ(s.epoch, 5);
  EXPECT_EQ(s.epochs_since_improve, 4);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  const Data d = small_data();
  const TrainConfig t = quick_config(true);
  auto s = init_train_state(tiny_net(true), t, desk_schedule());
  auto w = s.params.matrix("head.fc2.b");
  w(0, 0) = std::nan("");
  try {
    resume_training(s, d.train, d.val);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1 batch 0"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RoundTripPredictsBitwiseEqual) {
  const Data d = small_data();
  TrainConfig t = quick_config(true);
  t.max_epochs = 1;
  const auto s = train(d.train, d.val, tiny_net(true), t, desk_schedule());
  const auto path = temp_path("rt.ckpt");
  save_checkpoint(s, path);
  const auto r = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(r.params, s.params);
  EXPECT_EQ(r.ema_params, s.ema_params);
  EXPECT_EQ(r.adam.m, s.adam.m);
  EXPECT_EQ(r.adam.t, s.adam.t);
  EXPECT_EQ(r.schedule, s.schedule);
  EXPECT_EQ(r.train_config, s.train_config);
  EXPECT_EQ(r.history, s.history);
  EXPECT_TRUE(r.rng == s.rng);
  const auto ctx = ConditioningContext::from_window(d.val[0], true);
  const Window a = eps_predict(s.ema_params, d.val[0].future, 17, ctx);
  const Window b = eps_predict(r.ema_params, d.val[0].future, 17, ctx);
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Checkpoint, TruncatedCorruptAndMismatchedFilesAreRefused) {
  const TrainConfig t = quick_config(true);
  const auto s = init_train_state(tiny_net(true), t, desk_schedule());
  const auto path = temp_path("bad.ckpt");
  save_checkpoint(s, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    bytes = os.str();
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };

  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(path), CheckpointError);

  std::string flipped = bytes;
  flipped[flipped.size() - 100] ^= 0x10;
  write(flipped);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);

  std::string version = bytes;
  version[8] = 9;
  write(version);
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  write(bytes);
  NetworkConfig other = tiny_net(true);
  other.n_heads = 4;
  try {
    load_checkpoint(path, other);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("n_heads"), std::string::npos);
  }
  EXPECT_NO_THROW(load_checkpoint(path, tiny_net(true)));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(TrainingLog, CsvColumns) {
  const std::vector<EpochRecord> h{{1, 0.5, 0.25, 1e-4, 2.0}, {2, 0.125, 0.0625, 1e-4, 2.5}};
  const auto path = temp_path("log.csv");
  write_training_log(path, h);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "epoch,train_loss,val_loss,lr,seconds");
  EXPECT_EQ(first, "1,0.5,0.25,1e-04,2");
  write_training_log(path, h, false);
  std::ifstream in2(path);
  std::getline(in2, header);
  EXPECT_EQ(header, "epoch,train_loss,val_loss,lr");
  std::filesystem::remove(path);
}
