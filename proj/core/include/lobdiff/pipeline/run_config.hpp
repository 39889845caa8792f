#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lobdiff/diffusion/schedule.hpp"
#include "lobdiff/forecast/forecast.hpp"
#include "lobdiff/network/config.hpp"
#include "lobdiff/sampling/sampler.hpp"
#include "lobdiff/training/trainer.hpp"

namespace lobdiff {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | lobster | snapshots
  // synthetic
  int days = 1;
  int n_seconds = kSessionSeconds;
  // lobster: parallel lists; snapshots: snapshot CSV files
  std::vector<std::string> orderbook_files;
  std::vector<std::string> message_files;
  std::vector<std::string> snapshot_files;
  // chronological split inside every day
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  int train_stride = 8;
  int val_stride = 16;
  double clip_quantile = 0.99;
  double scale_const = 15.0;

  void validate() const;
};

struct ScheduleConfig {
  std::string preset = "desk";  // desk | default | linear
  int steps = 200;
  double beta_first = 1e-4;
  double beta_last = 0.07;

  NoiseSchedule build() const;
};

struct GenerationConfig {
  int max_windows = 256;  // evenly spaced over the training-region windows
};

struct EvalConfig {
  int max_lag = 100;
};

struct DownstreamConfig {
  std::vector<int> horizons{10, 30};
  ForecastConfig forecast;
};

/// Everything one run needs. Module seeds are not configured directly; they
/// are derived from `seed` by purpose so stages never share a stream.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  DataConfig data;
  NetworkConfig network = NetworkConfig::desk(true);
  TrainConfig train;
  ScheduleConfig schedule;
  SamplerConfig sampler;
  GenerationConfig generation;
  EvalConfig eval;
  DownstreamConfig downstream;

  void validate() const;
  /// Train config with the derived seed and the network's conditioning flag.
  TrainConfig train_config() const;
  SamplerConfig sampler_config() const;
  GbdtConfig gbdt_config() const;
  std::uint64_t synth_seed() const;
};

/// Strict parse: unknown keys are a ConfigError naming the full key path.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_json(const RunConfig& c);

/// "a.b.c=value" sets j["a"]["b"]["c"]. The value is read as JSON when it
/// parses, otherwise as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Reads the file, applies overrides, then parses. Relative paths inside the
/// config resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace lobdiff
