#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lobdiff/data/windows.hpp"
#include "lobdiff/diffusion/schedule.hpp"
#include "lobdiff/network/parameters.hpp"
#include "lobdiff/rng.hpp"

namespace lobdiff {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  double ema_alpha = 0.999;
  int patience = 100;
  double min_delta = 0.001;
  double p_drop = 0.1;
  int max_epochs = 1000;
  std::uint64_t seed = 0;
  bool conditional = false;  // must agree with NetworkConfig::liquidity_conditioned
  // Conventional Adam moments and a global gradient-norm clip.
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // <= 0 disables clipping

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;  // wall clock, excluded from equality
  friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.train_loss == b.train_loss && a.val_loss == b.val_loss &&
           a.learning_rate == b.learning_rate;
  }
};

/// Patience counter on a loss that must drop by more than min_delta below the
/// best value seen so far to count as an improvement.
class EarlyStopping {
 public:
  EarlyStopping(double min_delta, int patience);
  /// Records one epoch; returns true when the run should stop.
  bool update(double val_loss);
  bool improved_last() const { return improved_last_; }
  double best() const { return best_; }
  int epochs_since_improve() const { return since_; }
  void restore(double best, int since) {
    best_ = best;
    since_ = since;
  }

 private:
  double min_delta_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_ = 0;
  bool improved_last_ = false;
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
};

struct TrainState {
  NetworkParameters params;
  NetworkParameters ema_params;
  AdamState adam;
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improve = 0;
  bool stopped_early = false;
  Rng rng;
  std::vector<EpochRecord> history;
  TrainConfig train_config;
  NoiseSchedule schedule;
};

/// ema <- alpha * ema + (1 - alpha) * theta, elementwise.
void ema_update(std::vector<double>& ema, const std::vector<double>& params, double alpha);
void ema_update(NetworkParameters& ema, const NetworkParameters& params, double alpha);

/// One Adam step with bias correction; grad is clipped to grad_clip in L2 norm
/// first. Returns the pre-clip gradient norm.
double adam_step(std::vector<double>& params, std::span<double> grad, AdamState& state, const TrainConfig& cfg);

/// Denoising loss on val_set with p_drop = 0 and a corruption draw fixed by `seed`.
double validate(const NetworkParameters& params, std::span<const WindowSample> val_set, const NoiseSchedule& schedule,
                std::uint64_t seed);

/// Freshly initialized state (parameters from the training seed, EMA = params).
TrainState init_train_state(const NetworkConfig& net_config, const TrainConfig& train_config,
                            const NoiseSchedule& schedule);

struct TrainHooks {
  /// Called after every epoch with the record just appended.
  std::function<void(const EpochRecord&)> on_epoch;
  /// Replaces the measured validation loss (epoch, measured) -> used; lets a
  /// test drive the stopping rule with a synthetic loss curve.
  std::function<double(int, double)> val_override;
};

TrainState train(std::span<const WindowSample> train_set, std::span<const WindowSample> val_set,
                 const NetworkConfig& net_config, const TrainConfig& train_config, const NoiseSchedule& schedule,
                 const TrainHooks& hooks = {});

/// Continues `state` until early stopping or train_config.max_epochs total epochs.
void resume_training(TrainState& state, std::span<const WindowSample> train_set,
                     std::span<const WindowSample> val_set, const TrainHooks& hooks = {});

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
/// Loads and refuses a checkpoint whose network differs from `expected`, naming the field.
TrainState load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected);

/// CSV: epoch,train_loss,val_loss,lr[,seconds].
void write_training_log(const std::filesystem::path& path, std::span<const EpochRecord> history,
                        bool with_seconds = true);

}  // namespace lobdiff
