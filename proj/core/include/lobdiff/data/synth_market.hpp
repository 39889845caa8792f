#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lobdiff/common.hpp"
#include "lobdiff/data/snapshot.hpp"

namespace lobdiff {

/// Parameters of the synthetic order-book volume generator used as a
/// ground-truth market in tests and demos.
///
/// Each level's volume is a Gamma(shape, scale) quantile of a latent unit
/// Gaussian process (Gaussian copula), so the marginals are exactly Gamma when
/// the intraday modulation is off. The latent process mixes a factor shared by
/// all levels with an idiosyncratic one; both are sums of AR(1) components
/// whose persistences are rho^(ratio^k), k = 0..K-1, weighted so that the
/// autocorrelation decays approximately like a power law. Volumes are finally
/// multiplied by a U-shaped intraday profile 1 + a * (3 (2 tau - 1)^2 - 1),
/// which has unit mean over the session.
struct SynthMarketConfig {
  LevelVector gamma_shape{};
  LevelVector gamma_scale{};
  double persistence = 0.0;               // rho, slowest component
  std::vector<double> mixture_weights{1.0};
  double timescale_ratio = 4.0;
  double common_loading = 0.0;            // latent variance share of the common factor
  double intraday_amplitude = 0.0;
  std::uint64_t seed = 0;
  std::string day = "synthetic";
  int start_time = kSessionStart;
  int n_seconds = kSessionSeconds;

  LevelVector mean_profile() const;
  std::vector<double> component_persistence() const;
  void validate() const;
  /// Sets mixture_weights so the fitted exponent of the observed volume ACF,
  /// intraday profile included, is `gamma` over lags 1..max_lag.
  void calibrate_long_memory(double gamma, int max_lag = 100);

  /// Hump-shaped depth (peak at `peak_level` on both sides), one mixture
  /// component, no intraday effect.
  static SynthMarketConfig hump(int peak_level, double base_mean, double peak_mean, double shape,
                                std::uint64_t seed);

  /// The long-memory market used at desk scale: hump at level 4, a shared
  /// liquidity factor and a six-component mixture designed for a 0.5 ACF exponent.
  static SynthMarketConfig desk(std::uint64_t seed, std::string day);
};

/// Mixture weights for the given component persistences such that the
/// expected sample ACF of an `n_samples`-long path, fitted as C * l^-gamma over
/// lags 1..max_lag by log-log least squares, has exponent `gamma`. A
/// deterministic component with ACF `trend_acf` and variance share
/// `trend_share` can be blended into the target curve.
std::vector<double> long_memory_weights(double gamma, std::span<const double> persistences,
                                        int n_samples, int max_lag = 100, double trend_share = 0.0,
                                        std::span<const double> trend_acf = {});

/// ACF of the latent mixture at lag l (before the Gamma transform).
double mixture_acf(std::span<const double> persistences, std::span<const double> weights, int lag);

SnapshotSeries synth_market(const SynthMarketConfig& config);

}  // namespace lobdiff
