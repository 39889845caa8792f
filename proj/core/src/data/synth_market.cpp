#include "lobdiff/data/synth_market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "lobdiff/rng.hpp"

namespace lobdiff {
namespace {

std::vector<double> weights_with_exponent(std::span<const double> persistences, double exponent) {
  std::vector<double> w(persistences.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double rate = persistences[k] > 0.0 ? -std::log(persistences[k]) : 50.0;
    w[k] = std::pow(rate, exponent);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return w;
}

// Slope of log(acf) on log(lag) over the positive entries, negated.
double loglog_exponent(const std::vector<double>& acf) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < acf.size(); ++i) {
    if (acf[i] <= 0.0) continue;
    const double x = std::log(static_cast<double>(i + 1));
    const double y = std::log(acf[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return 0.0;
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Expected biased-estimator ACF of a path of length n, accounting for the
// subtraction of the sample mean.
std::vector<double> expected_sample_acf(std::span<const double> rho, std::span<const double> w,
                                        int n, int max_lag) {
  double var_mean = 1.0;
  for (int h = 1; h < n; ++h) {
    var_mean += 2.0 * (1.0 - static_cast<double>(h) / n) * mixture_acf(rho, w, h);
  }
  var_mean /= n;
  std::vector<double> acf(static_cast<std::size_t>(max_lag));
  for (int l = 1; l <= max_lag; ++l) {
    acf[static_cast<std::size_t>(l - 1)] = (mixture_acf(rho, w, l) - var_mean) / (1.0 - var_mean);
  }
  return acf;
}

// Multiplicative U-shaped intraday profile, unit mean over the session.
double intraday_modulation(int time_of_day, double amplitude) {
  const double tau = static_cast<double>(time_of_day - kSessionStart) / kSessionSeconds;
  const double s = 2.0 * tau - 1.0;
  return 1.0 + amplitude * (3.0 * s * s - 1.0);
}

class LatentMixture {
 public:
  LatentMixture(const std::vector<double>& rho, const std::vector<double>& w, Rng& rng)
      : rho_(rho), state_(rho.size()), sqrt_w_(w.size()) {
    for (std::size_t k = 0; k < rho.size(); ++k) {
      sqrt_w_[k] = std::sqrt(w[k]);
      state_[k] = rng.normal();
    }
  }

  double value() const {
    double z = 0.0;
    for (std::size_t k = 0; k < state_.size(); ++k) z += sqrt_w_[k] * state_[k];
    return z;
  }

  void step(Rng& rng) {
    for (std::size_t k = 0; k < state_.size(); ++k) {
      state_[k] = rho_[k] * state_[k] + std::sqrt(1.0 - rho_[k] * rho_[k]) * rng.normal();
    }
  }

 private:
  std::vector<double> rho_;
  std::vector<double> state_;
  std::vector<double> sqrt_w_;
};

}  // namespace

double mixture_acf(std::span<const double> persistences, std::span<const double> weights, int lag) {
  double a = 0.0;
  for (std::size_t k = 0; k < persistences.size(); ++k) a += weights[k] * std::pow(persistences[k], lag);
  return a;
}

std::vector<double> long_memory_weights(double gamma, std::span<const double> persistences,
                                        int n_samples, int max_lag, double trend_share,
                                        std::span<const double> trend_acf) {
  if (persistences.empty()) throw ConfigError("long_memory_weights needs at least one component");
  double lo = 0.0;
  double hi = 3.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const auto w = weights_with_exponent(persistences, mid);
    auto acf = expected_sample_acf(persistences, w, n_samples, max_lag);
    for (std::size_t l = 0; l < acf.size() && l < trend_acf.size(); ++l) {
      acf[l] = (1.0 - trend_share) * acf[l] + trend_share * trend_acf[l];
    }
    if (loglog_exponent(acf) < gamma) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return weights_with_exponent(persistences, 0.5 * (lo + hi));
}

LevelVector SynthMarketConfig::mean_profile() const {
  LevelVector m{};
  for (int j = 0; j < kLevels; ++j) m[j] = gamma_shape[j] * gamma_scale[j];
  return m;
}

std::vector<double> SynthMarketConfig::component_persistence() const {
  std::vector<double> rho(mixture_weights.size());
  for (std::size_t k = 0; k < rho.size(); ++k) {
    rho[k] = std::pow(persistence, std::pow(timescale_ratio, static_cast<double>(k)));
  }
  return rho;
}

void SynthMarketConfig::validate() const {
  for (int j = 0; j < kLevels; ++j) {
    if (!(gamma_shape[j] > 0.0) || !(gamma_scale[j] > 0.0)) {
      throw ConfigError("gamma shape and scale must be > 0 (level " + std::to_string(j) + ")");
    }
  }
  if (!(persistence >= 0.0 && persistence < 1.0)) throw ConfigError("persistence must lie in [0, 1)");
  if (mixture_weights.empty()) throw ConfigError("mixture_weights must not be empty");
  double total = 0.0;
  for (double w : mixture_weights) {
    if (!(w >= 0.0)) throw ConfigError("mixture weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
  if (!(timescale_ratio > 1.0)) throw ConfigError("timescale_ratio must be > 1");
  if (!(common_loading >= 0.0 && common_loading <= 1.0)) throw ConfigError("common_loading must lie in [0, 1]");
  if (!(intraday_amplitude >= 0.0 && intraday_amplitude < 1.0)) {
    throw ConfigError("intraday_amplitude must lie in [0, 1)");
  }
  if (n_seconds < 0) throw ConfigError("n_seconds must be >= 0");
}

SynthMarketConfig SynthMarketConfig::hump(int peak_level, double base_mean, double peak_mean, double shape,
                                          std::uint64_t seed) {
  SynthMarketConfig c;
  for (int k = 1; k <= kBookDepth; ++k) {
    const double d = static_cast<double>(k - peak_level);
    const double mean = base_mean + (peak_mean - base_mean) * std::exp(-d * d / 6.0);
    const int ask = kBookDepth - k;
    const int bid = kBookDepth + k - 1;
    for (int j : {ask, bid}) {
      c.gamma_shape[j] = shape;
      c.gamma_scale[j] = mean / shape;
    }
  }
  c.seed = seed;
  return c;
}

SynthMarketConfig SynthMarketConfig::desk(std::uint64_t seed, std::string day) {
  SynthMarketConfig c = hump(4, 120.0, 400.0, 2.5, seed);
  c.day = std::move(day);
  c.persistence = 0.9995;
  c.timescale_ratio = 4.0;
  c.mixture_weights.assign(6, 1.0 / 6.0);
  c.common_loading = 0.5;
  // A stronger intraday swing flattens the ACF past what the mixture can offset.
  c.intraday_amplitude = 0.1;
  c.calibrate_long_memory(0.5);
  return c;
}

void SynthMarketConfig::calibrate_long_memory(double gamma, int max_lag) {
  // Volumes are m_t * g_t with a deterministic profile m and a stationary g
  // whose squared coefficient of variation is 1 / shape. The profile adds a
  // slowly varying share to the observed ACF that the latent decay must offset.
  const int n = n_seconds;
  std::vector<double> m(static_cast<std::size_t>(std::max(n, 0)));
  for (int t = 0; t < n; ++t) m[static_cast<std::size_t>(t)] = intraday_modulation(start_time + t, intraday_amplitude);
  double trend_share = 0.0;
  std::vector<double> trend_acf;
  if (n > max_lag && intraday_amplitude > 0.0) {
    const double mean = std::accumulate(m.begin(), m.end(), 0.0) / n;
    double var = 0.0, second = 0.0;
    for (double v : m) {
      var += (v - mean) * (v - mean);
      second += v * v;
    }
    trend_acf.resize(static_cast<std::size_t>(max_lag));
    for (int l = 1; l <= max_lag; ++l) {
      double s = 0.0;
      for (int t = 0; t + l < n; ++t) s += (m[t] - mean) * (m[t + l] - mean);
      trend_acf[static_cast<std::size_t>(l - 1)] = s / var;
    }
    var /= n;
    second /= n;
    double cv2 = 0.0;
    for (int j = 0; j < kLevels; ++j) cv2 += 1.0 / gamma_shape[j];
    cv2 /= kLevels;
    trend_share = var / (var + second * cv2);
  }
  mixture_weights = long_memory_weights(gamma, component_persistence(), n, max_lag, trend_share, trend_acf);
}

SnapshotSeries synth_market(const SynthMarketConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "synth_market/" + config.day));
  const auto rho = config.component_persistence();
  const auto& w = config.mixture_weights;

  LatentMixture common(rho, w, rng);
  std::vector<LatentMixture> own;
  own.reserve(kLevels);
  for (int j = 0; j < kLevels; ++j) own.emplace_back(rho, w, rng);

  const double a = std::sqrt(config.common_loading);
  const double b = std::sqrt(1.0 - config.common_loading);
  constexpr double kTail = 1e-12;

  SnapshotSeries series;
  series.day = config.day;
  series.snapshots.reserve(static_cast<std::size_t>(config.n_seconds));
  for (int t = 0; t < config.n_seconds; ++t) {
    if (t > 0) {
      common.step(rng);
      for (auto& m : own) m.step(rng);
    }
    VolumeSnapshot snap;
    snap.time_of_day = config.start_time + t;
    const double modulation = intraday_modulation(snap.time_of_day, config.intraday_amplitude);
    const double c = common.value();
    for (int j = 0; j < kLevels; ++j) {
      const double z = a * c + b * own[static_cast<std::size_t>(j)].value();
      const double u = std::clamp(0.5 * std::erfc(-z / std::sqrt(2.0)), kTail, 1.0 - kTail);
      const double x = boost::math::gamma_p_inv(config.gamma_shape[j], u) * config.gamma_scale[j];
      snap.volumes[j] = x * modulation;
    }
    series.snapshots.push_back(snap);
  }
  return series;
}

}  // namespace lobdiff
