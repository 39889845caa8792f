#pragma once

#include <vector>

namespace lobdiff {

/// Discrete noise schedule: beta_1..beta_N and alpha_i = prod_{j<=i} (1 - beta_j).
/// Steps are 1-based everywhere in the public API.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// Validates 0 < beta_1 < ... < beta_N < 1 and builds the cumulative products.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int step) const;
  double alpha(int step) const;
  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alphas() const { return alpha_; }

  /// alpha_N below `threshold`, i.e. the terminal marginal is close to N(0, I).
  bool near_prior(double threshold = 1e-3) const;

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  void check_step(int step) const;
  std::vector<double> beta_;
  std::vector<double> alpha_;
};

NoiseSchedule linear_schedule(int steps, double beta_first, double beta_last);

/// N = 1000, beta from 1e-4 to 0.02.
NoiseSchedule default_schedule();
/// N = 200, beta from 1e-4 to 0.07 (alpha_N ~ 7.6e-4).
NoiseSchedule desk_schedule();

}  // namespace lobdiff
