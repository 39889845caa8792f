#include "lobdiff/diffusion/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lobdiff/common.hpp"

namespace lobdiff {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.size() < 2) throw ConfigError("noise schedule needs at least 2 steps");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) throw ConfigError("every beta must lie in (0, 1)");
    if (i > 0 && !(betas[i] > betas[i - 1])) throw ConfigError("betas must be strictly increasing");
  }
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  s.alpha_.resize(s.beta_.size());
  double running = 1.0;
  for (std::size_t i = 0; i < s.beta_.size(); ++i) {
    running *= 1.0 - s.beta_[i];
    s.alpha_[i] = running;
  }
  return s;
}

void NoiseSchedule::check_step(int step) const {
  if (step < 1 || step > steps()) {
    throw std::out_of_range("diffusion step " + std::to_string(step) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(int step) const {
  check_step(step);
  return beta_[static_cast<std::size_t>(step - 1)];
}

double NoiseSchedule::alpha(int step) const {
  check_step(step);
  return alpha_[static_cast<std::size_t>(step - 1)];
}

bool NoiseSchedule::near_prior(double threshold) const { return !alpha_.empty() && alpha_.back() < threshold; }

NoiseSchedule linear_schedule(int steps, double beta_first, double beta_last) {
  if (steps < 2) throw ConfigError("linear_schedule needs N >= 2");
  if (!(beta_first > 0.0 && beta_first < beta_last && beta_last < 1.0)) {
    throw ConfigError("linear_schedule needs 0 < beta_1 < beta_N < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    betas[static_cast<std::size_t>(i)] =
        beta_first + (beta_last - beta_first) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

NoiseSchedule default_schedule() { return linear_schedule(1000, 1e-4, 0.02); }

NoiseSchedule desk_schedule() { return linear_schedule(200, 1e-4, 0.07); }

}  // namespace lobdiff
