#include "lobdiff/diffusion/objective.hpp"

#include <cmath>
#include <string>

namespace lobdiff {

ConditioningContext ConditioningContext::from_window(const WindowSample& w, bool with_liquidity) {
  ConditioningContext ctx;
  ctx.past = w.past;
  ctx.tau = w.tau;
  if (with_liquidity) ctx.lam = w.lam;
  return ctx;
}

ConditioningContext ConditioningContext::null_like(const ConditioningContext& ctx) {
  ConditioningContext out;
  out.past = Window::Zero(ctx.past.rows(), ctx.past.cols());
  out.tau.assign(ctx.tau.size(), 0.0);
  if (ctx.lam) out.lam = std::vector<double>(ctx.lam->size(), 0.0);
  out.is_null = true;
  return out;
}

Window q_sample_with_alpha(const Window& x0, double alpha, const Window& eps) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ContractError("q_sample: shape mismatch");
  return std::sqrt(alpha) * x0 + std::sqrt(1.0 - alpha) * eps;
}

Window q_sample(const Window& x0, int step, const Window& eps, const NoiseSchedule& schedule) {
  return q_sample_with_alpha(x0, schedule.alpha(step), eps);
}

Window score_from_eps_with_alpha(const Window& eps_hat, double alpha) {
  if (!(alpha < 1.0)) throw NumericError("score_from_eps: alpha = 1 leaves no noise to invert");
  return -eps_hat / std::sqrt(1.0 - alpha);
}

Window score_from_eps(const Window& eps_hat, int step, const NoiseSchedule& schedule) {
  return score_from_eps_with_alpha(eps_hat, schedule.alpha(step));
}

Window guided_eps(const EpsModel& model, const Window& x, int step, const ConditioningContext& ctx,
                  double omega) {
  if (!std::isfinite(omega)) throw ConfigError("guidance weight must be finite");
  if (omega == 1.0) return model.predict(x, step, ctx);
  const ConditioningContext null_ctx = ConditioningContext::null_like(ctx);
  if (omega == 0.0) return model.predict(x, step, null_ctx);
  const Window cond = model.predict(x, step, ctx);
  const Window uncond = model.predict(x, step, null_ctx);
  return omega * cond + (1.0 - omega) * uncond;
}

std::vector<TrainingExample> make_examples(std::span<const WindowSample> windows, bool with_liquidity) {
  std::vector<TrainingExample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back({w.future, ConditioningContext::from_window(w, with_liquidity)});
  return out;
}

std::vector<DsmDraw> draw_dsm_batch(std::span<const TrainingExample> batch, const NoiseSchedule& schedule,
                                    double p_drop, Rng& rng) {
  if (batch.empty()) throw ContractError("dsm batch is empty");
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw ConfigError("p_drop must lie in [0, 1]");
  std::vector<DsmDraw> draws;
  draws.reserve(batch.size());
  for (const auto& ex : batch) {
    DsmDraw d;
    d.step = static_cast<int>(rng.uniform_int(1, schedule.steps()));
    d.eps.resize(ex.x0.rows(), ex.x0.cols());
    for (Eigen::Index r = 0; r < d.eps.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.eps.cols(); ++c) d.eps(r, c) = rng.normal();
    }
    const bool drop = rng.uniform() < p_drop;
    d.ctx = drop ? ConditioningContext::null_like(ex.ctx) : ex.ctx;
    d.noisy = q_sample(ex.x0, d.step, d.eps, schedule);
    draws.push_back(std::move(d));
  }
  return draws;
}

double dsm_loss(const EpsModel& model, std::span<const DsmDraw> draws) {
  if (draws.empty()) throw ContractError("dsm batch is empty");
  double total = 0.0;
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const Window pred = model.predict(draws[k].noisy, draws[k].step, draws[k].ctx);
    if (!pred.allFinite()) {
      throw NumericError("non-finite noise prediction for batch element " + std::to_string(k));
    }
    total += (pred - draws[k].eps).squaredNorm() / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(draws.size());
}

double dsm_loss(const EpsModel& model, std::span<const TrainingExample> batch, const NoiseSchedule& schedule,
                double p_drop, Rng& rng) {
  const auto draws = draw_dsm_batch(batch, schedule, p_drop, rng);
  return dsm_loss(model, draws);
}

}  // namespace lobdiff
