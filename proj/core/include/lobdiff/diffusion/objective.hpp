#pragma once

#include <span>
#include <vector>

#include "lobdiff/common.hpp"
#include "lobdiff/diffusion/conditioning.hpp"
#include "lobdiff/diffusion/schedule.hpp"
#include "lobdiff/rng.hpp"

namespace lobdiff {

/// Closed-form forward corruption: sqrt(alpha_i) x0 + sqrt(1 - alpha_i) eps.
Window q_sample(const Window& x0, int step, const Window& eps, const NoiseSchedule& schedule);
Window q_sample_with_alpha(const Window& x0, double alpha, const Window& eps);

/// Score of the Gaussian corruption kernel implied by a noise prediction:
/// -eps_hat / sqrt(1 - alpha_i).
Window score_from_eps(const Window& eps_hat, int step, const NoiseSchedule& schedule);
Window score_from_eps_with_alpha(const Window& eps_hat, double alpha);

/// Classifier-free guidance on noise predictions:
/// omega * eps(x, ctx) + (1 - omega) * eps(x, null). The endpoints 0 and 1 make
/// a single network call and return that prediction unchanged.
Window guided_eps(const EpsModel& model, const Window& x, int step, const ConditioningContext& ctx,
                  double omega);

struct TrainingExample {
  Window x0;
  ConditioningContext ctx;
};

std::vector<TrainingExample> make_examples(std::span<const WindowSample> windows, bool with_liquidity);

/// One corrupted draw of the denoising objective.
struct DsmDraw {
  Window noisy;
  Window eps;
  int step = 0;
  ConditioningContext ctx;
};

/// Per example, in this order: step ~ U{1..N}, eps ~ N(0, I) filled row-major,
/// then one uniform for the condition-dropout coin (always consumed).
std::vector<DsmDraw> draw_dsm_batch(std::span<const TrainingExample> batch, const NoiseSchedule& schedule,
                                    double p_drop, Rng& rng);

/// Mean over the batch of the per-coordinate squared error between the
/// model's noise prediction and the injected noise. This equals the
/// (1 - alpha_i)-weighted score-matching summand divided by L*D.
double dsm_loss(const EpsModel& model, std::span<const TrainingExample> batch, const NoiseSchedule& schedule,
                double p_drop, Rng& rng);

/// Same loss on pre-drawn corruptions.
double dsm_loss(const EpsModel& model, std::span<const DsmDraw> draws);

}  // namespace lobdiff
