#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lobdiff/diffusion/objective.hpp"
#include "lobdiff/diffusion/schedule.hpp"

namespace lobdiff {
namespace {

Window random_window(Rng& rng, int rows = kWindowLength, int cols = kLevels) {
  Window w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  return w;
}

ConditioningContext some_ctx(Rng& rng) {
  ConditioningContext c;
  c.past = random_window(rng);
  c.tau.assign(kWindowLength, 0.25);
  return c;
}

class ZeroModel : public EpsModel {
 public:
  Window predict(const Window& x, int, const ConditioningContext&) const override {
    return Window::Zero(x.rows(), x.cols());
  }
};

// Knows the clean window, so it can recover the injected noise exactly.
class OracleModel : public EpsModel {
 public:
  OracleModel(Window x0, const NoiseSchedule& s) : x0_(std::move(x0)), s_(s) {}
  Window predict(const Window& x, int step, const ConditioningContext&) const override {
    const double a = s_.alpha(step);
    return (x - std::sqrt(a) * x0_) / std::sqrt(1.0 - a);
  }

 private:
  Window x0_;
  const NoiseSchedule& s_;
};

// Returns 2 for real contexts and 0 for null ones.
class SplitModel : public EpsModel {
 public:
  mutable int calls = 0;
  Window predict(const Window& x, int, const ConditioningContext& ctx) const override {
    ++calls;
    return Window::Constant(x.rows(), x.cols(), ctx.is_null ? 0.0 : 2.0);
  }
};

// Output depends on the context, so dropout shows up in the loss.
class ContextModel : public EpsModel {
 public:
  Window predict(const Window& x, int step, const ConditioningContext& ctx) const override {
    const double c = ctx.is_null ? -0.3 : 0.1 * ctx.past.sum();
    return 0.5 * x + Window::Constant(x.rows(), x.cols(), c + 1e-3 * step);
  }
};

TEST(Schedule, TwoStepProduct) {
  const auto s = linear_schedule(2, 0.1, 0.2);
  EXPECT_DOUBLE_EQ(s.alpha(1), 0.9);
  EXPECT_DOUBLE_EQ(s.alpha(2), 0.9 * 0.8);
  EXPECT_NEAR(s.alpha(2), 0.72, 1e-15);
}

TEST(Schedule, DefaultTerminalAlphaMatchesProductOracle) {
  const auto s = default_schedule();
  ASSERT_EQ(s.steps(), 1000);
  // Independent log-sum evaluation of prod(1 - beta_i).
  EXPECT_NEAR(s.alpha(1000), 4.035829765375687e-05, 1e-12 * 4.04e-05);
  EXPECT_LT(s.alpha(1000), 1e-4);
  EXPECT_TRUE(s.near_prior());
}

TEST(Schedule, DeskProfileKeepsTerminalPrior) {
  const auto s = desk_schedule();
  EXPECT_EQ(s.steps(), 200);
  EXPECT_NEAR(s.alpha(200), 0.0007616800821789047, 1e-15);
  EXPECT_TRUE(s.near_prior());
  // The looser beta_N = 0.05 variant would not satisfy the terminal check.
  EXPECT_FALSE(linear_schedule(200, 1e-4, 0.05).near_prior());
}

TEST(Schedule, Monotone) {
  const auto s = default_schedule();
  for (int i = 2; i <= s.steps(); ++i) {
    EXPECT_GT(s.beta(i), s.beta(i - 1));
    EXPECT_LT(s.alpha(i), s.alpha(i - 1));
  }
}

TEST(Schedule, RejectsBadParameters) {
  EXPECT_THROW(linear_schedule(10, 1e-4, 1.0), ConfigError);
  EXPECT_THROW(linear_schedule(10, 1e-4, 1.5), ConfigError);
  EXPECT_THROW(linear_schedule(1, 1e-4, 0.02), ConfigError);
  EXPECT_THROW(linear_schedule(10, 0.0, 0.02), ConfigError);
  EXPECT_THROW(linear_schedule(10, 0.03, 0.02), ConfigError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 0.1}), ConfigError);
}

TEST(QSample, ClosedFormLimits) {
  Rng rng(1);
  const Window x0 = random_window(rng);
  const Window eps = random_window(rng);
  EXPECT_TRUE(q_sample_with_alpha(x0, 1.0, eps) == x0);
  EXPECT_TRUE(q_sample_with_alpha(x0, 0.0, eps) == eps);
  const Window zero = Window::Zero(kWindowLength, kLevels);
  EXPECT_TRUE(q_sample_with_alpha(zero, 0.75, eps).isApprox(0.5 * eps, 1e-15));
}

TEST(QSample, StepOutOfRange) {
  const auto s = linear_schedule(10, 1e-4, 0.02);
  const Window w = Window::Zero(kWindowLength, kLevels);
  EXPECT_THROW(q_sample(w, 0, w, s), std::out_of_range);
  EXPECT_THROW(q_sample(w, 11, w, s), std::out_of_range);
  EXPECT_THROW(q_sample(w, 1, Window::Zero(3, 3), s), ContractError);
}

TEST(QSample, MarginalMoments) {
  const auto s = default_schedule();
  const int step = 300;
  const double a = s.alpha(step);
  const double x0 = 1.7;
  Rng rng(2);
  const int n = 100000;
  double sum = 0, sq = 0;
  Window one(1, 1), e(1, 1);
  one(0, 0) = x0;
  for (int i = 0; i < n; ++i) {
    e(0, 0) = rng.normal();
    const double v = q_sample(one, step, e, s)(0, 0);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  const double sd = std::sqrt(1 - a);
  EXPECT_NEAR(mean, std::sqrt(a) * x0, 3 * sd / std::sqrt(n));
  // Variance of the sample variance of a Gaussian is 2 sigma^4 / n.
  EXPECT_NEAR(var, 1 - a, 3 * std::sqrt(2.0 / n) * (1 - a));
}

TEST(Score, PointExamples) {
  const Window zero = Window::Zero(2, 2);
  EXPECT_TRUE(score_from_eps_with_alpha(zero, 0.75).isZero());
  const Window one = Window::Ones(1, 1);
  EXPECT_DOUBLE_EQ(score_from_eps_with_alpha(one, 0.75)(0, 0), -2.0);
  EXPECT_THROW(score_from_eps_with_alpha(one, 1.0), NumericError);
}

TEST(Score, InverseConsistency) {
  const auto s = default_schedule();
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const int i = static_cast<int>(rng.uniform_int(1, s.steps()));
    const Window e = random_window(rng);
    const Window back = -std::sqrt(1 - s.alpha(i)) * score_from_eps(e, i, s);
    EXPECT_TRUE(back.isApprox(e, 1e-14));
  }
}

TEST(Score, WeightedObjectiveEquivalence) {
  const auto s = default_schedule();
  Rng rng(5);
  for (int k = 0; k < 10000; ++k) {
    const int i = static_cast<int>(rng.uniform_int(1, s.steps()));
    const Window e = random_window(rng, 4, 5);
    const Window pred = random_window(rng, 4, 5);
    const double lhs = (1 - s.alpha(i)) * (score_from_eps(pred, i, s) - score_from_eps(e, i, s)).squaredNorm();
    const double rhs = (pred - e).squaredNorm();
    ASSERT_LE(std::abs(lhs - rhs), 1e-9 * rhs);
  }
}

TEST(DsmLoss, PerfectDenoiserGivesZero) {
  const auto s = linear_schedule(200, 1e-4, 0.07);
  Rng rng(6);
  const Window x0 = random_window(rng);
  std::vector<TrainingExample> batch(16, TrainingExample{x0, some_ctx(rng)});
  OracleModel oracle(x0, s);
  Rng r2(1);
  EXPECT_LT(dsm_loss(oracle, batch, s, 0.1, r2), 1e-20);
}

TEST(DsmLoss, ZeroNetGivesUnitPerCoordinate) {
  const auto s = default_schedule();
  Rng rng(7);
  std::vector<TrainingExample> batch;
  for (int k = 0; k < 200; ++k) batch.push_back({random_window(rng), some_ctx(rng)});
  ZeroModel zero;
  Rng r2(8);
  const double loss = dsm_loss(zero, batch, s, 0.1, r2);
  EXPECT_NEAR(loss, 1.0, 0.05);
}

TEST(DsmLoss, FullDropoutEqualsUnconditionalTraining) {
  const auto s = linear_schedule(50, 1e-4, 0.2);
  Rng rng(9);
  std::vector<TrainingExample> cond, uncond;
  for (int k = 0; k < 8; ++k) {
    TrainingExample ex{random_window(rng), some_ctx(rng)};
    cond.push_back(ex);
    ex.ctx = ConditioningContext::null_like(ex.ctx);
    uncond.push_back(ex);
  }
  Rng a(10);
  const auto draws = draw_dsm_batch(cond, s, 1.0, a);
  for (const auto& d : draws) EXPECT_TRUE(d.ctx.is_null);
  ContextModel m;
  Rng c(10), d(10);
  EXPECT_EQ(dsm_loss(m, cond, s, 1.0, c), dsm_loss(m, uncond, s, 0.0, d));
}

TEST(DsmLoss, DrawOrderIsFixed) {
  const auto s = linear_schedule(50, 1e-4, 0.2);
  Rng rng(11);
  std::vector<TrainingExample> batch{{random_window(rng), some_ctx(rng)}};
  Rng a(3);
  const auto draws = draw_dsm_batch(batch, s, 0.5, a);
  Rng b(3);
  const int step = static_cast<int>(b.uniform_int(1, 50));
  EXPECT_EQ(draws[0].step, step);
  EXPECT_DOUBLE_EQ(draws[0].eps(0, 0), b.normal());
  EXPECT_DOUBLE_EQ(draws[0].eps(0, 1), b.normal());
}

TEST(DsmLoss, NonFiniteOutputNamesBatchIndex) {
  class NanModel : public EpsModel {
   public:
    Window predict(const Window& x, int, const ConditioningContext&) const override {
      return Window::Constant(x.rows(), x.cols(), std::nan(""));
    }
  } nan_model;
  const auto s = linear_schedule(10, 1e-4, 0.2);
  Rng rng(12);
  std::vector<TrainingExample> batch{{random_window(rng), some_ctx(rng)}};
  try {
    dsm_loss(nan_model, batch, s, 0.0, rng);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch element 0"), std::string::npos);
  }
  std::vector<TrainingExample> empty;
  EXPECT_THROW(dsm_loss(nan_model, empty, s, 0.0, rng), ContractError);
}

TEST(Guidance, Endpoints) {
  SplitModel m;
  Rng rng(13);
  const Window x = random_window(rng);
  const auto ctx = some_ctx(rng);
  const Window cond = m.predict(x, 3, ctx);
  const Window uncond = m.predict(x, 3, ConditioningContext::null_like(ctx));
  m.calls = 0;
  EXPECT_TRUE(guided_eps(m, x, 3, ctx, 1.0) == cond);
  EXPECT_EQ(m.calls, 1);
  EXPECT_TRUE(guided_eps(m, x, 3, ctx, 0.0) == uncond);
  EXPECT_EQ(m.calls, 2);
  EXPECT_DOUBLE_EQ(guided_eps(m, x, 3, ctx, 0.5)(0, 0), 1.0);
  EXPECT_THROW(guided_eps(m, x, 3, ctx, std::nan("")), ConfigError);
}

TEST(Guidance, AffineInOmega) {
  ContextModel m;
  Rng rng(14);
  const Window x = random_window(rng);
  const auto ctx = some_ctx(rng);
  const Window g0 = guided_eps(m, x, 5, ctx, 0.0);
  const Window g1 = guided_eps(m, x, 5, ctx, 1.0);
  for (double w : {0.25, 2.0, 3.5}) {
    EXPECT_TRUE(guided_eps(m, x, 5, ctx, w).isApprox(w * g1 + (1 - w) * g0, 1e-12));
  }
}

TEST(NullContext, KeepsShapesAndZeroes) {
  Rng rng(15);
  auto ctx = some_ctx(rng);
  ctx.lam = std::vector<double>(kWindowLength, 2.0);
  const auto n = ConditioningContext::null_like(ctx);
  EXPECT_TRUE(n.is_null);
  EXPECT_TRUE(n.past.isZero());
  ASSERT_TRUE(n.lam.has_value());
  EXPECT_EQ(n.lam->size(), static_cast<std::size_t>(kWindowLength));
}

}  // namespace
}  // namespace lobdiff
