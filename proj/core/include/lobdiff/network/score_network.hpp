#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lobdiff/common.hpp"
#include "lobdiff/diffusion/conditioning.hpp"
#include "lobdiff/network/parameters.hpp"

namespace lobdiff {

/// kFast runs the whole network in single precision (stored parameters stay
/// double); kExact runs in double, which the finite-difference gradient check needs.
enum class Precision { kFast, kExact };

struct FilmPair {
  Eigen::VectorXd scale;
  Eigen::VectorXd shift;
};

/// Sinusoidal step embedding of even width `dim`: sin block then cos block.
Eigen::VectorXd step_embedding(int step, int dim);

/// One FiLM (scale, shift) pair per residual block.
std::vector<FilmPair> encode_condition(const NetworkParameters& params, const ConditioningContext& ctx, int step);

/// Noise prediction for the corrupted window `x` at diffusion step `step`.
Window eps_predict(const NetworkParameters& params, const Window& x, int step, const ConditioningContext& ctx,
                   Precision precision = Precision::kFast);

/// Returns ||eps_predict(x) - target||^2 and adds weight * d/dtheta of it to `grad`
/// (same layout as params.values()).
double squared_error_gradient(const NetworkParameters& params, const Window& x, int step,
                              const ConditioningContext& ctx, const Window& target, double weight,
                              std::span<double> grad, Precision precision = Precision::kFast);

/// EpsModel view over a parameter set. The parameters must outlive the view.
class NetworkEpsModel : public EpsModel {
 public:
  explicit NetworkEpsModel(const NetworkParameters& params, Precision precision = Precision::kFast)
      : params_(params), precision_(precision) {}
  Window predict(const Window& x, int step, const ConditioningContext& ctx) const override {
    return eps_predict(params_, x, step, ctx, precision_);
  }
  const NetworkParameters& parameters() const { return params_; }

 private:
  const NetworkParameters& params_;
  Precision precision_;
};

}  // namespace lobdiff
