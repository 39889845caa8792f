#pragma once

#include <optional>
#include <vector>

#include "lobdiff/common.hpp"
#include "lobdiff/data/windows.hpp"

namespace lobdiff {

/// What the denoiser is conditioned on. A null context routes to the learned
/// null embedding; its other fields are ignored.
struct ConditioningContext {
  Window past;                              // L x D normalized
  std::vector<double> tau;                  // L
  std::optional<std::vector<double>> lam;   // L, only for the liquidity-conditioned variant
  bool is_null = false;

  static ConditioningContext from_window(const WindowSample& w, bool with_liquidity);
  /// All-zero context of the same shape with is_null set.
  static ConditioningContext null_like(const ConditioningContext& ctx);
};

/// Anything that predicts the injected noise for a corrupted window.
class EpsModel {
 public:
  virtual ~EpsModel() = default;
  virtual Window predict(const Window& x, int step, const ConditioningContext& ctx) const = 0;
};

}  // namespace lobdiff
