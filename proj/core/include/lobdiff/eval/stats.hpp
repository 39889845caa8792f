#pragma once

#include <span>
#include <vector>

namespace lobdiff {

/// Average ranks (1-based), ties sharing their mean rank.
std::vector<double> ranks(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  double p_greater = 1.0;  // one-sided, H1: mean(a) > mean(b)
};

/// Welch's unequal-variance t-test of mean(a) against mean(b).
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace lobdiff
