#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lobdiff/common.hpp"
#include "lobdiff/data/normalization.hpp"
#include "lobdiff/data/windows.hpp"
#include "lobdiff/diffusion/conditioning.hpp"
#include "lobdiff/diffusion/schedule.hpp"
#include "lobdiff/network/parameters.hpp"
#include "lobdiff/rng.hpp"

namespace lobdiff {

struct SamplerConfig {
  double omega = 1.0;
  std::uint64_t seed = 0;
  int batch_size = 64;  // progress-report granularity; windows are sampled independently
  bool clamp_negative = true;

  void validate() const;
  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

/// Reverse chain from x_N ~ N(0, I) down to x_0 with guided noise predictions.
/// Draw order: x_N row-major, then one row-major normal block per step
/// N..2 (step 1 adds no noise).
Window ancestral_sample(const EpsModel& model, const NoiseSchedule& schedule, const ConditioningContext& ctx,
                        int rows, int cols, double omega, Rng& rng);

/// Same chain on a network, with the stream seeded from config.seed. The
/// context must carry lam exactly when the network is liquidity-conditioned.
Window ancestral_sample(const NetworkParameters& params, const NoiseSchedule& schedule,
                        const ConditioningContext& ctx, const SamplerConfig& config);

/// Equal-count bins by ascending value; ties keep input order and the first
/// n % bin_count bins get one extra member. Bin 1 is the lowest.
struct QuintileBins {
  std::vector<int> bin_of;                          // 1-based bin per input index
  std::vector<std::vector<std::size_t>> members;    // input indices per bin, ascending value
  std::vector<std::pair<double, double>> edges;     // (min, max) value per bin
};

QuintileBins quintile_bins(std::span<const double> values, int bin_count = 5);

enum class ScenarioKind { kFactual, kOverLiquidity, kUnderLiquidity };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario(const std::string& name);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kFactual;
  int bin_count = 5;
  int source_bin = 0;  // 1-based; unused for factual

  static ScenarioSpec factual();
  static ScenarioSpec over_liquidity(int bin_count = 5);
  static ScenarioSpec under_liquidity(int bin_count = 5);
};

struct GeneratedWindow {
  std::size_t anchor_id = 0;
  Window volumes;                     // raw scale, L x D
  std::vector<double> lam_condition;  // empty for the unconditional variant
  ScenarioKind scenario = ScenarioKind::kFactual;
  std::uint64_t seed = 0;
};

struct GeneratedSet {
  ScenarioKind scenario = ScenarioKind::kFactual;
  double omega = 1.0;
  std::uint64_t seed = 0;
  std::vector<GeneratedWindow> windows;
  double clamp_fraction = 0.0;  // share of generated cells that were negative before clamping
};

/// Samples one window per input window. Past and tau come from the window;
/// lam is the window's own sequence (factual) or a full sequence drawn with
/// replacement from the source bin's pool. The chain for a given anchor uses
/// the same stream in every scenario, so scenarios differ only through lam.
GeneratedSet generate_dataset(std::span<const WindowSample> windows, const ScenarioSpec& scenario,
                              const NetworkParameters& ema_params, const NoiseSchedule& schedule,
                              const NormalizationSpec& spec, const SamplerConfig& config);

/// Columnar CSV: anchor_id, scenario, seed, lam_0..lam_{L-1}, v_0..v_{L*D-1} (row-major).
void write_generated_set(const GeneratedSet& set, const std::filesystem::path& path);
GeneratedSet read_generated_set(const std::filesystem::path& path);

}  // namespace lobdiff
