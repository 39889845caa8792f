#include "lobdiff/sampling/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "lobdiff/diffusion/objective.hpp"
#include "lobdiff/network/score_network.hpp"
#include "../format_util.hpp"
#include "../json_util.hpp"

namespace lobdiff {

void SamplerConfig::validate() const {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw ConfigError("omega must be a finite value >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{
      {"omega", c.omega}, {"seed", c.seed}, {"batch_size", c.batch_size}, {"clamp_negative", c.clamp_negative}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  detail::JsonReader r(j, "sampler");
  r.get("omega", c.omega);
  r.get("seed", c.seed);
  r.get("batch_size", c.batch_size);
  r.get("clamp_negative", c.clamp_negative);
  r.finish();
}

Window ancestral_sample(const EpsModel& model, const NoiseSchedule& schedule, const ConditioningContext& ctx,
                        int rows, int cols, double omega, Rng& rng) {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw ConfigError("omega must be a finite value >= 0");
  Window x(rows, cols);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
  for (int i = schedule.steps(); i >= 1; --i) {
    const double beta = schedule.beta(i);
    const Window score = score_from_eps(guided_eps(model, x, i, ctx, omega), i, schedule);
    x = (x + beta * score) / std::sqrt(1.0 - beta);
    if (i > 1) {
      const double sd = std::sqrt(beta);
      for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] += sd * rng.normal();
    }
    if (!x.allFinite()) throw NumericError("sampling produced a non-finite state at step " + std::to_string(i));
  }
  return x;
}

namespace {

void check_variant(const NetworkParameters& params, const ConditioningContext& ctx) {
  const bool conditional = params.config().liquidity_conditioned;
  if (conditional && !ctx.lam) throw ContractError("liquidity-conditioned model needs lam in the context");
  if (!conditional && ctx.lam) throw ContractError("unconditional model cannot take a lam condition");
}

}  // namespace

Window ancestral_sample(const NetworkParameters& params, const NoiseSchedule& schedule,
                        const ConditioningContext& ctx, const SamplerConfig& config) {
  config.validate();
  check_variant(params, ctx);
  const NetworkEpsModel model(params);
  Rng rng(derive_seed(config.seed, "sample"));
  return ancestral_sample(model, schedule, ctx, params.config().window, params.config().level_count, config.omega,
                          rng);
}

QuintileBins quintile_bins(std::span<const double> values, int bin_count) {
  if (bin_count < 1) throw ConfigError("bin_count must be >= 1");
  const std::size_t n = values.size();
  if (n < static_cast<std::size_t>(bin_count)) {
    throw ContractError("quintile_bins: need at least " + std::to_string(bin_count) + " values, got " +
                        std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  QuintileBins out;
  out.bin_of.assign(n, 0);
  out.members.resize(static_cast<std::size_t>(bin_count));
  out.edges.resize(static_cast<std::size_t>(bin_count));
  const std::size_t base = n / static_cast<std::size_t>(bin_count);
  const std::size_t extra = n % static_cast<std::size_t>(bin_count);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(bin_count); ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    auto& m = out.members[b];
    m.assign(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    for (std::size_t idx : m) out.bin_of[idx] = static_cast<int>(b) + 1;
    out.edges[b] = {values[m.front()], values[m.back()]};
    pos += size;
  }
  return out;
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kFactual:
      return "factual";
    case ScenarioKind::kOverLiquidity:
      return "over_liquidity";
    case ScenarioKind::kUnderLiquidity:
      return "under_liquidity";
  }
  return "unknown";
}

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "factual") return ScenarioKind::kFactual;
  if (name == "over_liquidity" || name == "ol") return ScenarioKind::kOverLiquidity;
  if (name == "under_liquidity" || name == "ul") return ScenarioKind::kUnderLiquidity;
  throw ConfigError("unknown scenario '" + name + "' (expected factual, over_liquidity or under_liquidity)");
}

ScenarioSpec ScenarioSpec::factual() { return {}; }
ScenarioSpec ScenarioSpec::over_liquidity(int bin_count) {
  return {ScenarioKind::kOverLiquidity, bin_count, bin_count};
}
ScenarioSpec ScenarioSpec::under_liquidity(int bin_count) { return {ScenarioKind::kUnderLiquidity, bin_count, 1}; }

GeneratedSet generate_dataset(std::span<const WindowSample> windows, const ScenarioSpec& scenario,
                              const NetworkParameters& ema_params, const NoiseSchedule& schedule,
                              const NormalizationSpec& spec, const SamplerConfig& config) {
  config.validate();
  const bool conditional = ema_params.config().liquidity_conditioned;
  const bool counterfactual = scenario.kind != ScenarioKind::kFactual;
  if (counterfactual && !conditional) {
    throw ContractError("scenario " + to_string(scenario.kind) + " needs a liquidity-conditioned model");
  }
  if (windows.empty()) throw ContractError("generate_dataset: no windows");

  std::vector<std::size_t> pool;
  if (counterfactual) {
    if (scenario.source_bin < 1 || scenario.source_bin > scenario.bin_count) {
      throw ConfigError("source_bin must lie in [1, bin_count]");
    }
    std::vector<double> means;
    means.reserve(windows.size());
    for (const auto& w : windows) means.push_back(w.mean_lambda());
    pool = quintile_bins(means, scenario.bin_count).members[static_cast<std::size_t>(scenario.source_bin - 1)];
  }

  const NetworkEpsModel model(ema_params);
  const int L = ema_params.config().window;
  const int D = ema_params.config().level_count;
  GeneratedSet out;
  out.scenario = scenario.kind;
  out.omega = config.omega;
  out.seed = config.seed;
  out.windows.reserve(windows.size());
  std::size_t negatives = 0;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const WindowSample& w = windows[k];
    const std::size_t anchor = w.anchor_index;
    ConditioningContext ctx = ConditioningContext::from_window(w, conditional);
    if (counterfactual) {
      Rng pick(derive_seed(config.seed, "lambda_pool", anchor));
      const auto j = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
      ctx.lam = windows[pool[j]].lam;
    }
    Rng rng(derive_seed(config.seed, "sample", anchor));
    const Window y = ancestral_sample(model, schedule, ctx, L, D, config.omega, rng);

    GeneratedWindow g;
    g.anchor_id = anchor;
    g.scenario = scenario.kind;
    g.seed = config.seed;
    if (ctx.lam) g.lam_condition = *ctx.lam;
    g.volumes.resize(L, D);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double v = y.data()[i];
      if (v < 0.0) ++negatives;
      const double r = v * spec.scale_const;
      // Unclamped output keeps the sign so negative excursions stay visible.
      g.volumes.data()[i] = (v < 0.0 && !config.clamp_negative) ? -r * r : denormalize_value(v, spec.scale_const);
    }
    out.windows.push_back(std::move(g));
    if ((k + 1) % static_cast<std::size_t>(config.batch_size) == 0 || k + 1 == windows.size()) {
      spdlog::info("generate {}: {}/{} windows", to_string(scenario.kind), k + 1, windows.size());
    }
  }
  out.clamp_fraction = static_cast<double>(negatives) / static_cast<double>(windows.size() * L * D);
  if (out.clamp_fraction >= 0.01) {
    spdlog::warn("generate {}: {:.2f}% of generated cells were negative before clamping", to_string(scenario.kind),
                 100.0 * out.clamp_fraction);
  }
  return out;
}

void write_generated_set(const GeneratedSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t L = set.windows.empty() ? 0 : static_cast<std::size_t>(set.windows.front().volumes.rows());
  const std::size_t cells = set.windows.empty() ? 0 : static_cast<std::size_t>(set.windows.front().volumes.size());
  const bool has_lam = !set.windows.empty() && !set.windows.front().lam_condition.empty();
  out << "anchor_id,scenario,seed";
  if (has_lam) {
    for (std::size_t i = 0; i < L; ++i) out << ",lam_" << i;
  }
  for (std::size_t i = 0; i < cells; ++i) out << ",v_" << i;
  out << '\n';
  for (const auto& g : set.windows) {
    out << g.anchor_id << ',' << to_string(g.scenario) << ',' << g.seed;
    for (double l : g.lam_condition) out << ',' << detail::format_double(l);
    for (Eigen::Index i = 0; i < g.volumes.size(); ++i) out << ',' << detail::format_double(g.volumes.data()[i]);
    out << '\n';
  }
}

GeneratedSet read_generated_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  std::size_t n_lam = 0, n_cells = 0;
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("lam_", 0) == 0) ++n_lam;
      if (col.rfind("v_", 0) == 0) ++n_cells;
    }
  }
  const int D = kLevels;
  if (n_cells % static_cast<std::size_t>(D) != 0) throw ParseError("volume column count is not a multiple of 20", 1);
  const auto L = static_cast<Eigen::Index>(n_cells / static_cast<std::size_t>(D));
  GeneratedSet set;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 3 + n_lam + n_cells) throw ParseError("wrong column count", row);
    GeneratedWindow g;
    try {
      g.anchor_id = std::stoull(fields[0]);
      g.scenario = parse_scenario(fields[1]);
      g.seed = std::stoull(fields[2]);
      for (std::size_t i = 0; i < n_lam; ++i) g.lam_condition.push_back(std::stod(fields[3 + i]));
      g.volumes.resize(L, D);
      for (std::size_t i = 0; i < n_cells; ++i) {
        g.volumes.data()[static_cast<Eigen::Index>(i)] = std::stod(fields[3 + n_lam + i]);
      }
    } catch (const std::logic_error&) {
      throw ParseError("non-numeric field", row);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), row);
    }
    set.scenario = g.scenario;
    set.seed = g.seed;
    set.windows.push_back(std::move(g));
  }
  return set;
}

}  // namespace lobdiff
