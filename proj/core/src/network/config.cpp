#include "lobdiff/network/config.hpp"

#include "lobdiff/common.hpp"
#include "../json_util.hpp"

namespace lobdiff {

NetworkConfig NetworkConfig::desk(bool liquidity_conditioned) {
  NetworkConfig c;
  c.channels = 32;
  c.n_res_layers = 8;
  c.liquidity_conditioned = liquidity_conditioned;
  return c;
}

void NetworkConfig::validate() const {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("channels must be a positive even number (gate split)");
  if (n_res_layers < 1) throw ConfigError("n_res_layers must be >= 1");
  if (dilation_cycle.empty()) throw ConfigError("dilation_cycle must not be empty");
  for (int d : dilation_cycle) {
    if (d < 1) throw ConfigError("dilation_cycle entries must be >= 1");
  }
  if (n_res_layers % static_cast<int>(dilation_cycle.size()) != 0) {
    throw ConfigError("n_res_layers must be a multiple of the dilation cycle length");
  }
  if (n_heads < 1 || channels % n_heads != 0) throw ConfigError("n_heads must divide channels");
  if (step_embed_dim < 2 || step_embed_dim % 2 != 0) throw ConfigError("step_embed_dim must be even");
  if (cond_embed_dim < 1) throw ConfigError("cond_embed_dim must be >= 1");
  if (level_count < 1) throw ConfigError("level_count must be >= 1");
  if (window < 1) throw ConfigError("window must be >= 1");
}

std::optional<std::string> first_difference(const NetworkConfig& a, const NetworkConfig& b) {
  if (a.channels != b.channels) return "channels";
  if (a.n_res_layers != b.n_res_layers) return "n_res_layers";
  if (a.dilation_cycle != b.dilation_cycle) return "dilation_cycle";
  if (a.n_heads != b.n_heads) return "n_heads";
  if (a.step_embed_dim != b.step_embed_dim) return "step_embed_dim";
  if (a.cond_embed_dim != b.cond_embed_dim) return "cond_embed_dim";
  if (a.level_count != b.level_count) return "level_count";
  if (a.window != b.window) return "window";
  if (a.liquidity_conditioned != b.liquidity_conditioned) return "liquidity_conditioned";
  return std::nullopt;
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"channels", c.channels},
                     {"n_res_layers", c.n_res_layers},
                     {"dilation_cycle", c.dilation_cycle},
                     {"n_heads", c.n_heads},
                     {"step_embed_dim", c.step_embed_dim},
                     {"cond_embed_dim", c.cond_embed_dim},
                     {"level_count", c.level_count},
                     {"window", c.window},
                     {"liquidity_conditioned", c.liquidity_conditioned}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  detail::JsonReader r(j, "network");
  r.get("channels", c.channels);
  r.get("n_res_layers", c.n_res_layers);
  r.get("dilation_cycle", c.dilation_cycle);
  r.get("n_heads", c.n_heads);
  r.get("step_embed_dim", c.step_embed_dim);
  r.get("cond_embed_dim", c.cond_embed_dim);
  r.get("level_count", c.level_count);
  r.get("window", c.window);
  r.get("liquidity_conditioned", c.liquidity_conditioned);
  r.finish();
}

}  // namespace lobdiff
