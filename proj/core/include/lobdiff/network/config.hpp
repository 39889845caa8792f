#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lobdiff {

struct NetworkConfig {
  int channels = 64;
  int n_res_layers = 32;
  std::vector<int> dilation_cycle{1, 2, 4, 8};
  int n_heads = 4;
  int step_embed_dim = 128;
  int cond_embed_dim = 128;
  int level_count = 20;
  int window = 32;
  bool liquidity_conditioned = false;

  /// C=32 and 8 residual layers.
  static NetworkConfig desk(bool liquidity_conditioned = false);

  void validate() const;
  int dilation(int layer) const { return dilation_cycle[static_cast<std::size_t>(layer) % dilation_cycle.size()]; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Name of the first field that differs, if any.
std::optional<std::string> first_difference(const NetworkConfig& a, const NetworkConfig& b);

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

}  // namespace lobdiff
