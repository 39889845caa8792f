#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lobdiff/network/config.hpp"

namespace lobdiff::detail {

struct Slot {
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
};

enum class InitKind { kZero, kFanIn, kNormal, kFilm };

struct InitRule {
  InitKind kind = InitKind::kZero;
  double gain = 1.0;  // variance gain for kFanIn/kFilm, std for kNormal
};

struct BlockSlots {
  Slot conv_w, conv_b, film_w, film_b, mix1_w, mix1_b, mix2_w, mix2_b;
};

struct NetworkSlots {
  Slot in_w, in_b, level_emb;
  Slot q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  Slot step1_w, step1_b, step2_w, step2_b;
  Slot past1_w, past1_b, past2_w, past2_b, cond_w, cond_b, null_emb;
  std::vector<BlockSlots> blocks;
  Slot head1_w, head1_b, head2_w, head2_b;
  std::size_t total = 0;
};

inline int cond_input_dim(const NetworkConfig& c) {
  return c.channels + c.window + (c.liquidity_conditioned ? c.window : 0);
}

// Walks the parameter tensors in their canonical order. `visit(name, slot, rule)`
// sees each tensor once; the same order drives init and serialization.
template <class Visit>
NetworkSlots build_layout(const NetworkConfig& cfg, Visit&& visit) {
  NetworkSlots s;
  const int C = cfg.channels;
  const int D = cfg.level_count;
  const int Es = cfg.step_embed_dim;
  const int Ec = cfg.cond_embed_dim;
  auto add = [&](Slot& slot, const std::string& name, int rows, int cols, InitRule rule) {
    slot = Slot{s.total, rows, cols};
    s.total += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    visit(name, slot, rule);
  };
  const InitRule zero{InitKind::kZero, 0.0};
  const InitRule relu_fan{InitKind::kFanIn, 2.0};
  const InitRule lin_fan{InitKind::kFanIn, 1.0};

  add(s.in_w, "input.w", C, 1, relu_fan);
  add(s.in_b, "input.b", C, 1, zero);
  add(s.level_emb, "level_embedding", C, D, InitRule{InitKind::kNormal, 0.5});
  add(s.q_w, "attention.q.w", C, C, lin_fan);
  add(s.q_b, "attention.q.b", C, 1, zero);
  add(s.k_w, "attention.k.w", C, C, lin_fan);
  add(s.k_b, "attention.k.b", C, 1, zero);
  add(s.v_w, "attention.v.w", C, C, lin_fan);
  add(s.v_b, "attention.v.b", C, 1, zero);
  add(s.o_w, "attention.o.w", C, C, lin_fan);
  add(s.o_b, "attention.o.b", C, 1, zero);
  add(s.step1_w, "step.fc1.w", Es, Es, lin_fan);
  add(s.step1_b, "step.fc1.b", Es, 1, zero);
  add(s.step2_w, "step.fc2.w", Es, Es, lin_fan);
  add(s.step2_b, "step.fc2.b", Es, 1, zero);
  add(s.past1_w, "past.conv1.w", C, 9, relu_fan);
  add(s.past1_b, "past.conv1.b", C, 1, zero);
  add(s.past2_w, "past.conv2.w", C, 9 * C, relu_fan);
  add(s.past2_b, "past.conv2.b", C, 1, zero);
  add(s.cond_w, "cond.fc.w", Ec, cond_input_dim(cfg), lin_fan);
  add(s.cond_b, "cond.fc.b", Ec, 1, zero);
  add(s.null_emb, "null_embedding", Ec, 1, InitRule{InitKind::kNormal, 0.5});
  s.blocks.resize(static_cast<std::size_t>(cfg.n_res_layers));
  for (int b = 0; b < cfg.n_res_layers; ++b) {
    auto& bs = s.blocks[static_cast<std::size_t>(b)];
    const std::string p = "block" + std::to_string(b) + ".";
    add(bs.conv_w, p + "conv.w", 2 * C, 9 * C, lin_fan);
    add(bs.conv_b, p + "conv.b", 2 * C, 1, zero);
    add(bs.film_w, p + "film.w", 2 * C, Es + Ec, InitRule{InitKind::kFilm, 1.0});
    add(bs.film_b, p + "film.b", 2 * C, 1, zero);
    add(bs.mix1_w, p + "mix1.w", C, C, relu_fan);
    add(bs.mix1_b, p + "mix1.b", C, 1, zero);
    add(bs.mix2_w, p + "mix2.w", C, C, relu_fan);
    add(bs.mix2_b, p + "mix2.b", C, 1, zero);
  }
  add(s.head1_w, "head.fc1.w", C, C, relu_fan);
  add(s.head1_b, "head.fc1.b", C, 1, zero);
  add(s.head2_w, "head.fc2.w", 1, C, zero);
  add(s.head2_b, "head.fc2.b", 1, 1, zero);
  return s;
}

inline NetworkSlots build_layout(const NetworkConfig& cfg) {
  return build_layout(cfg, [](const std::string&, const Slot&, const InitRule&) {});
}

}  // namespace lobdiff::detail
