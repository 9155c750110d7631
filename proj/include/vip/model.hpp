#pragma once

// Model assembly: parameter registration in a stable, checkpoint-facing name
// order, the stochastic-depth ramp, and the full image -> logits forward.

#include <string>
#include <vector>

#include "vip/config.hpp"
#include "vip/nn.hpp"
#include "vip/permutator.hpp"

namespace vip {

template <typename T>
struct Model {
  ViPConfig cfg;
  nn::ParamStore<T> store;
  nn::Linear<T> embed;                     // stage-0 patch projection
  std::vector<nn::Linear<T>> downsample;   // one per stage after the first
  std::vector<std::vector<perm::PermutatorBlockWeights<T>>> blocks;  // per stage
  std::vector<double> drop_rates;          // flattened over all blocks
  nn::LayerNormParams<T> head_norm;        // registered only if final_layernorm
  nn::Linear<T> head;

  i64 num_classes() const { return cfg.num_classes; }
};

// Per-block stochastic-depth rates: linear 0 -> max over the flattened depth
// when ramped, constant max otherwise. A single block under the ramp gets 0.
inline std::vector<double> drop_rate_schedule(const ViPConfig& cfg) {
  const i64 total = cfg.total_depth();
  std::vector<double> rates(static_cast<std::size_t>(total), cfg.stochastic_depth_max);
  if (cfg.sd_ramp) {
    for (i64 i = 0; i < total; ++i) {
      rates[static_cast<std::size_t>(i)] =
          total > 1 ? cfg.stochastic_depth_max * static_cast<double>(i) /
                          static_cast<double>(total - 1)
                    : 0.0;
    }
  }
  return rates;
}

// Registration order defines checkpoint layout: embed, stages in order
// (downsample then blocks), head norm, head. Do not reorder.
template <typename T>
Model<T> build(const ViPConfig& cfg, rng::Engine& g) {
  cfg.validate();
  Model<T> m;
  m.cfg = cfg;
  const auto& st0 = cfg.stages.front();
  m.embed = nn::make_linear(m.store, "embed.proj", st0.patch_size * st0.patch_size * 3,
                            st0.hidden_size);
  for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
    const auto& st = cfg.stages[k];
    if (k > 0) {
      const i64 prev_c = cfg.stages[k - 1].hidden_size;
      m.downsample.push_back(nn::make_linear(m.store, "down" + std::to_string(k) + ".proj",
                                             st.patch_size * st.patch_size * prev_c,
                                             st.hidden_size));
    }
    std::vector<perm::PermutatorBlockWeights<T>> stage_blocks;
    for (i64 b = 0; b < st.depth; ++b) {
      stage_blocks.push_back(perm::make_permutator_block(
          m.store, "s" + std::to_string(k) + ".b" + std::to_string(b), st.hidden_size,
          cfg.mlp_ratio, cfg.variant, cfg.attn_ratio));
    }
    m.blocks.push_back(std::move(stage_blocks));
  }
  if (cfg.final_layernorm) {
    m.head_norm = nn::make_layer_norm(m.store, "head.norm", cfg.stages.back().hidden_size);
  }
  m.head = nn::make_linear(m.store, "head.fc", cfg.stages.back().hidden_size, cfg.num_classes);
  m.drop_rates = drop_rate_schedule(cfg);
  nn::init_params(m.store, g);
  if (m.store.total_params() != count_params(cfg)) {
    throw Error("build: registered parameter count " + std::to_string(m.store.total_params()) +
                " disagrees with closed form " + std::to_string(count_params(cfg)));
  }
  return m;
}

// images: [B, image_size, image_size, 3] (or unbatched rank-3) -> logits
// [B, num_classes] (or [num_classes]). The token arithmetic is fixed by the
// config; any other resolution is rejected.
template <typename T>
Tensor<T> forward(const Model<T>& m, const Tensor<T>& images, nn::Mode mode, rng::Engine& g) {
  if (images.rank() != 3 && images.rank() != 4) {
    throw Error("forward: need (H, W, 3) or (B, H, W, 3) images, got " +
                shape_str(images.shape()));
  }
  const bool batched = images.rank() == 4;
  const i64 h = images.shape()[batched ? 1 : 0];
  const i64 w = images.shape()[batched ? 2 : 1];
  const i64 ch = images.shape()[batched ? 3 : 2];
  if (h != m.cfg.image_size || w != m.cfg.image_size || ch != 3) {
    throw Error("forward: config '" + m.cfg.name + "' expects " +
                std::to_string(m.cfg.image_size) + "x" + std::to_string(m.cfg.image_size) +
                "x3 input, got " + shape_str(images.shape()));
  }
  Tensor<T> x = nn::patch_embed(images, m.cfg.stages.front().patch_size, m.embed);
  std::size_t flat_block = 0;
  for (std::size_t k = 0; k < m.cfg.stages.size(); ++k) {
    if (k > 0) x = nn::downsample_embed(x, m.downsample[k - 1]);
    const i64 s = m.cfg.stages[k].segment_len();
    for (const auto& bw : m.blocks[k]) {
      x = perm::permutator_block(x, bw, s, m.drop_rates[flat_block++], m.cfg.variant, mode, g);
    }
  }
  const nn::LayerNormParams<T>* ln = m.cfg.final_layernorm ? &m.head_norm : nullptr;
  return nn::global_pool_head(x, ln, m.head);
}

// Eval-mode convenience; consumes no randomness.
template <typename T>
Tensor<T> forward_eval(const Model<T>& m, const Tensor<T>& images) {
  rng::Engine g(0);  // never drawn from in eval mode
  return forward(m, images, nn::Mode::eval, g);
}

}  // namespace vip
