#pragma once

// Architecture configuration: per-stage geometry, the named model registry,
// closed-form parameter accounting, and JSON round-tripping.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vip/permutator.hpp"

namespace vip {

struct StageConfig {
  i64 patch_size = 0;       // image patch for stage 0, downsample factor after
  i64 hidden_size = 0;      // C
  i64 num_tokens_side = 0;  // token grid is side x side
  i64 depth = 0;            // number of Permutator blocks

  i64 segment_len() const { return hidden_size / num_tokens_side; }
  bool operator==(const StageConfig&) const = default;
};

struct ViPConfig {
  std::string name;
  std::vector<StageConfig> stages;
  i64 num_classes = 1000;
  i64 mlp_ratio = 3;
  double stochastic_depth_max = 0.0;
  bool final_layernorm = true;
  i64 image_size = 224;
  perm::Variant variant = perm::Variant::full;
  bool sd_ramp = true;  // linear 0..max ramp across blocks; false = constant max
  i64 attn_ratio = 4;   // split-attention reduction ratio r

  i64 total_depth() const;
  // Throws Error with a field-level message on any violated invariant.
  void validate() const;
  bool operator==(const ViPConfig&) const = default;
};

// Named architectures: the five reference models plus the desk-scale
// ViP-Tiny. Values returned by copy so callers may tweak freely.
const std::map<std::string, ViPConfig>& registry();
std::vector<std::string> registry_names();
ViPConfig config_by_name(const std::string& name);  // throws on unknown name

// Closed-form parameter total; equals ParamStore::total_params() of a built
// model exactly. Helpers expose the per-piece accounting used by `params`.
i64 count_params(const ViPConfig& cfg);
i64 count_stage_params(const ViPConfig& cfg, std::size_t stage_index);  // embed + blocks
i64 count_head_params(const ViPConfig& cfg);
i64 count_block_params(const ViPConfig& cfg, i64 hidden_size);

// Reference parameter totals (millions) for configs that have one; 0 if none.
double reference_params_m(const std::string& name);

nlohmann::json config_to_json(const ViPConfig& cfg);
ViPConfig config_from_json(const nlohmann::json& j);

}  // namespace vip
