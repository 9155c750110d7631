#include "vip/config.hpp"

#include <set>

namespace vip {

using nlohmann::json;

i64 ViPConfig::total_depth() const {
  i64 d = 0;
  for (const auto& s : stages) d += s.depth;
  return d;
}

void ViPConfig::validate() const {
  if (stages.empty()) throw Error("config '" + name + "': stages must be non-empty");
  if (num_classes < 2) {
    throw Error("config '" + name + "': num_classes must be >= 2, got " +
                std::to_string(num_classes));
  }
  if (mlp_ratio < 1) throw Error("config '" + name + "': mlp_ratio must be >= 1");
  if (stochastic_depth_max < 0.0 || stochastic_depth_max >= 1.0) {
    throw Error("config '" + name + "': stochastic_depth_max must be in [0, 1)");
  }
  if (image_size < 1) throw Error("config '" + name + "': image_size must be positive");
  if (attn_ratio < 1) throw Error("config '" + name + "': attn_ratio must be >= 1");
  i64 side = image_size;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const auto& st = stages[k];
    const std::string where = "config '" + name + "' stage " + std::to_string(k);
    if (st.depth < 1) throw Error(where + ": depth must be >= 1");
    if (st.patch_size < 1 || st.hidden_size < 1 || st.num_tokens_side < 1) {
      throw Error(where + ": extents must be positive");
    }
    if (side % st.patch_size != 0) {
      throw Error(where + ": patch size " + std::to_string(st.patch_size) +
                  " does not divide incoming extent " + std::to_string(side));
    }
    side /= st.patch_size;
    if (side != st.num_tokens_side) {
      throw Error(where + ": token side should be " + std::to_string(side) + ", config says " +
                  std::to_string(st.num_tokens_side));
    }
    if (st.hidden_size % st.num_tokens_side != 0) {
      throw Error(where + ": hidden size " + std::to_string(st.hidden_size) +
                  " not divisible by token side " + std::to_string(st.num_tokens_side) +
                  " (the permutation needs N = C/S = side)");
    }
    if (perm::variant_uses_attention(variant) && st.hidden_size % attn_ratio != 0) {
      throw Error(where + ": hidden size " + std::to_string(st.hidden_size) +
                  " not divisible by attention ratio " + std::to_string(attn_ratio));
    }
  }
}

namespace {

ViPConfig make_cfg(std::string name, i64 image, std::vector<StageConfig> stages, double sd,
                   i64 classes) {
  ViPConfig c;
  c.name = std::move(name);
  c.image_size = image;
  c.stages = std::move(stages);
  c.stochastic_depth_max = sd;
  c.num_classes = classes;
  return c;
}

std::map<std::string, ViPConfig> build_registry() {
  std::map<std::string, ViPConfig> r;
  auto put = [&r](ViPConfig c) {
    c.validate();
    r[c.name] = std::move(c);
  };
  put(make_cfg("ViP-Small/16", 224, {{16, 336, 14, 18}}, 0.1, 1000));
  put(make_cfg("ViP-Small/14", 224, {{14, 384, 16, 18}}, 0.1, 1000));
  put(make_cfg("ViP-Small/7", 224, {{7, 192, 32, 4}, {2, 384, 16, 14}}, 0.1, 1000));
  put(make_cfg("ViP-Medium/7", 224, {{7, 256, 32, 7}, {2, 512, 16, 17}}, 0.2, 1000));
  put(make_cfg("ViP-Large/7", 224, {{7, 256, 32, 9}, {2, 512, 16, 27}}, 0.3, 1000));
  // Desk-scale config for tests and quickstarts; not a reference model.
  put(make_cfg("ViP-Tiny", 32, {{4, 64, 8, 4}}, 0.0, 10));
  return r;
}

}  // namespace

const std::map<std::string, ViPConfig>& registry() {
  static const std::map<std::string, ViPConfig> r = build_registry();
  return r;
}

std::vector<std::string> registry_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : registry()) names.push_back(k);
  return names;
}

ViPConfig config_by_name(const std::string& name) {
  const auto& r = registry();
  auto it = r.find(name);
  if (it == r.end()) {
    std::string known;
    for (const auto& [k, v] : r) known += (known.empty() ? "" : ", ") + k;
    throw Error("unknown model '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

double reference_params_m(const std::string& name) {
  static const std::map<std::string, double> ref = {
      {"ViP-Small/16", 23.0}, {"ViP-Small/14", 30.0}, {"ViP-Small/7", 25.0},
      {"ViP-Medium/7", 55.0}, {"ViP-Large/7", 88.0},
  };
  auto it = ref.find(name);
  return it == ref.end() ? 0.0 : it->second;
}

namespace {

i64 linear_params(i64 in, i64 out) { return in * out + out; }

}  // namespace

i64 count_block_params(const ViPConfig& cfg, i64 c) {
  i64 n = 0;
  n += 2 * c;                          // norm1
  n += 4 * linear_params(c, c);        // proj_h, proj_w, proj_c, proj
  if (perm::variant_uses_attention(cfg.variant)) {
    n += linear_params(c, c / cfg.attn_ratio);
    n += linear_params(c / cfg.attn_ratio, 3 * c);
  }
  n += 2 * c;                          // norm2
  n += linear_params(c, cfg.mlp_ratio * c);
  n += linear_params(cfg.mlp_ratio * c, c);
  return n;
}

i64 count_stage_params(const ViPConfig& cfg, std::size_t k) {
  if (k >= cfg.stages.size()) throw Error("count_stage_params: stage index out of range");
  const auto& st = cfg.stages[k];
  i64 n = 0;
  if (k == 0) {
    n += linear_params(st.patch_size * st.patch_size * 3, st.hidden_size);
  } else {
    const i64 prev_c = cfg.stages[k - 1].hidden_size;
    n += linear_params(st.patch_size * st.patch_size * prev_c, st.hidden_size);
  }
  n += st.depth * count_block_params(cfg, st.hidden_size);
  return n;
}

i64 count_head_params(const ViPConfig& cfg) {
  const i64 c = cfg.stages.back().hidden_size;
  i64 n = 0;
  if (cfg.final_layernorm) n += 2 * c;
  n += linear_params(c, cfg.num_classes);
  return n;
}

i64 count_params(const ViPConfig& cfg) {
  cfg.validate();
  i64 n = 0;
  for (std::size_t k = 0; k < cfg.stages.size(); ++k) n += count_stage_params(cfg, k);
  n += count_head_params(cfg);
  return n;
}

json config_to_json(const ViPConfig& cfg) {
  json stages = json::array();
  for (const auto& st : cfg.stages) {
    stages.push_back({{"patch_size", st.patch_size},
                      {"hidden_size", st.hidden_size},
                      {"num_tokens_side", st.num_tokens_side},
                      {"depth", st.depth}});
  }
  return json{{"name", cfg.name},
              {"stages", std::move(stages)},
              {"num_classes", cfg.num_classes},
              {"mlp_ratio", cfg.mlp_ratio},
              {"stochastic_depth_max", cfg.stochastic_depth_max},
              {"final_layernorm", cfg.final_layernorm},
              {"image_size", cfg.image_size},
              {"variant", perm::variant_name(cfg.variant)},
              {"sd_ramp", cfg.sd_ramp},
              {"attn_ratio", cfg.attn_ratio}};
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const char* what) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw Error(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
T get_field(const json& j, const char* key, const T& fallback, const char* what) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string(what) + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

ViPConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error("model config: expected a JSON object");
  reject_unknown_keys(j,
                      {"name", "stages", "num_classes", "mlp_ratio", "stochastic_depth_max",
                       "final_layernorm", "image_size", "variant", "sd_ramp", "attn_ratio"},
                      "model config");
  ViPConfig cfg;
  cfg.name = get_field<std::string>(j, "name", "custom", "model config");
  if (!j.contains("stages") || !j.at("stages").is_array() || j.at("stages").empty()) {
    throw Error("model config: field 'stages' must be a non-empty array");
  }
  for (const auto& js : j.at("stages")) {
    if (!js.is_object()) throw Error("model config: each stage must be an object");
    reject_unknown_keys(js, {"patch_size", "hidden_size", "num_tokens_side", "depth"}, "stage");
    StageConfig st;
    st.patch_size = get_field<i64>(js, "patch_size", 0, "stage");
    st.hidden_size = get_field<i64>(js, "hidden_size", 0, "stage");
    st.num_tokens_side = get_field<i64>(js, "num_tokens_side", 0, "stage");
    st.depth = get_field<i64>(js, "depth", 0, "stage");
    cfg.stages.push_back(st);
  }
  ViPConfig defaults;
  cfg.num_classes = get_field<i64>(j, "num_classes", defaults.num_classes, "model config");
  cfg.mlp_ratio = get_field<i64>(j, "mlp_ratio", defaults.mlp_ratio, "model config");
  cfg.stochastic_depth_max =
      get_field<double>(j, "stochastic_depth_max", defaults.stochastic_depth_max, "model config");
  cfg.final_layernorm =
      get_field<bool>(j, "final_layernorm", defaults.final_layernorm, "model config");
  cfg.image_size = get_field<i64>(j, "image_size", defaults.image_size, "model config");
  cfg.variant = perm::variant_from_name(
      get_field<std::string>(j, "variant", "full", "model config"));
  cfg.sd_ramp = get_field<bool>(j, "sd_ramp", defaults.sd_ramp, "model config");
  cfg.attn_ratio = get_field<i64>(j, "attn_ratio", defaults.attn_ratio, "model config");
  cfg.validate();
  return cfg;
}

}  // namespace vip
