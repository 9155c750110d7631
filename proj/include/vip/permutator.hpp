#pragma once

// Permute-MLP: height/width token mixing by segment-wise axis permutation,
// plus the split-attention weighted fusion, the per-token Channel-MLP, and
// the pre-norm residual Permutator block.
//
// Height mixing regroups (H, W, C=N*S) -> (N, W, H*S), applies one square
// C x C linear over the regrouped last axis, and inverts the regrouping.
// Width mixing is the symmetric chain. Both require the segment group count
// N = C/S to equal the spatial side being mixed, so H*S (resp. W*S) == C.
//
// Branch order everywhere (fusion reshape, attention logits) is fixed as
// (height, width, channel); checkpoints depend on this ordering.

#include <string>

#include "vip/nn.hpp"
#include "vip/tensor.hpp"

namespace vip::perm {

using nn::Linear;
using nn::Mode;

template <typename T>
struct PermuteMLPWeights {
  Linear<T> proj_h;  // [C, C]
  Linear<T> proj_w;  // [C, C]
  Linear<T> proj_c;  // [C, C]
  Linear<T> proj;    // [C, C], applied after fusion
};

template <typename T>
struct SplitAttentionWeights {
  Linear<T> reduce;  // [C, C/r]
  Linear<T> expand;  // [C/r, 3C]
  i64 r = 4;
};

// Which mixing branches are real and how the three are fused.
enum class Variant {
  full,           // height + width mixing, weighted fusion
  no_height,      // height branch replaced by a per-token channel map
  no_width,       // width branch replaced by a per-token channel map
  vanilla,        // real mixing branches, plain-sum fusion (no attention)
  channels_only,  // both spatial branches replaced; position-blind control
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_height: return "no_height";
    case Variant::no_width: return "no_width";
    case Variant::vanilla: return "vanilla";
    case Variant::channels_only: return "channels_only";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_height") return Variant::no_height;
  if (s == "no_width") return Variant::no_width;
  if (s == "vanilla") return Variant::vanilla;
  if (s == "channels_only") return Variant::channels_only;
  throw Error("unknown variant '" + s + "' (expected full|no_height|no_width|vanilla|channels_only)");
}

inline bool variant_uses_attention(Variant v) { return v != Variant::vanilla; }

namespace detail_perm {

struct GridDims {
  bool batched;
  i64 b, h, w, c;
};

template <typename T>
GridDims grid_dims(const Tensor<T>& x, const char* who) {
  const auto& s = x.shape();
  if (s.size() == 3) return {false, 1, s[0], s[1], s[2]};
  if (s.size() == 4) return {true, s[0], s[1], s[2], s[3]};
  throw Error(std::string(who) + ": need a (H, W, C) or (B, H, W, C) grid, got " + shape_str(s));
}

inline void check_segments(const GridDims& d, i64 s, i64 side, const char* who, const char* axis) {
  if (s <= 0 || d.c % s != 0) {
    throw Error(std::string(who) + ": C=" + std::to_string(d.c) +
                " not divisible by segment length S=" + std::to_string(s));
  }
  const i64 n = d.c / s;
  if (n != side) {
    throw Error(std::string(who) + ": group count N=C/S=" + std::to_string(n) +
                " must equal " + axis + "=" + std::to_string(side));
  }
}

}  // namespace detail_perm

// Mix along height: out(i,j,n*S+s') = sum_{h,s} x(h,j,n*S+s) W[h*S+s, i*S+s'] + b.
template <typename T>
Tensor<T> mix_height(const Tensor<T>& x, const Linear<T>& proj_h, i64 s) {
  const auto d = detail_perm::grid_dims(x, "mix_height");
  detail_perm::check_segments(d, s, d.h, "mix_height", "H");
  const i64 n = d.c / s;
  if (proj_h.in != d.c || proj_h.out != d.c) {
    throw Error("mix_height: projection must be " + std::to_string(d.c) + "x" +
                std::to_string(d.c));
  }
  if (!d.batched) {
    auto xp = permute(reshape(x, {d.h, d.w, n, s}), {2, 1, 0, 3});   // (N, W, H, S)
    auto yh = linear_forward(proj_h, reshape(xp, {n, d.w, d.h * s}));
    auto yp = permute(reshape(yh, {n, d.w, d.h, s}), {2, 1, 0, 3});  // (H, W, N, S)
    return reshape(yp, {d.h, d.w, d.c});
  }
  auto xp = permute(reshape(x, {d.b, d.h, d.w, n, s}), {0, 3, 2, 1, 4});
  auto yh = linear_forward(proj_h, reshape(xp, {d.b, n, d.w, d.h * s}));
  auto yp = permute(reshape(yh, {d.b, n, d.w, d.h, s}), {0, 3, 2, 1, 4});
  return reshape(yp, {d.b, d.h, d.w, d.c});
}

// Mix along width: the symmetric chain through (H, N, W*S).
template <typename T>
Tensor<T> mix_width(const Tensor<T>& x, const Linear<T>& proj_w, i64 s) {
  const auto d = detail_perm::grid_dims(x, "mix_width");
  detail_perm::check_segments(d, s, d.w, "mix_width", "W");
  const i64 n = d.c / s;
  if (proj_w.in != d.c || proj_w.out != d.c) {
    throw Error("mix_width: projection must be " + std::to_string(d.c) + "x" +
                std::to_string(d.c));
  }
  if (!d.batched) {
    auto xp = permute(reshape(x, {d.h, d.w, n, s}), {0, 2, 1, 3});   // (H, N, W, S)
    auto yw = linear_forward(proj_w, reshape(xp, {d.h, n, d.w * s}));
    auto yp = permute(reshape(yw, {d.h, n, d.w, s}), {0, 2, 1, 3});  // (H, W, N, S)
    return reshape(yp, {d.h, d.w, d.c});
  }
  auto xp = permute(reshape(x, {d.b, d.h, d.w, n, s}), {0, 1, 3, 2, 4});
  auto yw = linear_forward(proj_w, reshape(xp, {d.b, d.h, n, d.w * s}));
  auto yp = permute(reshape(yw, {d.b, d.h, n, d.w, s}), {0, 1, 3, 2, 4});
  return reshape(yp, {d.b, d.h, d.w, d.c});
}

namespace detail_perm {

template <typename T>
struct Branches {
  Tensor<T> xh, xw, xc;
};

template <typename T>
Branches<T> branch_outputs(const Tensor<T>& x, const PermuteMLPWeights<T>& w, i64 s, Variant v) {
  Branches<T> b;
  const bool drop_h = v == Variant::no_height || v == Variant::channels_only;
  const bool drop_w = v == Variant::no_width || v == Variant::channels_only;
  b.xh = drop_h ? linear_forward(w.proj_h, x) : mix_height(x, w.proj_h, s);
  b.xw = drop_w ? linear_forward(w.proj_w, x) : mix_width(x, w.proj_w, s);
  b.xc = linear_forward(w.proj_c, x);
  return b;
}

}  // namespace detail_perm

// Plain-sum fusion: proj(X_H + X_W + X_C).
template <typename T>
Tensor<T> permute_mlp_forward(const Tensor<T>& x, const PermuteMLPWeights<T>& w, i64 s,
                              Variant v = Variant::vanilla) {
  auto br = detail_perm::branch_outputs(x, w, s, v);
  return linear_forward(w.proj, add(add(br.xh, br.xw), br.xc));
}

// Split-attention fusion: squeeze the branch sum over space, bottleneck to
// 3C logits, softmax per channel over the three branches, reweight, project.
template <typename T>
Tensor<T> weighted_permute_mlp_forward(const Tensor<T>& x, const PermuteMLPWeights<T>& w,
                                       const SplitAttentionWeights<T>& a, i64 s,
                                       Variant v = Variant::full) {
  const auto d = detail_perm::grid_dims(x, "weighted_permute_mlp_forward");
  if (a.r <= 0 || d.c % a.r != 0) {
    throw Error("weighted_permute_mlp_forward: C=" + std::to_string(d.c) +
                " not divisible by reduction ratio r=" + std::to_string(a.r));
  }
  if (a.reduce.in != d.c || a.reduce.out != d.c / a.r || a.expand.in != d.c / a.r ||
      a.expand.out != 3 * d.c) {
    throw Error("weighted_permute_mlp_forward: attention extents do not match C=" +
                std::to_string(d.c) + ", r=" + std::to_string(a.r));
  }
  auto br = detail_perm::branch_outputs(x, w, s, v);
  auto summed = add(add(br.xh, br.xw), br.xc);
  Tensor<T> pooled = d.batched ? mean(summed, {1, 2}) : mean(summed, {0, 1});  // [*, C]
  auto logits = linear_forward(a.expand, gelu(linear_forward(a.reduce, pooled)));
  Tensor<T> att;
  if (d.batched) {
    att = nn::softmax(reshape(logits, {d.b, i64(3), d.c}), 1);
  } else {
    att = nn::softmax(reshape(logits, {i64(3), d.c}), 0);
  }
  const int branch_axis = d.batched ? 1 : 0;
  auto pick = [&](i64 idx) {
    auto ai = slice_axis(att, branch_axis, idx);  // [*, C]
    return d.batched ? reshape(ai, {d.b, i64(1), i64(1), d.c})
                     : reshape(ai, {i64(1), i64(1), d.c});
  };
  auto fused = add(add(mul(br.xh, pick(0)), mul(br.xw, pick(1))), mul(br.xc, pick(2)));
  return linear_forward(w.proj, fused);
}

// Per-token two-layer MLP with GELU.
template <typename T>
Tensor<T> channel_mlp_forward(const Tensor<T>& x, const Linear<T>& fc1, const Linear<T>& fc2) {
  const auto d = detail_perm::grid_dims(x, "channel_mlp_forward");
  if (fc1.in != d.c || fc2.in != fc1.out || fc2.out != d.c) {
    throw Error("channel_mlp_forward: extents " + std::to_string(fc1.in) + "->" +
                std::to_string(fc1.out) + ", " + std::to_string(fc2.in) + "->" +
                std::to_string(fc2.out) + " do not chain over C=" + std::to_string(d.c));
  }
  return linear_forward(fc2, gelu(linear_forward(fc1, x)));
}

template <typename T>
struct PermutatorBlockWeights {
  nn::LayerNormParams<T> norm1;
  PermuteMLPWeights<T> mlp;
  SplitAttentionWeights<T> attn;  // unregistered for the vanilla variant
  nn::LayerNormParams<T> norm2;
  Linear<T> fc1;  // [C, ratio*C]
  Linear<T> fc2;  // [ratio*C, C]
};

template <typename T>
PermutatorBlockWeights<T> make_permutator_block(nn::ParamStore<T>& store, const std::string& prefix,
                                                i64 c, i64 mlp_ratio, Variant v, i64 r = 4) {
  PermutatorBlockWeights<T> w;
  w.norm1 = nn::make_layer_norm(store, prefix + ".norm1", c);
  w.mlp.proj_h = nn::make_linear(store, prefix + ".pmlp.proj_h", c, c);
  w.mlp.proj_w = nn::make_linear(store, prefix + ".pmlp.proj_w", c, c);
  w.mlp.proj_c = nn::make_linear(store, prefix + ".pmlp.proj_c", c, c);
  w.mlp.proj = nn::make_linear(store, prefix + ".pmlp.proj", c, c);
  if (variant_uses_attention(v)) {
    if (c % r != 0) {
      throw Error("make_permutator_block: C=" + std::to_string(c) +
                  " not divisible by attention ratio r=" + std::to_string(r));
    }
    w.attn.r = r;
    w.attn.reduce = nn::make_linear(store, prefix + ".attn.reduce", c, c / r);
    w.attn.expand = nn::make_linear(store, prefix + ".attn.expand", c / r, 3 * c);
  }
  w.norm2 = nn::make_layer_norm(store, prefix + ".norm2", c);
  w.fc1 = nn::make_linear(store, prefix + ".cmlp.fc1", c, mlp_ratio * c);
  w.fc2 = nn::make_linear(store, prefix + ".cmlp.fc2", mlp_ratio * c, c);
  return w;
}

// Pre-norm residual block:
//   Y = X + SD(PermuteMLP(LN(X)));  Z = Y + SD(ChannelMLP(LN(Y))).
template <typename T>
Tensor<T> permutator_block(const Tensor<T>& x, const PermutatorBlockWeights<T>& w, i64 s,
                           double drop_rate, Variant v, Mode mode, rng::Engine& g) {
  Tensor<T> mixed;
  if (variant_uses_attention(v)) {
    mixed = weighted_permute_mlp_forward(layer_norm(x, w.norm1), w.mlp, w.attn, s, v);
  } else {
    mixed = permute_mlp_forward(layer_norm(x, w.norm1), w.mlp, s, v);
  }
  Tensor<T> y = add(x, nn::stochastic_depth(mixed, drop_rate, mode, g));
  Tensor<T> ch = channel_mlp_forward(layer_norm(y, w.norm2), w.fc1, w.fc2);
  return add(y, nn::stochastic_depth(ch, drop_rate, mode, g));
}

}  // namespace vip::perm
