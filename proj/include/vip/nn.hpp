#pragma once

// Network building blocks: parameter registry, linear layers, LayerNorm,
// softmax, stochastic depth, patch embedding, pooled classifier head.
// All forward functions are stateless over (params, input); training-time
// randomness comes in through an explicit engine argument.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vip/tensor.hpp"

namespace vip::nn {

enum class Mode { train, eval };

enum class ParamKind { weight, bias, norm_gamma, norm_beta };

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> tensor;
  ParamKind kind;
  bool decay;  // weight decay applies; off for biases and norm params
};

// Insertion-ordered registry of trainable tensors. Construction order defines
// the name sequence, which checkpointing and the optimizer both rely on.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t, ParamKind kind) {
    if (index_.count(name)) throw Error("ParamStore: duplicate parameter name " + name);
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back({name, t, kind, kind == ParamKind::weight});
    return t;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("ParamStore: unknown parameter " + name);
    return entries_[it->second].tensor;
  }

  std::vector<ParamEntry<T>>& entries() { return entries_; }
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  i64 total_params() const {
    i64 n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// y = x W + b over the last axis; bias always present.
template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]
  i64 in = 0, out = 0;
};

template <typename T>
Linear<T> make_linear(ParamStore<T>& store, const std::string& prefix, i64 in, i64 out) {
  Linear<T> l;
  l.in = in;
  l.out = out;
  l.weight = store.add(prefix + ".weight", Tensor<T>::zeros({in, out}), ParamKind::weight);
  l.bias = store.add(prefix + ".bias", Tensor<T>::zeros({out}), ParamKind::bias);
  return l;
}

template <typename T>
Tensor<T> linear_forward(const Linear<T>& layer, const Tensor<T>& x) {
  auto xn = x.node();
  auto wn = layer.weight.node();
  auto bn = layer.bias.node();
  if (xn->shape.empty() || xn->shape.back() != layer.in) {
    throw Error("linear_forward: input " + shape_str(xn->shape) + " does not end in " +
                std::to_string(layer.in));
  }
  const i64 in = layer.in, out = layer.out;
  const i64 rows = xn->numel() / in;
  Shape oshape = xn->shape;
  oshape.back() = out;
  auto on = detail::alloc_node<T>(oshape);
  T* po = on->value.data();
  const T* pb = bn->value.data();
  for (i64 r = 0; r < rows; ++r) {
    std::copy_n(pb, out, po + r * out);
  }
  kernels::gemm(xn->value.data(), wn->value.data(), po, rows, in, out);
  detail::record<T>({xn, wn, bn}, on, [xn, wn, bn, on, rows, in, out]() {
    const T* g = on->grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      std::vector<T> wt(static_cast<std::size_t>(out * in));
      kernels::transpose(wn->value.data(), wt.data(), in, out);
      kernels::gemm(g, wt.data(), xn->grad.data(), rows, out, in);
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      std::vector<T> xt(static_cast<std::size_t>(in * rows));
      kernels::transpose(xn->value.data(), xt.data(), rows, in);
      kernels::gemm(xt.data(), g, wn->grad.data(), in, rows, out);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      T* db = bn->grad.data();
      for (i64 r = 0; r < rows; ++r) {
        const T* grow = g + r * out;
        for (i64 j = 0; j < out; ++j) db[j] += grow[j];
      }
    }
  });
  return Tensor<T>(on);
}

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;  // [C]
  Tensor<T> beta;   // [C]
};

template <typename T>
LayerNormParams<T> make_layer_norm(ParamStore<T>& store, const std::string& prefix, i64 c) {
  LayerNormParams<T> p;
  p.gamma = store.add(prefix + ".gamma", Tensor<T>::zeros({c}), ParamKind::norm_gamma);
  p.beta = store.add(prefix + ".beta", Tensor<T>::zeros({c}), ParamKind::norm_beta);
  return p;
}

// Normalizes over the last (channel) axis with biased variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-6)) {
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  if (xn->shape.empty()) throw Error("layer_norm: input must have rank >= 1");
  const i64 c = xn->shape.back();
  if (gn->shape != Shape{c} || bn->shape != Shape{c}) {
    throw Error("layer_norm: gamma/beta must have shape (" + std::to_string(c) + "), got " +
                shape_str(gn->shape) + " and " + shape_str(bn->shape));
  }
  const i64 rows = xn->numel() / c;
  auto on = detail::alloc_node<T>(xn->shape);
  auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows * c));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  const T* px = xn->value.data();
  const T* pg = gn->value.data();
  const T* pb = bn->value.data();
  T* po = on->value.data();
  for (i64 r = 0; r < rows; ++r) {
    const T* row = px + r * c;
    T mu = T(0);
    for (i64 j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (i64 j = 0; j < c; ++j) {
      const T d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = inv;
    T* hrow = xhat->data() + r * c;
    T* orow = po + r * c;
    for (i64 j = 0; j < c; ++j) {
      const T h = (row[j] - mu) * inv;
      hrow[j] = h;
      orow[j] = pg[j] * h + pb[j];
    }
  }
  detail::record<T>({xn, gn, bn}, on, [xn, gn, bn, on, xhat, inv_std, rows, c]() {
    const T* g = on->grad.data();
    const T* pg = gn->value.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      T* dx = xn->grad.data();
      for (i64 r = 0; r < rows; ++r) {
        const T* grow = g + r * c;
        const T* hrow = xhat->data() + r * c;
        const T inv = (*inv_std)[static_cast<std::size_t>(r)];
        T m1 = T(0), m2 = T(0);
        for (i64 j = 0; j < c; ++j) {
          const T dh = grow[j] * pg[j];
          m1 += dh;
          m2 += dh * hrow[j];
        }
        m1 /= static_cast<T>(c);
        m2 /= static_cast<T>(c);
        T* dxrow = dx + r * c;
        for (i64 j = 0; j < c; ++j) {
          const T dh = grow[j] * pg[j];
          dxrow[j] += inv * (dh - m1 - hrow[j] * m2);
        }
      }
    }
    if (gn->requires_grad) {
      gn->ensure_grad();
      T* dg = gn->grad.data();
      for (i64 r = 0; r < rows; ++r) {
        const T* grow = g + r * c;
        const T* hrow = xhat->data() + r * c;
        for (i64 j = 0; j < c; ++j) dg[j] += grow[j] * hrow[j];
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      T* db = bn->grad.data();
      for (i64 r = 0; r < rows; ++r) {
        const T* grow = g + r * c;
        for (i64 j = 0; j < c; ++j) db[j] += grow[j];
      }
    }
  });
  return Tensor<T>(on);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p, T eps = T(1e-6)) {
  return layer_norm(x, p.gamma, p.beta, eps);
}

// Shift-by-max stabilized softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  auto xn = x.node();
  const i64 r = static_cast<i64>(xn->shape.size());
  if (axis < 0 || axis >= r) throw Error("softmax: axis out of range");
  const i64 extent = xn->shape[axis];
  i64 inner = 1;
  for (i64 d = axis + 1; d < r; ++d) inner *= xn->shape[d];
  const i64 outer = xn->numel() / (extent * inner);
  auto on = detail::alloc_node<T>(xn->shape);
  const T* px = xn->value.data();
  T* po = on->value.data();
  for (i64 o = 0; o < outer; ++o) {
    for (i64 in = 0; in < inner; ++in) {
      const i64 base = o * extent * inner + in;
      T mx = px[base];
      for (i64 e = 1; e < extent; ++e) mx = std::max(mx, px[base + e * inner]);
      T sum = T(0);
      for (i64 e = 0; e < extent; ++e) {
        const T v = std::exp(px[base + e * inner] - mx);
        po[base + e * inner] = v;
        sum += v;
      }
      const T inv = T(1) / sum;
      for (i64 e = 0; e < extent; ++e) po[base + e * inner] *= inv;
    }
  }
  detail::record<T>({xn}, on, [xn, on, outer, extent, inner]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T* g = on->grad.data();
    const T* y = on->value.data();
    T* dx = xn->grad.data();
    for (i64 o = 0; o < outer; ++o) {
      for (i64 in = 0; in < inner; ++in) {
        const i64 base = o * extent * inner + in;
        T dot = T(0);
        for (i64 e = 0; e < extent; ++e) dot += g[base + e * inner] * y[base + e * inner];
        for (i64 e = 0; e < extent; ++e) {
          dx[base + e * inner] += y[base + e * inner] * (g[base + e * inner] - dot);
        }
      }
    }
  });
  return Tensor<T>(on);
}

// Residual-branch dropping. Train mode decides per sample (leading axis when
// rank 4, the whole grid otherwise) and rescales kept branches by 1/(1-rate);
// eval mode is the identity.
template <typename T>
Tensor<T> stochastic_depth(const Tensor<T>& x, double rate, Mode mode, rng::Engine& g) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error("stochastic_depth: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  if (x.rank() == 4) {
    const i64 b = x.shape()[0];
    auto mask = Tensor<T>::zeros({b, 1, 1, 1});
    auto md = mask.raw_data();
    for (i64 i = 0; i < b; ++i) {
      md[static_cast<std::size_t>(i)] = rng::uniform01(g) >= rate ? keep_scale : T(0);
    }
    return mul(x, mask);
  }
  const T v = rng::uniform01(g) >= rate ? keep_scale : T(0);
  return scale(x, v);
}

// [B, H, W, C] -> [B, H/p, W/p, p*p*C]; each patch flattened row-major over
// (row, col, channel).
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& x, i64 p) {
  if (x.rank() == 3) {
    const auto& s = x.shape();
    auto out = extract_patches(reshape(x, {i64(1), s[0], s[1], s[2]}), p);
    const auto& os = out.shape();
    return reshape(out, {os[1], os[2], os[3]});
  }
  auto xn = x.node();
  if (xn->shape.size() != 4) {
    throw Error("extract_patches: need rank-3 or rank-4 input, got " + shape_str(xn->shape));
  }
  const i64 b = xn->shape[0], h = xn->shape[1], w = xn->shape[2], c = xn->shape[3];
  if (p <= 0 || h % p != 0 || w % p != 0) {
    throw Error("extract_patches: patch size " + std::to_string(p) + " does not divide " +
                shape_str(xn->shape));
  }
  const i64 hp = h / p, wp = w / p, pc = p * p * c;
  auto on = detail::alloc_node<T>({b, hp, wp, pc});
  const T* px = xn->value.data();
  T* po = on->value.data();
  auto gather = [&](auto&& fn) {
    for (i64 bi = 0; bi < b; ++bi) {
      for (i64 ph = 0; ph < hp; ++ph) {
        for (i64 pw = 0; pw < wp; ++pw) {
          const i64 obase = ((bi * hp + ph) * wp + pw) * pc;
          for (i64 di = 0; di < p; ++di) {
            const i64 xbase = ((bi * h + ph * p + di) * w + pw * p) * c;
            fn(obase + di * p * c, xbase, p * c);
          }
        }
      }
    }
  };
  gather([&](i64 oo, i64 xo, i64 len) { std::copy_n(px + xo, len, po + oo); });
  detail::record<T>({xn}, on, [xn, on, b, h, w, c, p, hp, wp, pc]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T* g = on->grad.data();
    T* dx = xn->grad.data();
    for (i64 bi = 0; bi < b; ++bi) {
      for (i64 ph = 0; ph < hp; ++ph) {
        for (i64 pw = 0; pw < wp; ++pw) {
          const i64 obase = ((bi * hp + ph) * wp + pw) * pc;
          for (i64 di = 0; di < p; ++di) {
            const i64 xbase = ((bi * h + ph * p + di) * w + pw * p) * c;
            const T* src = g + obase + di * p * c;
            T* dst = dx + xbase;
            for (i64 t = 0; t < p * c; ++t) dst[t] += src[t];
          }
        }
      }
    }
  });
  return Tensor<T>(on);
}

namespace detail_nn {

// Shared patch-merge: split into p x p blocks, flatten, project.
template <typename T>
Tensor<T> patch_project(const Tensor<T>& x, i64 p, const Linear<T>& proj, const char* who) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw Error(std::string(who) + ": need rank-3 or rank-4 input, got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 4;
  Tensor<T> x4 = batched ? x
                         : reshape(x, {1, x.shape()[0], x.shape()[1], x.shape()[2]});
  const i64 c_in = x4.shape()[3];
  if (proj.in != p * p * c_in) {
    throw Error(std::string(who) + ": projection expects " + std::to_string(proj.in) +
                " inputs but patches have " + std::to_string(p * p * c_in));
  }
  Tensor<T> patches = extract_patches(x4, p);
  Tensor<T> tokens = linear_forward(proj, patches);
  if (!batched) {
    return reshape(tokens, {tokens.shape()[1], tokens.shape()[2], tokens.shape()[3]});
  }
  return tokens;
}

}  // namespace detail_nn

// Image [*, H, W, Cimg] -> token grid [*, H/p, W/p, hidden] through one shared
// linear projection. No positional encoding is added.
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& img, i64 patch, const Linear<T>& proj) {
  return detail_nn::patch_project(img, patch, proj, "patch_embed");
}

// Token grid [*, H, W, C_in] -> [*, H/2, W/2, C_out] between stages.
template <typename T>
Tensor<T> downsample_embed(const Tensor<T>& grid, const Linear<T>& proj) {
  if (grid.rank() != 3 && grid.rank() != 4) {
    throw Error("downsample_embed: need rank-3 or rank-4 input, got " + shape_str(grid.shape()));
  }
  const i64 h = grid.rank() == 4 ? grid.shape()[1] : grid.shape()[0];
  const i64 w = grid.rank() == 4 ? grid.shape()[2] : grid.shape()[1];
  if (h % 2 != 0 || w % 2 != 0) {
    throw Error("downsample_embed: grid extents must be even, got " + shape_str(grid.shape()));
  }
  return detail_nn::patch_project(grid, 2, proj, "downsample_embed");
}

// Final norm (optional), spatial mean pool, classifier.
template <typename T>
Tensor<T> global_pool_head(const Tensor<T>& grid, const LayerNormParams<T>* final_ln,
                           const Linear<T>& classifier) {
  if (grid.rank() != 3 && grid.rank() != 4) {
    throw Error("global_pool_head: need rank-3 or rank-4 input, got " + shape_str(grid.shape()));
  }
  const bool batched = grid.rank() == 4;
  Tensor<T> x = batched ? grid
                        : reshape(grid, {1, grid.shape()[0], grid.shape()[1], grid.shape()[2]});
  if (final_ln) x = layer_norm(x, *final_ln);
  Tensor<T> pooled = mean(x, {1, 2});  // [B, C]
  Tensor<T> logits = linear_forward(classifier, pooled);
  if (!batched) return reshape(logits, {logits.shape()[1]});
  return logits;
}

// Mean over batch of -sum(target * log softmax(logits)). Targets must be
// per-row distributions.
template <typename T>
Tensor<T> soft_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets) {
  auto zn = logits.node();
  auto tn = targets.node();
  if (zn->shape.size() != 2 || tn->shape != zn->shape) {
    throw Error("soft_cross_entropy: need matching [B, K] logits and targets, got " +
                shape_str(zn->shape) + " and " + shape_str(tn->shape));
  }
  const i64 b = zn->shape[0], k = zn->shape[1];
  const T* pz = zn->value.data();
  const T* pt = tn->value.data();
  for (i64 r = 0; r < b; ++r) {
    T s = T(0);
    for (i64 j = 0; j < k; ++j) s += pt[r * k + j];
    if (std::fabs(static_cast<double>(s) - 1.0) > 1e-4) {
      throw Error("soft_cross_entropy: target row " + std::to_string(r) + " sums to " +
                  std::to_string(static_cast<double>(s)));
    }
  }
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(b * k));
  auto lse = std::make_shared<std::vector<T>>(static_cast<std::size_t>(b));
  auto on = std::make_shared<vip::detail::Node<T>>();
  on->shape = {};
  on->value.resize(1);
  T total = T(0);
  for (i64 r = 0; r < b; ++r) {
    const T* zrow = pz + r * k;
    T mx = zrow[0];
    for (i64 j = 1; j < k; ++j) mx = std::max(mx, zrow[j]);
    T sum = T(0);
    for (i64 j = 0; j < k; ++j) sum += std::exp(zrow[j] - mx);
    const T l = mx + std::log(sum);
    (*lse)[static_cast<std::size_t>(r)] = l;
    T dot = T(0), tsum = T(0);
    for (i64 j = 0; j < k; ++j) {
      (*probs)[static_cast<std::size_t>(r * k + j)] = std::exp(zrow[j] - l);
      dot += pt[r * k + j] * zrow[j];
      tsum += pt[r * k + j];
    }
    // Keep the exact sum-weighted form rather than assuming tsum == 1, so the
    // forward value stays consistent with d/dt = (lse - z) under perturbation.
    total += l * tsum - dot;
  }
  on->value[0] = total / static_cast<T>(b);
  vip::detail::record<T>({zn, tn}, on, [zn, tn, on, probs, lse, b, k]() {
    const T g = on->grad[0] / static_cast<T>(b);
    if (zn->requires_grad) {
      zn->ensure_grad();
      const T* pt = tn->value.data();
      T* dz = zn->grad.data();
      for (i64 i = 0; i < b * k; ++i) {
        dz[i] += g * ((*probs)[static_cast<std::size_t>(i)] - pt[i]);
      }
    }
    if (tn->requires_grad) {
      tn->ensure_grad();
      const T* pz = zn->value.data();
      T* dt = tn->grad.data();
      for (i64 r = 0; r < b; ++r) {
        for (i64 j = 0; j < k; ++j) {
          dt[r * k + j] += g * ((*lse)[static_cast<std::size_t>(r)] - pz[r * k + j]);
        }
      }
    }
  });
  return Tensor<T>(on);
}

// Truncated normal (0, 0.02) for weights, zeros for biases, ones/zeros for
// norm scale/shift. Same seed, same store.
template <typename T>
void init_params(ParamStore<T>& store, rng::Engine& g) {
  for (auto& e : store.entries()) {
    auto data = e.tensor.raw_data();
    switch (e.kind) {
      case ParamKind::weight:
        for (auto& v : data) v = static_cast<T>(rng::truncated_normal(g, 0.02));
        break;
      case ParamKind::bias:
      case ParamKind::norm_beta:
        for (auto& v : data) v = T(0);
        break;
      case ParamKind::norm_gamma:
        for (auto& v : data) v = T(1);
        break;
    }
  }
}

}  // namespace vip::nn
