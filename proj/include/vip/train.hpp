#pragma once

// Training harness: AdamW with decoupled weight decay, the linear-scaling
// learning-rate rule, warmup+cosine schedule, soft-target augmentation
// (MixUp / CutMix / CutOut), the synthetic position-task dataset, the epoch
// loop, and checkpoint round-tripping of parameters + optimizer state.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "vip/io.hpp"
#include "vip/model.hpp"
#include "vip/nn.hpp"

namespace vip::train {

// lr = base * batch / denom (defaults give the reference rule).
inline double lr_for(i64 batch_size, double base = 1e-3, i64 denom = 1024) {
  if (batch_size < 1) throw Error("lr_for: batch_size must be >= 1");
  return base * static_cast<double>(batch_size) / static_cast<double>(denom);
}

// Linear warmup 0 -> peak over warmup_steps, then cosine decay to peak/100.
inline double schedule(i64 step, i64 total_steps, i64 warmup_steps, double peak_lr) {
  if (step < 0 || total_steps < 1 || warmup_steps < 0 || warmup_steps > total_steps) {
    throw Error("schedule: need 0 <= step and 0 <= warmup_steps <= total_steps");
  }
  if (step > total_steps) step = total_steps;
  if (step < warmup_steps) {
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double floor = peak_lr * 1e-2;
  if (step >= total_steps || total_steps == warmup_steps) {
    return total_steps == warmup_steps ? peak_lr : floor;
  }
  const double t = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  return floor + (peak_lr - floor) * 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
}

template <typename T>
class AdamW {
 public:
  struct Hyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(nn::ParamStore<T>& store, Hyper h) : store_(&store), h_(h) {
    for (const auto& e : store.entries()) {
      m_.emplace_back(static_cast<std::size_t>(e.tensor.numel()), T(0));
      v_.emplace_back(static_cast<std::size_t>(e.tensor.numel()), T(0));
    }
  }

  const Hyper& hyper() const { return h_; }
  i64 steps_taken() const { return step_; }

  // One decoupled-decay update at learning rate `lr`. Every parameter must
  // hold a gradient buffer (zero-filled counts; absent does not).
  void step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(step_));
    auto& entries = store_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      if (!e.tensor.has_grad()) {
        throw Error("adamw: missing gradient for '" + e.name + "'");
      }
      auto p = e.tensor.raw_data();
      auto g = e.tensor.grad();
      T* m = m_[i].data();
      T* v = v_[i].data();
      const double shrink = 1.0 - lr * h_.weight_decay;
      const bool decay = e.decay && h_.weight_decay != 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (decay) p[j] = static_cast<T>(static_cast<double>(p[j]) * shrink);
        const double gj = static_cast<double>(g[j]);
        const double mj = h_.beta1 * static_cast<double>(m[j]) + (1.0 - h_.beta1) * gj;
        const double vj = h_.beta2 * static_cast<double>(v[j]) + (1.0 - h_.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        p[j] = static_cast<T>(static_cast<double>(p[j]) - lr * mhat / (std::sqrt(vhat) + h_.eps));
      }
    }
  }

  // Checkpoint plumbing: moments exposed per parameter index.
  std::vector<T>& moment1(std::size_t i) { return m_.at(i); }
  std::vector<T>& moment2(std::size_t i) { return v_.at(i); }
  void set_steps_taken(i64 s) { step_ = s; }

 private:
  nn::ParamStore<T>* store_;
  Hyper h_;
  i64 step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpointing (parameters, optionally optimizer state)
// ---------------------------------------------------------------------------

// Extra non-tensor scalars (step/epoch counters) ride along as 1-element
// entries under the reserved "opt/" name prefix.
template <typename T>
void save_checkpoint(const std::string& path, const nn::ParamStore<T>& store,
                     AdamW<T>* opt = nullptr, i64 epoch = -1) {
  io::CheckpointFile f;
  for (const auto& e : store.entries()) {
    io::TensorEntry te;
    te.name = e.name;
    te.shape = e.tensor.shape();
    auto d = e.tensor.data();
    te.data.assign(d.begin(), d.end());
    f.entries.push_back(std::move(te));
  }
  if (opt) {
    const auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      io::TensorEntry m{"opt/m/" + entries[i].name, entries[i].tensor.shape(), {}};
      m.data.assign(opt->moment1(i).begin(), opt->moment1(i).end());
      io::TensorEntry v{"opt/v/" + entries[i].name, entries[i].tensor.shape(), {}};
      v.data.assign(opt->moment2(i).begin(), opt->moment2(i).end());
      f.entries.push_back(std::move(m));
      f.entries.push_back(std::move(v));
    }
    f.entries.push_back({"opt/step", {1}, {static_cast<float>(opt->steps_taken())}});
    f.entries.push_back({"opt/epoch", {1}, {static_cast<float>(epoch)}});
  }
  io::write_checkpoint(path, f);
}

// Loads parameters (and optimizer state when `opt` given). Strict: every
// store parameter must appear with its exact shape; names outside the store
// and the reserved "opt/" prefix are an error. Returns the stored epoch
// counter (-1 if absent).
template <typename T>
i64 load_checkpoint(const std::string& path, nn::ParamStore<T>& store, AdamW<T>* opt = nullptr) {
  io::CheckpointFile f = io::read_checkpoint(path);
  for (const auto& e : f.entries) {
    const bool is_opt = e.name.rfind("opt/", 0) == 0;
    if (!is_opt && !store.has(e.name)) {
      throw Error("checkpoint '" + path + "': unknown tensor '" + e.name + "'");
    }
  }
  i64 epoch = -1;
  for (auto& se : store.entries()) {
    const io::TensorEntry* e = f.find(se.name);
    if (!e) throw Error("checkpoint '" + path + "': missing tensor '" + se.name + "'");
    if (e->shape != se.tensor.shape()) {
      throw Error("checkpoint '" + path + "': tensor '" + se.name + "' has shape " +
                  shape_str(e->shape) + ", model expects " + shape_str(se.tensor.shape()));
    }
    auto dst = se.tensor.raw_data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(e->data[j]);
  }
  if (const io::TensorEntry* e = f.find("opt/epoch"); e && !e->data.empty()) {
    epoch = static_cast<i64>(e->data[0]);
  }
  if (opt) {
    const auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      for (int which = 0; which < 2; ++which) {
        const std::string name =
            (which == 0 ? "opt/m/" : "opt/v/") + entries[i].name;
        const io::TensorEntry* e = f.find(name);
        if (!e) throw Error("checkpoint '" + path + "': missing optimizer tensor '" + name + "'");
        auto& dst = which == 0 ? opt->moment1(i) : opt->moment2(i);
        if (e->data.size() != dst.size()) {
          throw Error("checkpoint '" + path + "': optimizer tensor '" + name + "' has " +
                      std::to_string(e->data.size()) + " values, expected " +
                      std::to_string(dst.size()));
        }
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(e->data[j]);
      }
    }
    const io::TensorEntry* s = f.find("opt/step");
    if (!s || s->data.empty()) {
      throw Error("checkpoint '" + path + "': missing optimizer tensor 'opt/step'");
    }
    opt->set_steps_taken(static_cast<i64>(s->data[0]));
  }
  return epoch;
}

// ---------------------------------------------------------------------------
// Augmentation (value-level; never recorded on a tape)
// ---------------------------------------------------------------------------

namespace detail_aug {

template <typename T>
void check_pair(const Tensor<T>& xa, const Tensor<T>& ya, const Tensor<T>& xb, const Tensor<T>& yb,
                const char* who) {
  if (xa.shape() != xb.shape() || ya.shape() != yb.shape()) {
    throw Error(std::string(who) + ": paired batches must have identical shapes");
  }
  if (xa.rank() != 4 || ya.rank() != 2 || xa.shape()[0] != ya.shape()[0]) {
    throw Error(std::string(who) + ": need images (B,H,W,C) and labels (B,K) with matching B");
  }
}

}  // namespace detail_aug

// lambda ~ Beta(alpha, alpha); convex blend of both images and labels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> mixup(const Tensor<T>& xa, const Tensor<T>& ya,
                                      const Tensor<T>& xb, const Tensor<T>& yb, double alpha,
                                      rng::Engine& g) {
  detail_aug::check_pair(xa, ya, xb, yb, "mixup");
  const double lam = rng::beta_sample(g, alpha);
  auto blend = [lam](const Tensor<T>& a, const Tensor<T>& b) {
    auto out = Tensor<T>::zeros(a.shape());
    auto po = out.raw_data();
    auto pa = a.data();
    auto pb = b.data();
    for (std::size_t i = 0; i < po.size(); ++i) {
      po[i] = static_cast<T>(lam * static_cast<double>(pa[i]) +
                             (1.0 - lam) * static_cast<double>(pb[i]));
    }
    return out;
  };
  return {blend(xa, xb), blend(ya, yb)};
}

// Rectangle of area ratio (1 - lambda) pasted from b into a; label weight is
// the measured pasted fraction after clipping, so labels stay exact.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> cutmix(const Tensor<T>& xa, const Tensor<T>& ya,
                                       const Tensor<T>& xb, const Tensor<T>& yb, double alpha,
                                       rng::Engine& g) {
  detail_aug::check_pair(xa, ya, xb, yb, "cutmix");
  const i64 b = xa.shape()[0], h = xa.shape()[1], w = xa.shape()[2], c = xa.shape()[3];
  const double lam = rng::beta_sample(g, alpha);
  const double cut = std::sqrt(1.0 - lam);
  const i64 box_h = static_cast<i64>(std::lround(static_cast<double>(h) * cut));
  const i64 box_w = static_cast<i64>(std::lround(static_cast<double>(w) * cut));
  const i64 cy = static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(h)));
  const i64 cx = static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(w)));
  const i64 r0 = std::max<i64>(0, cy - box_h / 2), r1 = std::min<i64>(h, cy + (box_h + 1) / 2);
  const i64 c0 = std::max<i64>(0, cx - box_w / 2), c1 = std::min<i64>(w, cx + (box_w + 1) / 2);
  auto xout = Tensor<T>::from_data(xa.shape(), {xa.data().begin(), xa.data().end()});
  auto px = xout.raw_data();
  auto pb = xb.data();
  for (i64 bi = 0; bi < b; ++bi) {
    for (i64 r = r0; r < r1; ++r) {
      const i64 off = ((bi * h + r) * w + c0) * c;
      for (i64 t = 0; t < (c1 - c0) * c; ++t) px[off + t] = pb[off + t];
    }
  }
  const double pasted = static_cast<double>((r1 - r0) * (c1 - c0)) / static_cast<double>(h * w);
  const double wa = 1.0 - pasted;
  auto yout = Tensor<T>::zeros(ya.shape());
  auto py = yout.raw_data();
  auto pya = ya.data();
  auto pyb = yb.data();
  for (std::size_t i = 0; i < py.size(); ++i) {
    py[i] = static_cast<T>(wa * static_cast<double>(pya[i]) +
                           pasted * static_cast<double>(pyb[i]));
  }
  return {xout, yout};
}

// One square per image zeroed (or filled with the image mean), position
// uniform over the full canvas, clipped at the borders.
template <typename T>
Tensor<T> cutout(const Tensor<T>& x, i64 size, rng::Engine& g, bool mean_fill = false) {
  if (x.rank() != 4) throw Error("cutout: need (B,H,W,C) images, got " + shape_str(x.shape()));
  const i64 b = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  if (size < 0 || size > h || size > w) {
    throw Error("cutout: size " + std::to_string(size) + " exceeds image side");
  }
  auto out = Tensor<T>::from_data(x.shape(), {x.data().begin(), x.data().end()});
  if (size == 0) return out;
  auto p = out.raw_data();
  const i64 plane = h * w * c;
  for (i64 bi = 0; bi < b; ++bi) {
    const i64 cy = static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(h)));
    const i64 cx = static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(w)));
    const i64 r0 = std::max<i64>(0, cy - size / 2), r1 = std::min<i64>(h, cy + (size + 1) / 2);
    const i64 c0 = std::max<i64>(0, cx - size / 2), c1 = std::min<i64>(w, cx + (size + 1) / 2);
    T fill = T(0);
    if (mean_fill) {
      double acc = 0;
      for (i64 t = 0; t < plane; ++t) acc += static_cast<double>(p[bi * plane + t]);
      fill = static_cast<T>(acc / static_cast<double>(plane));
    }
    for (i64 r = r0; r < r1; ++r) {
      const i64 off = ((bi * h + r) * w + c0) * c;
      for (i64 t = 0; t < (c1 - c0) * c; ++t) p[off + t] = fill;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config, synthetic data, loop
// ---------------------------------------------------------------------------

struct SynthSpec {
  i64 side = 32;
  i64 classes = 8;
  i64 train_per_class = 100;
  i64 val_per_class = 25;
  i64 grid_rows = 4;
  i64 grid_cols = 2;
  i64 motif = 6;        // bright square side, in pixels
  double noise = 0.25;  // background noise stddev
};

struct TrainConfig {
  std::string model = "ViP-Tiny";
  std::string variant = "full";
  i64 batch_size = 32;
  i64 epochs = 30;
  i64 warmup_epochs = 2;
  double base_lr = 1e-3;
  i64 lr_denom = 1024;
  double weight_decay = 5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::string schedule_kind = "cosine";  // "cosine" | "constant"
  bool cutout = true;
  i64 cutout_size = 8;
  bool mixup = true;
  double mixup_alpha = 0.2;
  bool cutmix = true;
  double cutmix_alpha = 1.0;
  double mix_prob = 0.5;  // per-batch chance of applying mixup or cutmix
  std::uint64_t seed = 0;
  std::string dataset_path;  // empty = generate synthetic data
  SynthSpec synth;
  std::string out_dir = "run";
  double stop_at_top1 = 0.0;  // early stop once val top-1 reaches this (0 = off)
  std::string resume;         // path to a last.ckpt to continue from

  double peak_lr() const { return lr_for(batch_size, base_lr, lr_denom); }
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);

// Motif-position classification task: class k puts the motif in cell
// (k / grid_cols, k % grid_cols) of a grid_rows x grid_cols partition, with
// position jitter inside the cell and appearance jitter on top of noise.
io::Dataset synth_dataset(const SynthSpec& spec, i64 per_class, std::uint64_t seed);
std::pair<io::Dataset, io::Dataset> synth_train_val(const SynthSpec& spec, std::uint64_t seed);

struct TrainResult {
  std::vector<io::MetricRecord> history;
  double best_top1 = 0.0;
  i64 best_epoch = -1;
  std::string best_path, last_path, metrics_path;
};

i64 top1_correct(const Tensor<float>& logits, const std::vector<std::uint32_t>& labels);

std::pair<Tensor<float>, Tensor<float>> assemble_batch(const io::Dataset& ds,
                                                       const std::vector<i64>& indices,
                                                       std::size_t first, std::size_t count);

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
};
EvalResult evaluate(const Model<float>& model, const io::Dataset& ds, i64 batch_size);

TrainResult train_loop(Model<float>& model, const TrainConfig& cfg, const io::Dataset& train_ds,
                       const io::Dataset& val_ds, std::ostream* progress = nullptr);

// End-to-end entry: resolve datasets (file or synthetic), build the model
// with num_classes taken from the data, train, return the result.
TrainResult run_training(const TrainConfig& cfg, std::ostream* progress = nullptr);

}  // namespace vip::train
