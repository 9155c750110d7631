#include "vip/train.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace vip::train {

using nlohmann::json;

// RNG stream ids hung off the run seed. Epoch-indexed streams restart at
// every epoch boundary, which is what makes checkpoint resume bit-exact.
namespace stream {
constexpr std::uint64_t init = 0;
constexpr std::uint64_t order = 1;      // per epoch
constexpr std::uint64_t augment = 2;    // per epoch
constexpr std::uint64_t sdepth = 3;     // per epoch
constexpr std::uint64_t synth_train = 10;
constexpr std::uint64_t synth_val = 11;
}  // namespace stream

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (epochs < 1) throw Error("train config: epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs > epochs) {
    throw Error("train config: warmup_epochs must be in [0, epochs]");
  }
  if (base_lr <= 0.0) throw Error("train config: base_lr must be positive");
  if (lr_denom < 1) throw Error("train config: lr_denom must be >= 1");
  if (weight_decay < 0.0) throw Error("train config: weight_decay must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw Error("train config: betas must be in [0, 1)");
  }
  if (schedule_kind != "cosine" && schedule_kind != "constant") {
    throw Error("train config: schedule must be 'cosine' or 'constant', got '" + schedule_kind +
                "'");
  }
  try {
    perm::variant_from_name(variant);
  } catch (const Error&) {
    throw Error("train config: unknown variant '" + variant + "'");
  }
  if (cutout_size < 0) throw Error("train config: cutout_size must be >= 0");
  if (mixup && mixup_alpha <= 0.0) throw Error("train config: mixup_alpha must be positive");
  if (cutmix && cutmix_alpha <= 0.0) throw Error("train config: cutmix_alpha must be positive");
  if (mix_prob < 0.0 || mix_prob > 1.0) throw Error("train config: mix_prob must be in [0, 1]");
  if (stop_at_top1 < 0.0 || stop_at_top1 > 1.0) {
    throw Error("train config: stop_at_top1 must be in [0, 1]");
  }
  if (dataset_path.empty()) {
    const auto& s = synth;
    if (s.side < 4 || s.classes < 2 || s.train_per_class < 1 || s.val_per_class < 1) {
      throw Error("train config: synth spec needs side >= 4, classes >= 2, positive counts");
    }
    if (s.grid_rows < 1 || s.grid_cols < 1 || s.grid_rows * s.grid_cols != s.classes) {
      throw Error("train config: synth grid_rows*grid_cols must equal classes");
    }
    if (s.side % s.grid_rows != 0 || s.side % s.grid_cols != 0) {
      throw Error("train config: synth grid must divide the canvas side");
    }
    if (s.motif < 1 || s.motif > s.side / s.grid_rows || s.motif > s.side / s.grid_cols) {
      throw Error("train config: synth motif must fit inside one grid cell");
    }
    if (s.noise < 0.0) throw Error("train config: synth noise must be >= 0");
  }
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(std::string(what) + ": unknown field '" + key + "'");
  }
}

template <typename T>
T field(const json& j, const char* key, const T& fallback, const char* what) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string(what) + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

json train_config_to_json(const TrainConfig& c) {
  return json{{"model", c.model},
              {"variant", c.variant},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"warmup_epochs", c.warmup_epochs},
              {"base_lr", c.base_lr},
              {"lr_denom", c.lr_denom},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"schedule", c.schedule_kind},
              {"cutout", c.cutout},
              {"cutout_size", c.cutout_size},
              {"mixup", c.mixup},
              {"mixup_alpha", c.mixup_alpha},
              {"cutmix", c.cutmix},
              {"cutmix_alpha", c.cutmix_alpha},
              {"mix_prob", c.mix_prob},
              {"seed", c.seed},
              {"dataset", c.dataset_path},
              {"synth",
               {{"side", c.synth.side},
                {"classes", c.synth.classes},
                {"train_per_class", c.synth.train_per_class},
                {"val_per_class", c.synth.val_per_class},
                {"grid_rows", c.synth.grid_rows},
                {"grid_cols", c.synth.grid_cols},
                {"motif", c.synth.motif},
                {"noise", c.synth.noise}}},
              {"out_dir", c.out_dir},
              {"stop_at_top1", c.stop_at_top1},
              {"resume", c.resume}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("train config: expected a JSON object");
  reject_unknown(j,
                 {"model", "variant", "batch_size", "epochs", "warmup_epochs", "base_lr",
                  "lr_denom", "weight_decay", "beta1", "beta2", "schedule", "cutout",
                  "cutout_size", "mixup", "mixup_alpha", "cutmix", "cutmix_alpha", "mix_prob",
                  "seed", "dataset", "synth", "out_dir", "stop_at_top1", "resume"},
                 "train config");
  TrainConfig c;
  c.model = field<std::string>(j, "model", c.model, "train config");
  c.variant = field<std::string>(j, "variant", c.variant, "train config");
  c.batch_size = field<i64>(j, "batch_size", c.batch_size, "train config");
  c.epochs = field<i64>(j, "epochs", c.epochs, "train config");
  c.warmup_epochs = field<i64>(j, "warmup_epochs", c.warmup_epochs, "train config");
  c.base_lr = field<double>(j, "base_lr", c.base_lr, "train config");
  c.lr_denom = field<i64>(j, "lr_denom", c.lr_denom, "train config");
  c.weight_decay = field<double>(j, "weight_decay", c.weight_decay, "train config");
  c.beta1 = field<double>(j, "beta1", c.beta1, "train config");
  c.beta2 = field<double>(j, "beta2", c.beta2, "train config");
  c.schedule_kind = field<std::string>(j, "schedule", c.schedule_kind, "train config");
  c.cutout = field<bool>(j, "cutout", c.cutout, "train config");
  c.cutout_size = field<i64>(j, "cutout_size", c.cutout_size, "train config");
  c.mixup = field<bool>(j, "mixup", c.mixup, "train config");
  c.mixup_alpha = field<double>(j, "mixup_alpha", c.mixup_alpha, "train config");
  c.cutmix = field<bool>(j, "cutmix", c.cutmix, "train config");
  c.cutmix_alpha = field<double>(j, "cutmix_alpha", c.cutmix_alpha, "train config");
  c.mix_prob = field<double>(j, "mix_prob", c.mix_prob, "train config");
  c.seed = field<std::uint64_t>(j, "seed", c.seed, "train config");
  c.dataset_path = field<std::string>(j, "dataset", c.dataset_path, "train config");
  if (j.contains("synth")) {
    const json& js = j.at("synth");
    if (!js.is_object()) throw Error("train config: field 'synth' must be an object");
    reject_unknown(js,
                   {"side", "classes", "train_per_class", "val_per_class", "grid_rows",
                    "grid_cols", "motif", "noise"},
                   "train config synth");
    c.synth.side = field<i64>(js, "side", c.synth.side, "synth");
    c.synth.classes = field<i64>(js, "classes", c.synth.classes, "synth");
    c.synth.train_per_class = field<i64>(js, "train_per_class", c.synth.train_per_class, "synth");
    c.synth.val_per_class = field<i64>(js, "val_per_class", c.synth.val_per_class, "synth");
    c.synth.grid_rows = field<i64>(js, "grid_rows", c.synth.grid_rows, "synth");
    c.synth.grid_cols = field<i64>(js, "grid_cols", c.synth.grid_cols, "synth");
    c.synth.motif = field<i64>(js, "motif", c.synth.motif, "synth");
    c.synth.noise = field<double>(js, "noise", c.synth.noise, "synth");
  }
  c.out_dir = field<std::string>(j, "out_dir", c.out_dir, "train config");
  c.stop_at_top1 = field<double>(j, "stop_at_top1", c.stop_at_top1, "train config");
  c.resume = field<std::string>(j, "resume", c.resume, "train config");
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open train config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw Error("train config '" + path + "': " + e.what());
  }
  return train_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Synthetic position task
// ---------------------------------------------------------------------------

io::Dataset synth_dataset(const SynthSpec& spec, i64 per_class, std::uint64_t seed) {
  io::Dataset ds;
  ds.side = spec.side;
  ds.channels = 3;
  ds.classes = spec.classes;
  const i64 count = per_class * spec.classes;
  ds.labels.resize(static_cast<std::size_t>(count));
  ds.pixels.resize(static_cast<std::size_t>(count * ds.sample_size()));
  const i64 cell_h = spec.side / spec.grid_rows;
  const i64 cell_w = spec.side / spec.grid_cols;
  rng::Engine g(seed);
  for (i64 i = 0; i < count; ++i) {
    const i64 k = i % spec.classes;  // exactly per_class samples per class
    ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(k);
    float* img = ds.pixels.data() + i * ds.sample_size();
    for (i64 t = 0; t < ds.sample_size(); ++t) {
      img[t] = static_cast<float>(spec.noise * rng::normal01(g));
    }
    // Cell of this class, then a jittered motif position inside it. The
    // jitter range is identical for every cell, so a model blind to one
    // axis cannot tell same-column (or same-row) classes apart.
    const i64 cr = k / spec.grid_cols, cc = k % spec.grid_cols;
    const i64 jr = static_cast<i64>(
        rng::uniform_below(g, static_cast<std::uint64_t>(cell_h - spec.motif + 1)));
    const i64 jc = static_cast<i64>(
        rng::uniform_below(g, static_cast<std::uint64_t>(cell_w - spec.motif + 1)));
    const i64 r0 = cr * cell_h + jr;
    const i64 c0 = cc * cell_w + jc;
    const double bright = 0.8 + 0.4 * rng::uniform01(g);
    for (i64 r = r0; r < r0 + spec.motif; ++r) {
      for (i64 c = c0; c < c0 + spec.motif; ++c) {
        float* px = img + (r * spec.side + c) * 3;
        px[0] = static_cast<float>(bright);
        px[1] = static_cast<float>(bright * 0.6);
        px[2] = static_cast<float>(bright * 0.3);
      }
    }
  }
  return ds;
}

std::pair<io::Dataset, io::Dataset> synth_train_val(const SynthSpec& spec, std::uint64_t seed) {
  return {synth_dataset(spec, spec.train_per_class, rng::derive_seed(seed, stream::synth_train)),
          synth_dataset(spec, spec.val_per_class, rng::derive_seed(seed, stream::synth_val))};
}

// ---------------------------------------------------------------------------
// Batch plumbing
// ---------------------------------------------------------------------------

std::pair<Tensor<float>, Tensor<float>> assemble_batch(const io::Dataset& ds,
                                                       const std::vector<i64>& indices,
                                                       std::size_t first, std::size_t count) {
  if (first + count > indices.size()) throw Error("assemble_batch: index range out of bounds");
  auto images = Tensor<float>::zeros(
      {static_cast<i64>(count), ds.side, ds.side, ds.channels});
  auto labels = Tensor<float>::zeros({static_cast<i64>(count), ds.classes});
  auto pi = images.raw_data();
  auto pl = labels.raw_data();
  const i64 n = ds.sample_size();
  for (std::size_t b = 0; b < count; ++b) {
    const i64 idx = indices[first + b];
    std::copy_n(ds.sample(idx), n, pi.data() + static_cast<i64>(b) * n);
    pl[b * static_cast<std::size_t>(ds.classes) + ds.labels[static_cast<std::size_t>(idx)]] = 1.0f;
  }
  return {images, labels};
}

i64 top1_correct(const Tensor<float>& logits, const std::vector<std::uint32_t>& labels) {
  if (logits.rank() != 2 || logits.shape()[0] != static_cast<i64>(labels.size())) {
    throw Error("top1_correct: logits " + shape_str(logits.shape()) + " vs " +
                std::to_string(labels.size()) + " labels");
  }
  const i64 b = logits.shape()[0], k = logits.shape()[1];
  auto d = logits.data();
  i64 correct = 0;
  for (i64 r = 0; r < b; ++r) {
    i64 arg = 0;
    for (i64 j = 1; j < k; ++j) {
      if (d[r * k + j] > d[r * k + arg]) arg = j;
    }
    if (arg == static_cast<i64>(labels[static_cast<std::size_t>(r)])) ++correct;
  }
  return correct;
}

namespace {

std::vector<std::uint32_t> argmax_rows(const Tensor<float>& probs) {
  const i64 b = probs.shape()[0], k = probs.shape()[1];
  auto d = probs.data();
  std::vector<std::uint32_t> out(static_cast<std::size_t>(b));
  for (i64 r = 0; r < b; ++r) {
    i64 arg = 0;
    for (i64 j = 1; j < k; ++j) {
      if (d[r * k + j] > d[r * k + arg]) arg = j;
    }
    out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(arg);
  }
  return out;
}

// Gather rows of a batch pair by index (partner construction for mixing).
std::pair<Tensor<float>, Tensor<float>> gather_rows(const Tensor<float>& x, const Tensor<float>& y,
                                                    const std::vector<i64>& order) {
  auto xo = Tensor<float>::zeros(x.shape());
  auto yo = Tensor<float>::zeros(y.shape());
  const i64 xrow = x.numel() / x.shape()[0];
  const i64 yrow = y.numel() / y.shape()[0];
  auto px = x.data();
  auto py = y.data();
  auto pxo = xo.raw_data();
  auto pyo = yo.raw_data();
  for (std::size_t b = 0; b < order.size(); ++b) {
    std::copy_n(px.data() + order[b] * xrow, xrow, pxo.data() + static_cast<i64>(b) * xrow);
    std::copy_n(py.data() + order[b] * yrow, yrow, pyo.data() + static_cast<i64>(b) * yrow);
  }
  return {xo, yo};
}

}  // namespace

EvalResult evaluate(const Model<float>& model, const io::Dataset& ds, i64 batch_size) {
  std::vector<i64> order(static_cast<std::size_t>(ds.count()));
  for (i64 i = 0; i < ds.count(); ++i) order[static_cast<std::size_t>(i)] = i;
  double loss_sum = 0.0;
  i64 correct = 0;
  for (i64 first = 0; first < ds.count(); first += batch_size) {
    const auto count = static_cast<std::size_t>(std::min(batch_size, ds.count() - first));
    auto [images, labels] = assemble_batch(ds, order, static_cast<std::size_t>(first), count);
    Tensor<float> logits = forward_eval(model, images);
    Tensor<float> loss = nn::soft_cross_entropy(logits, labels);
    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
    std::vector<std::uint32_t> hard(ds.labels.begin() + first,
                                    ds.labels.begin() + first + static_cast<i64>(count));
    correct += top1_correct(logits, hard);
  }
  return {loss_sum / static_cast<double>(ds.count()),
          static_cast<double>(correct) / static_cast<double>(ds.count())};
}

// ---------------------------------------------------------------------------
// The loop
// ---------------------------------------------------------------------------

TrainResult train_loop(Model<float>& model, const TrainConfig& cfg, const io::Dataset& train_ds,
                       const io::Dataset& val_ds, std::ostream* progress) {
  cfg.validate();
  if (train_ds.count() == 0 || val_ds.count() == 0) {
    throw Error("train_loop: empty dataset");
  }
  if (model.cfg.num_classes != train_ds.classes) {
    throw Error("train_loop: model has " + std::to_string(model.cfg.num_classes) +
                " classes, dataset has " + std::to_string(train_ds.classes));
  }
  if (train_ds.side != model.cfg.image_size || train_ds.channels != 3) {
    throw Error("train_loop: dataset geometry " + std::to_string(train_ds.side) + "x" +
                std::to_string(train_ds.side) + "x" + std::to_string(train_ds.channels) +
                " does not match model input " + std::to_string(model.cfg.image_size) +
                "x" + std::to_string(model.cfg.image_size) + "x3");
  }
  if (val_ds.classes != train_ds.classes || val_ds.side != train_ds.side ||
      val_ds.channels != train_ds.channels) {
    throw Error("train_loop: train and val dataset headers disagree");
  }

  std::filesystem::create_directories(cfg.out_dir);
  TrainResult res;
  res.best_path = cfg.out_dir + "/best.ckpt";
  res.last_path = cfg.out_dir + "/last.ckpt";
  res.metrics_path = cfg.out_dir + "/metrics.jsonl";
  io::MetricsWriter metrics(res.metrics_path);

  typename AdamW<float>::Hyper hyper;
  hyper.beta1 = cfg.beta1;
  hyper.beta2 = cfg.beta2;
  hyper.weight_decay = cfg.weight_decay;
  AdamW<float> opt(model.store, hyper);

  i64 start_epoch = 0;
  if (!cfg.resume.empty()) {
    const i64 saved = load_checkpoint(cfg.resume, model.store, &opt);
    if (saved < 0) throw Error("resume: '" + cfg.resume + "' carries no epoch counter");
    start_epoch = saved + 1;
  }

  const i64 steps_per_epoch = (train_ds.count() + cfg.batch_size - 1) / cfg.batch_size;
  const i64 total_steps = steps_per_epoch * cfg.epochs;
  const i64 warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  const double peak = cfg.peak_lr();
  const bool mixing_on = cfg.mixup || cfg.cutmix;

  for (i64 epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    rng::Engine order_rng(rng::derive_seed(cfg.seed, stream::order, static_cast<std::uint64_t>(epoch)));
    rng::Engine aug_rng(rng::derive_seed(cfg.seed, stream::augment, static_cast<std::uint64_t>(epoch)));
    rng::Engine sd_rng(rng::derive_seed(cfg.seed, stream::sdepth, static_cast<std::uint64_t>(epoch)));
    auto order = rng::permutation(train_ds.count(), order_rng);

    double loss_sum = 0.0;
    i64 correct = 0, seen = 0;
    for (i64 step = 0; step < steps_per_epoch; ++step) {
      const i64 first = step * cfg.batch_size;
      const auto count = static_cast<std::size_t>(std::min(cfg.batch_size, train_ds.count() - first));
      auto [images, labels] = assemble_batch(train_ds, order, static_cast<std::size_t>(first), count);
      if (cfg.cutout && cfg.cutout_size > 0) {
        images = cutout(images, cfg.cutout_size, aug_rng);
      }
      if (mixing_on && rng::uniform01(aug_rng) < cfg.mix_prob) {
        auto partner_order = rng::permutation(static_cast<i64>(count), aug_rng);
        auto [xb, yb] = gather_rows(images, labels, partner_order);
        const bool use_mixup =
            cfg.mixup && (!cfg.cutmix || rng::uniform01(aug_rng) < 0.5);
        if (use_mixup) {
          std::tie(images, labels) = mixup(images, labels, xb, yb, cfg.mixup_alpha, aug_rng);
        } else {
          std::tie(images, labels) = cutmix(images, labels, xb, yb, cfg.cutmix_alpha, aug_rng);
        }
      }
      const double lr = cfg.schedule_kind == "cosine"
                            ? schedule(opt.steps_taken(), total_steps, warmup_steps, peak)
                            : (warmup_steps > 0 && opt.steps_taken() < warmup_steps
                                   ? peak * static_cast<double>(opt.steps_taken()) /
                                         static_cast<double>(warmup_steps)
                                   : peak);
      {
        Tape<float> tape;
        typename Tape<float>::Scope scope(tape);
        Tensor<float> logits = forward(model, images, nn::Mode::train, sd_rng);
        Tensor<float> loss = nn::soft_cross_entropy(logits, labels);
        const float lv = loss.item();
        if (!std::isfinite(lv)) {
          throw Error("train_loop: non-finite loss " + std::to_string(lv) + " at epoch " +
                      std::to_string(epoch) + " step " + std::to_string(step) +
                      " (lr " + std::to_string(lr) + ")");
        }
        backward(loss);
        loss_sum += static_cast<double>(lv) * static_cast<double>(count);
        correct += top1_correct(logits, argmax_rows(labels));
        seen += static_cast<i64>(count);
      }
      opt.step(lr);
      model.store.zero_grads();
    }

    io::MetricRecord train_rec{epoch, "train", loss_sum / static_cast<double>(seen),
                               static_cast<double>(correct) / static_cast<double>(seen)};
    metrics.append(train_rec);
    EvalResult ev = evaluate(model, val_ds, cfg.batch_size);
    io::MetricRecord val_rec{epoch, "val", ev.loss, ev.top1};
    metrics.append(val_rec);
    if (progress) {
      (*progress) << "epoch " << epoch << "  train loss " << train_rec.loss << "  top1 "
                  << train_rec.top1 << "  |  val loss " << ev.loss << "  top1 " << ev.top1
                  << "\n";
    }
    if (ev.top1 > res.best_top1 || res.best_epoch < 0) {
      res.best_top1 = ev.top1;
      res.best_epoch = epoch;
      save_checkpoint(res.best_path, model.store);
    }
    save_checkpoint(res.last_path, model.store, &opt, epoch);
    if (cfg.stop_at_top1 > 0.0 && ev.top1 >= cfg.stop_at_top1) break;
  }
  res.history = metrics.history();
  return res;
}

TrainResult run_training(const TrainConfig& cfg, std::ostream* progress) {
  cfg.validate();
  io::Dataset train_ds, val_ds;
  if (cfg.dataset_path.empty()) {
    std::tie(train_ds, val_ds) = synth_train_val(cfg.synth, cfg.seed);
  } else {
    train_ds = io::read_dataset(cfg.dataset_path);
    // Companion val file: "<stem>.val<ext>" next to the train file.
    const std::filesystem::path p(cfg.dataset_path);
    const std::filesystem::path val_p =
        p.parent_path() / (p.stem().string() + ".val" + p.extension().string());
    if (!std::filesystem::exists(val_p)) {
      throw Error("run_training: expected companion validation file '" + val_p.string() + "'");
    }
    val_ds = io::read_dataset(val_p.string());
  }
  ViPConfig mc = config_by_name(cfg.model);
  mc.variant = perm::variant_from_name(cfg.variant);
  mc.num_classes = train_ds.classes;
  mc.validate();
  rng::Engine init_rng(rng::derive_seed(cfg.seed, stream::init));
  Model<float> model = build<float>(mc, init_rng);
  return train_loop(model, cfg, train_ds, val_ds, progress);
}

}  // namespace vip::train
