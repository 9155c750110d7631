// vip: command-line driver for the Vision Permutator library.
//
// Machine-readable output is line-delimited JSON on stdout; progress and
// human-facing text go to stderr. Exit codes: 0 success, 1 usage/config
// error, 2 verification failure.

#include <chrono>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vip/gradcheck.hpp"
#include "vip/model.hpp"
#include "vip/train.hpp"

namespace {

using nlohmann::json;
using vip::i64;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerification = 2;

json logits_to_json(std::span<const float> row) {
  json arr = json::array();
  for (float v : row) arr.push_back(v);
  return arr;
}

// ---------------------------------------------------------------------------

struct ParamsArgs {
  std::string model;
};

int run_params(const ParamsArgs& a) {
  vip::ViPConfig cfg = vip::config_by_name(a.model);
  const i64 total = vip::count_params(cfg);
  json stages = json::array();
  for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
    stages.push_back({{"stage", k}, {"params", vip::count_stage_params(cfg, k)}});
  }
  json out{{"model", cfg.name},
           {"total_params", total},
           {"stages", std::move(stages)},
           {"head_params", vip::count_head_params(cfg)}};
  std::cerr << cfg.name << ": " << total << " parameters ("
            << static_cast<double>(total) / 1e6 << "M)\n";
  for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
    std::cerr << "  stage " << k << ": " << vip::count_stage_params(cfg, k) << "\n";
  }
  std::cerr << "  head: " << vip::count_head_params(cfg) << "\n";
  const double ref_m = vip::reference_params_m(cfg.name);
  if (ref_m > 0.0) {
    const double delta = 100.0 * (static_cast<double>(total) / 1e6 - ref_m) / ref_m;
    out["reference_params_m"] = ref_m;
    out["delta_percent"] = delta;
    std::cerr << "  reference " << ref_m << "M, delta " << delta << "%\n";
  }
  std::cout << out.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ForwardArgs {
  std::string model = "ViP-Tiny";
  std::string variant = "full";
  std::string ckpt;
  std::string input;  // VIPDATA1 file; empty with random=true for noise input
  bool random = false;
  std::uint64_t seed = 0;
  i64 batch = 32;
};

int run_forward(const ForwardArgs& a) {
  if (a.random != a.input.empty()) {
    throw vip::Error("forward: need exactly one of --input or --random");
  }
  // num_classes is dictated by the checkpoint head; read it first.
  vip::io::CheckpointFile f = vip::io::read_checkpoint(a.ckpt);
  const vip::io::TensorEntry* head_bias = f.find("head.fc.bias");
  if (!head_bias || head_bias->shape.size() != 1) {
    throw vip::Error("forward: checkpoint '" + a.ckpt + "' has no 'head.fc.bias' entry");
  }
  vip::ViPConfig cfg = vip::config_by_name(a.model);
  cfg.variant = vip::perm::variant_from_name(a.variant);
  cfg.num_classes = head_bias->shape[0];
  cfg.validate();
  vip::rng::Engine init_rng(0);
  vip::Model<float> model = vip::build<float>(cfg, init_rng);
  vip::train::load_checkpoint(a.ckpt, model.store);

  if (a.random) {
    vip::rng::Engine g(vip::rng::derive_seed(a.seed, 20));
    auto img = vip::randn<float>({cfg.image_size, cfg.image_size, 3}, g);
    auto logits = vip::forward_eval(model, img);
    std::cout << json{{"logits", logits_to_json(logits.data())}}.dump() << "\n";
    return kExitOk;
  }

  vip::io::Dataset ds = vip::io::read_dataset(a.input);
  if (ds.side != cfg.image_size || ds.channels != 3) {
    throw vip::Error("forward: dataset geometry " + std::to_string(ds.side) + "x" +
                     std::to_string(ds.side) + "x" + std::to_string(ds.channels) +
                     " does not match model input");
  }
  std::vector<i64> order(static_cast<std::size_t>(ds.count()));
  for (i64 i = 0; i < ds.count(); ++i) order[static_cast<std::size_t>(i)] = i;
  for (i64 first = 0; first < ds.count(); first += a.batch) {
    const auto count = static_cast<std::size_t>(std::min(a.batch, ds.count() - first));
    auto [images, labels] = vip::train::assemble_batch(ds, order, static_cast<std::size_t>(first),
                                                       count);
    auto logits = vip::forward_eval(model, images);
    const i64 k = logits.shape()[1];
    auto d = logits.data();
    for (std::size_t b = 0; b < count; ++b) {
      std::cout << json{{"index", first + static_cast<i64>(b)},
                        {"label", ds.labels[static_cast<std::size_t>(first) + b]},
                        {"logits", logits_to_json(d.subspan(b * static_cast<std::size_t>(k),
                                                            static_cast<std::size_t>(k)))}}
                       .dump()
                << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string model = "ViP-Tiny";
  std::string variant = "full";
  double tol = 1e-3;
  double eps = 1e-5;
  i64 samples = 4;  // coordinates per tensor
  i64 batch = 1;
  std::uint64_t seed = 0;
  std::string fault_leaf;  // test hook
};

int run_gradcheck(const GradcheckArgs& a) {
  vip::ViPConfig cfg = vip::config_by_name(a.model);
  cfg.variant = vip::perm::variant_from_name(a.variant);
  cfg.validate();
  vip::rng::Engine init_rng(vip::rng::derive_seed(a.seed, 0));
  vip::Model<double> model = vip::build<double>(cfg, init_rng);

  vip::rng::Engine data_rng(vip::rng::derive_seed(a.seed, 21));
  auto images = vip::randn<double>({a.batch, cfg.image_size, cfg.image_size, 3}, data_rng);
  auto targets = vip::Tensor<double>::zeros({a.batch, cfg.num_classes});
  {
    auto t = targets.raw_data();
    for (i64 b = 0; b < a.batch; ++b) {
      const auto cls = vip::rng::uniform_below(data_rng,
                                               static_cast<std::uint64_t>(cfg.num_classes));
      t[static_cast<std::size_t>(b * cfg.num_classes + static_cast<i64>(cls))] = 1.0;
    }
  }
  auto loss_fn = [&]() {
    auto logits = vip::forward_eval(model, images);
    return vip::nn::soft_cross_entropy(logits, targets);
  };
  std::vector<vip::NamedLeaf> leaves;
  for (auto& e : model.store.entries()) leaves.push_back({e.name, e.tensor});

  vip::GradCheckOptions opts;
  opts.eps = a.eps;
  opts.tol = a.tol;
  opts.max_checks = a.samples;
  opts.seed = vip::rng::derive_seed(a.seed, 22);
  opts.fault_leaf = a.fault_leaf;
  auto results = vip::gradcheck_leaves(loss_fn, leaves, opts);

  double worst = 0.0;
  std::string worst_name;
  i64 worst_index = -1, total_checked = 0;
  double worst_ad = 0.0, worst_fd = 0.0;
  json layers = json::array();
  for (const auto& r : results) {
    layers.push_back({{"tensor", r.name},
                      {"max_rel_err", r.result.max_rel_err},
                      {"checked", r.result.checked}});
    total_checked += r.result.checked;
    if (r.result.max_rel_err > worst) {
      worst = r.result.max_rel_err;
      worst_name = r.name;
      worst_index = r.result.worst_index;
      worst_ad = r.result.ad_at_worst;
      worst_fd = r.result.fd_at_worst;
    }
  }
  const bool passed = worst <= a.tol;
  json out{{"model", cfg.name},
           {"variant", a.variant},
           {"tol", a.tol},
           {"eps", a.eps},
           {"checked", total_checked},
           {"max_rel_err", worst},
           {"worst",
            {{"tensor", worst_name}, {"index", worst_index}, {"ad", worst_ad}, {"fd", worst_fd}}},
           {"passed", passed},
           {"layers", std::move(layers)}};
  std::cout << out.dump() << "\n";
  std::cerr << "gradcheck " << cfg.name << ": max rel err " << worst << " over " << total_checked
            << " coordinates (tol " << a.tol << ") -> " << (passed ? "PASS" : "FAIL") << "\n";
  if (!passed) {
    std::cerr << "  worst at " << worst_name << "[" << worst_index << "]: reverse-mode "
              << worst_ad << " vs finite-difference " << worst_fd << "\n";
  }
  return passed ? kExitOk : kExitVerification;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string out_dir;  // optional override
  i64 epochs = -1;      // optional override
  std::int64_t seed = -1;
  std::string dataset;  // optional override
};

int run_train(const TrainArgs& a) {
  vip::train::TrainConfig cfg = vip::train::load_train_config(a.config_path);
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (!a.dataset.empty()) cfg.dataset_path = a.dataset;
  cfg.validate();
  vip::train::TrainResult res = vip::train::run_training(cfg, &std::cerr);
  json out{{"best_top1", res.best_top1},
           {"best_epoch", res.best_epoch},
           {"best_ckpt", res.best_path},
           {"last_ckpt", res.last_path},
           {"metrics", res.metrics_path}};
  std::cout << out.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string model = "ViP-Tiny";
  i64 batch = 32;
  i64 iters = 20;
  i64 warmup = 5;
};

int run_bench(const BenchArgs& a) {
  if (a.iters < 10) throw vip::Error("bench: need at least 10 timed iterations");
  if (a.batch < 1 || a.warmup < 0) throw vip::Error("bench: bad batch/warmup");
  vip::ViPConfig cfg = vip::config_by_name(a.model);
  cfg.validate();
  vip::rng::Engine g(1);
  vip::Model<float> model = vip::build<float>(cfg, g);
  auto images = vip::randn<float>({a.batch, cfg.image_size, cfg.image_size, 3}, g);

  auto once = [&]() {
    auto logits = vip::forward_eval(model, images);
    return logits.at({0, 0});  // defeat any dead-code elimination
  };
  volatile float sink = 0.0f;
  for (i64 i = 0; i < a.warmup; ++i) sink = sink + once();
  std::vector<double> rates;
  rates.reserve(static_cast<std::size_t>(a.iters));
  for (i64 i = 0; i < a.iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + once();
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    rates.push_back(static_cast<double>(a.batch) / secs);
  }
  double mean = 0.0;
  for (double r : rates) mean += r;
  mean /= static_cast<double>(rates.size());
  double var = 0.0;
  for (double r : rates) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rates.size());
  json out{{"model", cfg.name},
           {"batch", a.batch},
           {"warmup_iters", a.warmup},
           {"timed_iters", a.iters},
           {"mean_img_per_s", mean},
           {"std_img_per_s", std::sqrt(var)},
           {"params", vip::count_params(cfg)},
           {"threads", vip::kernels::threads()}};
  std::cout << out.dump() << "\n";
  std::cerr << cfg.name << " batch " << a.batch << ": " << mean << " img/s (std "
            << std::sqrt(var) << ", " << vip::kernels::threads() << " threads)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision Permutator: token-mixing vision MLP toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "matmul worker count (overrides the VIP_THREADS environment variable)");

  ParamsArgs pa;
  auto* cmd_params = app.add_subcommand("params", "parameter accounting for a named model");
  cmd_params->add_option("model", pa.model, "model name from the registry")->required();

  ForwardArgs fa;
  auto* cmd_forward = app.add_subcommand("forward", "eval-mode inference from a checkpoint");
  cmd_forward->add_option("--model", fa.model, "model name (default ViP-Tiny)");
  cmd_forward->add_option("--variant", fa.variant, "mixing variant the checkpoint was built with");
  cmd_forward->add_option("--ckpt", fa.ckpt, "VIPCKPT1 checkpoint path")->required();
  cmd_forward->add_option("--input", fa.input, "VIPDATA1 dataset to run");
  cmd_forward->add_flag("--random", fa.random, "use one seeded random input image");
  cmd_forward->add_option("--seed", fa.seed, "seed for --random");
  cmd_forward->add_option("--batch", fa.batch, "inference batch size for --input");

  GradcheckArgs ga;
  auto* cmd_gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
  cmd_gradcheck->add_option("model", ga.model, "model name (default ViP-Tiny)");
  cmd_gradcheck->add_option("--variant", ga.variant, "mixing variant");
  cmd_gradcheck->add_option("--tol", ga.tol, "max relative error to pass");
  cmd_gradcheck->add_option("--eps", ga.eps, "finite-difference step");
  cmd_gradcheck->add_option("--samples", ga.samples, "coordinates checked per tensor");
  cmd_gradcheck->add_option("--batch", ga.batch, "batch size of the probe input");
  cmd_gradcheck->add_option("--seed", ga.seed, "seed for weights/input/sampling");
  cmd_gradcheck
      ->add_option("--inject-grad-fault", ga.fault_leaf,
                   "test hook: corrupt the reverse-mode gradient of this tensor")
      ->group("");  // hidden

  TrainArgs ta;
  auto* cmd_train = app.add_subcommand("train", "train from a JSON config");
  cmd_train->add_option("config", ta.config_path, "TrainConfig JSON path")->required();
  cmd_train->add_option("--out", ta.out_dir, "override output directory");
  cmd_train->add_option("--epochs", ta.epochs, "override epoch count");
  cmd_train->add_option("--seed", ta.seed, "override seed");
  cmd_train->add_option("--dataset", ta.dataset, "override dataset path");

  BenchArgs ba;
  auto* cmd_bench = app.add_subcommand("bench", "forward throughput benchmark");
  cmd_bench->add_option("model", ba.model, "model name (default ViP-Tiny)");
  cmd_bench->add_option("--batch", ba.batch, "batch size (default 32)");
  cmd_bench->add_option("--iters", ba.iters, "timed iterations (>= 10)");
  cmd_bench->add_option("--warmup", ba.warmup, "warmup iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (threads > 0) vip::kernels::set_threads(threads);

  try {
    if (cmd_params->parsed()) return run_params(pa);
    if (cmd_forward->parsed()) return run_forward(fa);
    if (cmd_gradcheck->parsed()) return run_gradcheck(ga);
    if (cmd_train->parsed()) return run_train(ta);
    if (cmd_bench->parsed()) return run_bench(ba);
  } catch (const vip::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
