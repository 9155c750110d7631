// Acceptance harness: one self-contained check per release criterion.
//
// Prints exactly one PASS/FAIL/WARN/NOTE line per criterion and exits
// non-zero if any required criterion fails. Criterion 6 is informational
// (WARN at worst); criterion 10 records a scope decision rather than a test.
//
// Usage: acceptance [N ...]   -- run only the listed criteria (default: all).

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vip/gradcheck.hpp"
#include "vip/io.hpp"
#include "vip/model.hpp"
#include "vip/train.hpp"

using namespace vip;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream ss;
  ss << std::setprecision(prec) << v;
  return ss.str();
}

std::string pct(double frac) { return fmt(100.0 * frac, 4) + "%"; }

// ---------------------------------------------------------------------------
// Shared fixture: a permute MLP with random weights of usable magnitude.

struct MlpUnderTest {
  nn::ParamStore<float> store;
  perm::PermuteMLPWeights<float> mlp;
  perm::SplitAttentionWeights<float> attn;
};

MlpUnderTest random_mlp(i64 c, rng::Engine& g) {
  MlpUnderTest m;
  m.mlp.proj_h = nn::make_linear(m.store, "ph", c, c);
  m.mlp.proj_w = nn::make_linear(m.store, "pw", c, c);
  m.mlp.proj_c = nn::make_linear(m.store, "pc", c, c);
  m.mlp.proj = nn::make_linear(m.store, "proj", c, c);
  const i64 r = (c % 4 == 0) ? 4 : ((c % 2 == 0) ? 2 : 1);
  m.attn.r = r;
  m.attn.reduce = nn::make_linear(m.store, "red", c, c / r);
  m.attn.expand = nn::make_linear(m.store, "exp", c / r, 3 * c);
  for (auto& e : m.store.entries()) {
    for (auto& v : e.tensor.raw_data()) v = 0.35f * static_cast<float>(rng::normal01(g));
  }
  return m;
}

double inf_norm(const oracle::vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Tensor<float> copy_tensor(const Tensor<float>& x) {
  auto y = Tensor<float>::zeros(x.shape());
  auto src = x.data();
  auto dst = y.raw_data();
  std::copy(src.begin(), src.end(), dst.begin());
  return y;
}

// ---------------------------------------------------------------------------
// Criterion 1: forward paths match brute-force oracles.

Outcome criterion_oracles() {
  rng::Engine g(rng::derive_seed(310, 0));
  double worst = 0.0;
  int grids = 0;
  for (i64 n : {2, 4, 8}) {
    for (i64 s : {1, 2, 3}) {
      const i64 c = n * s;
      for (int rep = 0; rep < 12; ++rep) {
        auto m = random_mlp(c, g);
        auto x = randn<float>({n, n, c}, g);
        const oracle::vec xv = oracle::flat(x);
        const auto ph = oracle::lin_of(m.mlp.proj_h), pw = oracle::lin_of(m.mlp.proj_w),
                   pc = oracle::lin_of(m.mlp.proj_c), pj = oracle::lin_of(m.mlp.proj);

        auto yv = perm::permute_mlp_forward(x, m.mlp, s);
        const oracle::vec rv = oracle::permute_mlp_vanilla(n, n, c, s, xv, ph, pw, pc, pj);
        worst = std::max(worst, oracle::max_abs_diff(yv, rv) / std::max(inf_norm(rv), 1e-12));

        auto yw = perm::weighted_permute_mlp_forward(x, m.mlp, m.attn, s);
        const oracle::vec rw =
            oracle::permute_mlp_weighted(n, n, c, s, xv, ph, pw, pc, pj,
                                         oracle::lin_of(m.attn.reduce),
                                         oracle::lin_of(m.attn.expand));
        worst = std::max(worst, oracle::max_abs_diff(yw, rw) / std::max(inf_norm(rw), 1e-12));
        ++grids;
      }
    }
  }
  Outcome o;
  o.pass = grids >= 100 && worst <= 1e-6;
  o.detail = "plain and weighted Permute-MLP vs gather/matmul/scatter oracles on " +
             std::to_string(grids) + " random grids: worst norm-relative error " + fmt(worst) +
             " (tol 1e-6)";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 2: exact equivariance / locality properties.

Outcome criterion_equivariance() {
  rng::Engine g(rng::derive_seed(311, 0));
  const int cases = 50;
  int height_ok = 0, width_ok = 0, local_ok = 0;

  for (int rep = 0; rep < cases; ++rep) {
    const i64 n = 2 + static_cast<i64>(rng::uniform_below(g, 7));  // side 2..8
    const i64 s = 1 + static_cast<i64>(rng::uniform_below(g, 3));
    const i64 c = n * s;
    auto m = random_mlp(c, g);
    auto x = randn<float>({n, n, c}, g);
    const auto sigma = rng::permutation(static_cast<std::uint64_t>(n), g);

    // y(:, j, :) = x(:, sigma[j], :)
    auto permute_cols = [&](const Tensor<float>& t) {
      auto y = Tensor<float>::zeros(t.shape());
      auto src = t.data();
      auto dst = y.raw_data();
      for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < n; ++j)
          for (i64 ch = 0; ch < c; ++ch)
            dst[static_cast<std::size_t>((i * n + j) * c + ch)] =
                src[static_cast<std::size_t>((i * n + static_cast<i64>(sigma[j])) * c + ch)];
      return y;
    };
    // y(i, :, :) = x(sigma[i], :, :)
    auto permute_rows = [&](const Tensor<float>& t) {
      auto y = Tensor<float>::zeros(t.shape());
      auto src = t.data();
      auto dst = y.raw_data();
      for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < n; ++j)
          for (i64 ch = 0; ch < c; ++ch)
            dst[static_cast<std::size_t>((i * n + j) * c + ch)] =
                src[static_cast<std::size_t>((static_cast<i64>(sigma[i]) * n + j) * c + ch)];
      return y;
    };
    auto bitwise_equal = [](const Tensor<float>& a, const Tensor<float>& b) {
      auto da = a.data();
      auto db = b.data();
      return std::equal(da.begin(), da.end(), db.begin(), db.end());
    };

    // Height mixing never looks across columns: permuting columns commutes.
    auto ha = perm::mix_height(permute_cols(x), m.mlp.proj_h, s);
    auto hb = permute_cols(perm::mix_height(x, m.mlp.proj_h, s));
    height_ok += bitwise_equal(ha, hb) ? 1 : 0;

    // Width mixing never looks across rows: permuting rows commutes.
    auto wa = perm::mix_width(permute_rows(x), m.mlp.proj_w, s);
    auto wb = permute_rows(perm::mix_width(x, m.mlp.proj_w, s));
    width_ok += bitwise_equal(wa, wb) ? 1 : 0;

    // Channel branch is per-token: poking one token leaves every other
    // token's output bit-identical.
    auto y1 = perm::permute_mlp_forward(x, m.mlp, s, perm::Variant::channels_only);
    auto x2 = copy_tensor(x);
    const i64 ti = static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(n)));
    const i64 tj = static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(n)));
    const i64 tc = static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(c)));
    x2.raw_data()[static_cast<std::size_t>((ti * n + tj) * c + tc)] += 0.75f;
    auto y2 = perm::permute_mlp_forward(x2, m.mlp, s, perm::Variant::channels_only);
    bool others_intact = true;
    auto d1 = y1.data();
    auto d2 = y2.data();
    for (i64 i = 0; i < n && others_intact; ++i)
      for (i64 j = 0; j < n && others_intact; ++j) {
        if (i == ti && j == tj) continue;
        for (i64 ch = 0; ch < c; ++ch) {
          if (d1[static_cast<std::size_t>((i * n + j) * c + ch)] !=
              d2[static_cast<std::size_t>((i * n + j) * c + ch)]) {
            others_intact = false;
            break;
          }
        }
      }
    local_ok += others_intact ? 1 : 0;
  }

  Outcome o;
  o.pass = height_ok == cases && width_ok == cases && local_ok == cases;
  o.detail = "exact width-equivariance of mix_height " + std::to_string(height_ok) + "/" +
             std::to_string(cases) + ", height-equivariance of mix_width " +
             std::to_string(width_ok) + "/" + std::to_string(cases) +
             ", channel-branch locality " + std::to_string(local_ok) + "/" +
             std::to_string(cases);
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 3: reverse-mode gradients vs finite differences (64-bit).

Outcome criterion_gradcheck() {
  double worst = 0.0;
  std::string worst_at = "-";
  bool all_pass = true;
  i64 checked = 0;
  const double tol = 1e-3;

  auto absorb = [&](const std::vector<LeafGradCheck>& reports, const std::string& scope) {
    for (const auto& r : reports) {
      checked += r.result.checked;
      if (r.result.max_rel_err > worst) {
        worst = r.result.max_rel_err;
        worst_at = scope + ":" + r.name;
      }
      all_pass = all_pass && r.result.passed(tol);
    }
  };

  {  // One full Permutator block, all leaves plus the input.
    nn::ParamStore<double> store;
    auto w = perm::make_permutator_block(store, "b", 8, 2, perm::Variant::full);
    rng::Engine gi(rng::derive_seed(312, 0));
    nn::init_params(store, gi);
    for (auto& e : store.entries())
      for (auto& v : e.tensor.raw_data()) v *= 10.0;
    auto x = uniform<double>({4, 4, 8}, gi).set_requires_grad(true);
    std::vector<NamedLeaf> leaves = {{"x", x}};
    for (auto& e : store.entries()) leaves.push_back({e.name, e.tensor});
    GradCheckOptions opts;
    opts.eps = 1e-5;
    opts.tol = tol;
    opts.max_checks = 10;
    rng::Engine gf(rng::derive_seed(312, 1));
    absorb(gradcheck_leaves(
               [&]() {
                 auto y = perm::permutator_block(x, w, 2, 0.0, perm::Variant::full,
                                                 nn::Mode::train, gf);
                 return mean(mul(y, y));
               },
               leaves, opts),
           "block");
  }

  {  // Full ViP-Tiny, soft cross-entropy loss.
    rng::Engine gi(rng::derive_seed(313, 0));
    auto model = build<double>(config_by_name("ViP-Tiny"), gi);
    auto images = randn<double>({1, 32, 32, 3}, gi);
    auto targets = Tensor<double>::zeros({1, 10});
    targets.raw_data()[3] = 1.0;
    std::vector<NamedLeaf> leaves;
    for (auto& e : model.store.entries()) leaves.push_back({e.name, e.tensor});
    GradCheckOptions opts;
    opts.eps = 1e-5;
    opts.tol = tol;
    opts.max_checks = 6;
    absorb(gradcheck_leaves(
               [&]() { return nn::soft_cross_entropy(forward_eval(model, images), targets); },
               leaves, opts),
           "ViP-Tiny");
  }

  Outcome o;
  o.pass = all_pass;
  o.detail = "64-bit finite differences (eps 1e-5) through one Permutator block and full "
             "ViP-Tiny: max rel err " +
             fmt(worst) + " at " + worst_at + " over " + std::to_string(checked) +
             " coordinates (tol 1e-3)";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 4: parameter accounting for the published table.

Outcome criterion_params() {
  const std::vector<std::string> order = {"ViP-Small/16", "ViP-Small/7", "ViP-Small/14",
                                          "ViP-Medium/7", "ViP-Large/7"};
  bool within = true;
  double worst_delta = 0.0;
  std::ostringstream counts;
  for (const auto& name : order) {
    const double m = static_cast<double>(count_params(config_by_name(name))) / 1e6;
    const double ref = reference_params_m(name);
    const double delta = 100.0 * (m - ref) / ref;
    worst_delta = std::max(worst_delta, std::abs(delta));
    within = within && std::abs(delta) <= 10.0;
    counts << (counts.tellp() > 0 ? ", " : "") << name << " " << fmt(m, 4) << "M ("
           << (delta >= 0 ? "+" : "") << fmt(delta, 2) << "%)";
  }
  bool ordered = true;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    ordered = ordered &&
              count_params(config_by_name(order[i])) < count_params(config_by_name(order[i + 1]));
  }
  Outcome o;
  o.pass = within && ordered;
  o.detail = counts.str() + "; size order " +
             (ordered ? "strictly increasing as listed" : "VIOLATED");
  return o;
}

// ---------------------------------------------------------------------------
// Criteria 5-7 share desk-scale training runs on the synthetic benchmark.

struct RunOutcome {
  train::TrainResult res;
  double secs = 0.0;
};

class TrainBench {
 public:
  TrainBench() {
    base_ = fs::temp_directory_path() / ("vip_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(base_);
    fs::create_directories(base_);
  }
  ~TrainBench() {
    std::error_code ec;
    fs::remove_all(base_, ec);
  }

  train::TrainConfig config(const std::string& variant, std::uint64_t seed,
                            const std::string& tag) const {
    train::TrainConfig cfg;  // defaults: ViP-Tiny on the 8-class synthetic set
    cfg.variant = variant;
    cfg.seed = seed;
    cfg.batch_size = 32;
    cfg.epochs = 10;
    cfg.warmup_epochs = 2;
    cfg.base_lr = 0.064;  // peak 2e-3 after the linear batch-size rule
    cfg.schedule_kind = "cosine";
    cfg.cutout = cfg.mixup = cfg.cutmix = false;
    cfg.stop_at_top1 = 0.95;
    cfg.out_dir = (base_ / tag).string();
    return cfg;
  }

  const RunOutcome& run(const std::string& variant, std::uint64_t seed) {
    const std::string key = variant + "/" + std::to_string(seed);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const auto cfg = config(variant, seed, variant + "_s" + std::to_string(seed));
    std::cerr << "-- training " << key << "\n";
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome out;
    out.res = train::run_training(cfg, &std::cerr);
    out.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cache_.emplace(key, std::move(out)).first->second;
  }

  // Median best validation top-1 over the three benchmark seeds.
  double median_top1(const std::string& variant) {
    std::vector<double> xs;
    for (std::uint64_t s : seeds) xs.push_back(run(variant, s).res.best_top1);
    std::sort(xs.begin(), xs.end());
    return xs[1];
  }

  double slowest_secs() const {
    double m = 0.0;
    for (const auto& [k, v] : cache_) m = std::max(m, v.secs);
    return m;
  }

  const fs::path& base() const { return base_; }

  static constexpr std::uint64_t seeds[3] = {0, 1, 2};

 private:
  fs::path base_;
  std::map<std::string, RunOutcome> cache_;
};

Outcome criterion_ablation(TrainBench& bench) {
  const double full = bench.median_top1("full");
  const double nh = bench.median_top1("no_height");
  const double nw = bench.median_top1("no_width");
  const double margin_h = 100.0 * (full - nh);
  const double margin_w = 100.0 * (full - nw);
  Outcome o;
  o.pass = margin_h >= 5.0 && margin_w >= 5.0 && bench.slowest_secs() <= 600.0;
  o.detail = "median val top-1 over seeds {0,1,2}: full " + pct(full) + " vs no_height " +
             pct(nh) + " (+" + fmt(margin_h, 4) + " pts) and no_width " + pct(nw) + " (+" +
             fmt(margin_w, 4) + " pts); need +5 pts each; slowest run " +
             fmt(bench.slowest_secs(), 3) + "s of 600s";
  return o;
}

Outcome criterion_weighted_vs_vanilla(TrainBench& bench) {
  const double full = bench.median_top1("full");
  const double vanilla = bench.median_top1("vanilla");
  Outcome o;
  o.pass = 100.0 * (full - vanilla) >= -1.0;
  o.detail = "median val top-1: weighted fusion " + pct(full) + " vs plain-sum vanilla " +
             pct(vanilla) + "; weighted must stay within 1 pt of vanilla";
  return o;
}

Outcome criterion_convergence(TrainBench& bench) {
  bool reached = true;
  double min_best = 1.0;
  i64 worst_epoch = -1;
  for (std::uint64_t s : TrainBench::seeds) {
    const auto& r = bench.run("full", s);
    min_best = std::min(min_best, r.res.best_top1);
    worst_epoch = std::max(worst_epoch, r.res.best_epoch);
    reached = reached && r.res.best_top1 >= 0.95 && r.res.best_epoch < 30;
  }

  // Initial loss: evaluate an untrained model on the benchmark's validation
  // split; it must sit at ln K for K balanced classes.
  const auto cfg = bench.config("full", 0, "probe");
  auto [tr, va] = train::synth_train_val(cfg.synth, cfg.seed);
  ViPConfig mc = config_by_name(cfg.model);
  mc.num_classes = va.classes;
  rng::Engine gi(rng::derive_seed(cfg.seed, 0));
  auto model = build<float>(mc, gi);
  const double init_loss = train::evaluate(model, va, cfg.batch_size).loss;
  const double lnk = std::log(static_cast<double>(va.classes));
  const bool init_ok = std::abs(init_loss - lnk) <= 0.1;

  // Determinism: repeat seed 0 in a fresh directory; the metric history and
  // best accuracy must reproduce exactly.
  const auto& first = bench.run("full", 0);
  auto cfg2 = bench.config("full", 0, "full_s0_repeat");
  std::cerr << "-- training full/0 (repeat)\n";
  auto repeat = train::run_training(cfg2, &std::cerr);
  bool deterministic = repeat.best_top1 == first.res.best_top1 &&
                       repeat.history.size() == first.res.history.size();
  if (deterministic) {
    for (std::size_t i = 0; i < repeat.history.size(); ++i) {
      deterministic = deterministic && repeat.history[i].loss == first.res.history[i].loss &&
                      repeat.history[i].top1 == first.res.history[i].top1;
    }
  }

  Outcome o;
  o.pass = reached && init_ok && deterministic;
  o.detail = "ViP-Tiny best val top-1 " + pct(min_best) + " (min over 3 seeds, all by epoch " +
             std::to_string(worst_epoch) + " < 30); untrained val loss " + fmt(init_loss, 5) +
             " vs ln K = " + fmt(lnk, 5) + " (tol 0.1); seed-0 rerun " +
             (deterministic ? "bit-identical" : "DIVERGED");
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 8: lr scaling rule and AdamW weight-decay law.

Outcome criterion_optimizer() {
  const bool lr_exact = train::lr_for(2048) == 2e-3;

  nn::ParamStore<double> store;
  store.add("w", Tensor<double>::from_data({2}, {1.0, -2.0}), nn::ParamKind::weight);
  store.add("b", Tensor<double>::from_data({2}, {0.5, 0.25}), nn::ParamKind::bias);
  store.zero_grads();
  train::AdamW<double>::Hyper h;
  h.weight_decay = 0.05;
  train::AdamW<double> opt(store, h);
  const double lr = 0.01;
  const int K = 100;
  for (int i = 0; i < K; ++i) opt.step(lr);
  const double factor = std::pow(1.0 - lr * h.weight_decay, K);
  const double err_w = std::max(std::abs(store.get("w").data()[0] - 1.0 * factor),
                                std::abs(store.get("w").data()[1] - -2.0 * factor));
  const bool bias_frozen =
      store.get("b").data()[0] == 0.5 && store.get("b").data()[1] == 0.25;

  Outcome o;
  o.pass = lr_exact && err_w <= 1e-7 && bias_frozen;
  o.detail = std::string("lr_for(2048) == 2e-3 ") + (lr_exact ? "exactly" : "VIOLATED") +
             "; zero-grad AdamW after " + std::to_string(K) +
             " steps matches (1 - lr*wd)^K within " + fmt(err_w) +
             " (tol 1e-7), biases untouched: " + (bias_frozen ? "yes" : "NO");
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 9: checkpoint round trip and size arithmetic.

Outcome criterion_checkpoint() {
  const fs::path dir =
      fs::temp_directory_path() / ("vip_acceptance_ckpt_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string path = (dir / "tiny.ckpt").string();

  rng::Engine g1(7), g2(8);
  auto m1 = build<float>(config_by_name("ViP-Tiny"), g1);
  auto m2 = build<float>(config_by_name("ViP-Tiny"), g2);
  train::save_checkpoint(path, m1.store);

  // Independent size arithmetic: header magic + count, then per tensor a
  // name record, rank, extents, and the float payload.
  std::uintmax_t expect = 8 + 4;
  for (const auto& e : m1.store.entries()) {
    expect += 4 + e.name.size() + 4 + 4 * static_cast<std::uintmax_t>(e.tensor.rank()) +
              4 * static_cast<std::uintmax_t>(e.tensor.numel());
  }
  const std::uintmax_t actual = fs::file_size(path);

  train::load_checkpoint(path, m2.store);
  bool identical = true;
  for (std::size_t i = 0; i < m1.store.entries().size() && identical; ++i) {
    auto a = m1.store.entries()[i].tensor.data();
    auto b = m2.store.entries()[i].tensor.data();
    identical = std::equal(a.begin(), a.end(), b.begin(), b.end(),
                           [](float x, float y) {
                             return std::memcmp(&x, &y, sizeof(float)) == 0;
                           });
  }

  std::error_code ec;
  fs::remove_all(dir, ec);

  Outcome o;
  o.pass = identical && actual == expect;
  o.detail = "save/load round trip over " + std::to_string(m1.store.entries().size()) +
             " tensors bit-exact: " + (identical ? "yes" : "NO") + "; file size " +
             std::to_string(actual) + " bytes vs closed-form " + std::to_string(expect);
  return o;
}

// ---------------------------------------------------------------------------

struct CriterionRow {
  int id;
  bool warn_only;
  std::string outcome;  // PASS / FAIL / WARN / NOTE / SKIP
  std::string detail;
  double secs;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  auto enabled = [&](int id) { return want.empty() || want.count(id) > 0; };

  TrainBench bench;
  std::vector<CriterionRow> rows;
  bool all_ok = true;

  auto run = [&](int id, bool warn_only, auto fn) {
    if (!enabled(id)) {
      rows.push_back({id, warn_only, "SKIP", "not requested", 0.0});
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
    std::string verdict = o.pass ? "PASS" : (warn_only ? "WARN" : "FAIL");
    if (!o.pass && !warn_only) all_ok = false;
    rows.push_back({id, warn_only, verdict, o.detail, secs});
  };

  run(1, false, criterion_oracles);
  run(2, false, criterion_equivariance);
  run(3, false, criterion_gradcheck);
  run(4, false, criterion_params);
  run(5, false, [&] { return criterion_ablation(bench); });
  run(6, true, [&] { return criterion_weighted_vs_vanilla(bench); });
  run(7, false, [&] { return criterion_convergence(bench); });
  run(8, false, criterion_optimizer);
  run(9, false, criterion_checkpoint);
  if (enabled(10)) {
    rows.push_back({10, true, "NOTE",
                    "headline ImageNet top-1 figures (81.5 Small/7, 82.7 Medium/7, 83.2 "
                    "Large/7) need full ImageNet training and are out of desk-scale scope; "
                    "criteria 1-7 are the substituted acceptance evidence",
                    0.0});
  } else {
    rows.push_back({10, true, "SKIP", "not requested", 0.0});
  }

  std::sort(rows.begin(), rows.end(),
            [](const CriterionRow& a, const CriterionRow& b) { return a.id < b.id; });
  for (const auto& r : rows) {
    std::cout << "[" << std::setw(2) << r.id << "] " << std::left << std::setw(4) << r.outcome
              << std::right << "  " << r.detail;
    if (r.outcome != "SKIP" && r.outcome != "NOTE") {
      std::cout << "  [" << fmt(r.secs, 3) << "s]";
    }
    std::cout << "\n";
  }
  std::cout << (all_ok ? "acceptance: all required criteria passed"
                       : "acceptance: FAILURES above")
            << "\n";
  return all_ok ? 0 : 1;
}
