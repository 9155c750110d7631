#pragma once

// Central-difference gradient checking. Runs reverse-mode once, then compares
// against (f(x + eps e_i) - f(x - eps e_i)) / 2eps per coordinate. Intended
// for the 64-bit instantiation; 32-bit finite differences are noise-dominated.

#include <cstdint>
#include <string>
#include <vector>

#include "vip/tensor.hpp"

namespace vip {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Check at most this many coordinates per tensor (-1 = all). Sampled
  // without replacement from `seed` so reports are reproducible.
  i64 max_checks = -1;
  std::uint64_t seed = 0x9d2c5680;
  // Test hook: corrupt the reverse-mode gradient of the named leaf before
  // comparison, to demonstrate that a wrong backward is caught and located.
  std::string fault_leaf;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  i64 worst_index = -1;
  double ad_at_worst = 0.0;
  double fd_at_worst = 0.0;
  i64 checked = 0;

  bool passed(double tol) const { return max_rel_err <= tol; }
};

namespace detail {

// Relative error with a small floor so that zero-gradient coordinates do not
// divide by zero.
inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

inline std::vector<i64> sample_indices(i64 n, i64 want, std::uint64_t seed) {
  std::vector<i64> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), i64(0));
  if (want < 0 || want >= n) return idx;
  rng::Engine g(seed);
  for (i64 i = 0; i < want; ++i) {
    const i64 j = i + static_cast<i64>(rng::uniform_below(g, static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(want));
  return idx;
}

}  // namespace detail

// f: scalar-valued function of one tensor, deterministic. The finite
// differences are evaluated with no tape active.
template <typename F>
GradCheckResult gradcheck(F&& f, Tensor<double> x, const GradCheckOptions& opts = {}) {
  x.set_requires_grad(true);
  x.drop_grad();
  {
    Tape<double> tape;
    typename Tape<double>::Scope scope(tape);
    Tensor<double> loss = f(x);
    backward(loss);
  }
  std::vector<double> g_ad(x.grad().begin(), x.grad().end());

  GradCheckResult res;
  auto data = x.raw_data();
  const auto indices = detail::sample_indices(x.numel(), opts.max_checks, opts.seed);
  for (i64 i : indices) {
    const double saved = data[static_cast<std::size_t>(i)];
    data[static_cast<std::size_t>(i)] = saved + opts.eps;
    const double fp = f(x).item();
    data[static_cast<std::size_t>(i)] = saved - opts.eps;
    const double fm = f(x).item();
    data[static_cast<std::size_t>(i)] = saved;
    const double fd = (fp - fm) / (2.0 * opts.eps);
    const double ad = g_ad[static_cast<std::size_t>(i)];
    const double e = detail::rel_err(ad, fd);
    ++res.checked;
    if (e > res.max_rel_err) {
      res.max_rel_err = e;
      res.worst_index = i;
      res.ad_at_worst = ad;
      res.fd_at_worst = fd;
    }
  }
  return res;
}

struct NamedLeaf {
  std::string name;
  Tensor<double> tensor;
};

struct LeafGradCheck {
  std::string name;
  GradCheckResult result;
};

// Whole-model variant: `loss_fn` recomputes a scalar loss from the current
// leaf values. One reverse sweep, then sampled central differences per leaf.
template <typename F>
std::vector<LeafGradCheck> gradcheck_leaves(F&& loss_fn, std::vector<NamedLeaf> leaves,
                                            const GradCheckOptions& opts = {}) {
  for (auto& l : leaves) {
    l.tensor.set_requires_grad(true);
    l.tensor.drop_grad();
  }
  {
    Tape<double> tape;
    typename Tape<double>::Scope scope(tape);
    Tensor<double> loss = loss_fn();
    backward(loss);
  }
  std::vector<LeafGradCheck> out;
  std::uint64_t salt = 0;
  for (auto& l : leaves) {
    std::vector<double> g_ad;
    if (l.tensor.has_grad()) {
      g_ad.assign(l.tensor.grad().begin(), l.tensor.grad().end());
    } else {
      g_ad.assign(static_cast<std::size_t>(l.tensor.numel()), 0.0);
    }
    GradCheckResult res;
    auto data = l.tensor.raw_data();
    const auto indices =
        detail::sample_indices(l.tensor.numel(), opts.max_checks, rng::mix(opts.seed + salt++));
    if (!opts.fault_leaf.empty() && l.name == opts.fault_leaf && !indices.empty()) {
      auto& v = g_ad[static_cast<std::size_t>(indices.front())];
      v = v * 1.5 + 0.1;  // guaranteed to land on a checked coordinate
    }
    for (i64 i : indices) {
      const double saved = data[static_cast<std::size_t>(i)];
      data[static_cast<std::size_t>(i)] = saved + opts.eps;
      const double fp = loss_fn().item();
      data[static_cast<std::size_t>(i)] = saved - opts.eps;
      const double fm = loss_fn().item();
      data[static_cast<std::size_t>(i)] = saved;
      const double fd = (fp - fm) / (2.0 * opts.eps);
      const double ad = g_ad[static_cast<std::size_t>(i)];
      const double e = detail::rel_err(ad, fd);
      ++res.checked;
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst_index = i;
        res.ad_at_worst = ad;
        res.fd_at_worst = fd;
      }
    }
    out.push_back({l.name, res});
  }
  return out;
}

}  // namespace vip
