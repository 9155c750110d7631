#pragma once

// Deterministic random sampling on top of std::mt19937_64.
//
// The std::*_distribution adaptors are implementation-defined, so a run would
// not reproduce across standard libraries. Every sampler here consumes raw
// 64-bit draws through uniform01() only, which pins the exact stream for a
// given seed on any platform.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace vip::rng {

using Engine = std::mt19937_64;

// splitmix64 mix, used to derive independent substreams from one seed.
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return mix(mix(seed ^ mix(stream)) + index);
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n).
inline std::uint64_t uniform_below(Engine& g, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = g();
  } while (x >= limit);
  return x % n;
}

// Standard normal via Box-Muller (no cached second value; each call consumes
// exactly two draws).
inline double normal01(Engine& g) {
  const double u1 = 1.0 - uniform01(g);  // (0, 1]
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Normal(0, stddev) truncated to +/- 2 stddev by resampling.
inline double truncated_normal(Engine& g, double stddev) {
  for (;;) {
    const double x = normal01(g);
    if (x >= -2.0 && x <= 2.0) return x * stddev;
  }
}

namespace detail {

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double reg_inc_beta(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - ln_beta);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Quantile of Beta(a, b) by bisection on the regularized incomplete beta.
inline double beta_quantile(double u, double a, double b) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (detail::reg_inc_beta(mid, a, b) < u) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Beta(alpha, alpha) sample by inverse transform: one uniform draw, inverted
// through the CDF. Used for the mixing coefficients of the augmentations.
inline double beta_sample(Engine& g, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("beta_sample: alpha must be positive");
  const double u = uniform01(g);
  if (alpha == 1.0) return u;  // Beta(1,1) is uniform
  return beta_quantile(u, alpha, alpha);
}

// Fisher-Yates permutation of 0..n-1 using the unbiased bounded draw, so the
// result is identical on every platform (std::shuffle is not).
inline std::vector<std::int64_t> permutation(std::int64_t n, Engine& g) {
  std::vector<std::int64_t> p(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(uniform_below(g, static_cast<std::uint64_t>(i + 1)));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

}  // namespace vip::rng
