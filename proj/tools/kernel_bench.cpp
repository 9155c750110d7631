// Compares the serial reference gemm against the OpenMP kernel across sizes:
// throughput for both, speedup, and a bitwise agreement check (the parallel
// kernel must reproduce the serial k-order accumulation exactly).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <vector>

#include "vip/kernels.hpp"
#include "vip/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    fn();
    const auto t1 = clock_type::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  int threads = vip::kernels::threads();
  if (argc > 1) {
    threads = std::atoi(argv[1]);
    if (threads < 1) {
      std::fprintf(stderr, "usage: kernel_bench [threads]\n");
      return 1;
    }
    vip::kernels::set_threads(threads);
  }
  std::printf("gemm serial reference vs OpenMP kernel (%d thread%s)\n", threads,
              threads == 1 ? "" : "s");
  std::printf("%8s %12s %12s %9s %s\n", "size", "serial GF/s", "openmp GF/s", "speedup",
              "bitwise");

  vip::rng::Engine g(7);
  for (int n : {64, 128, 256, 512}) {
    const std::size_t nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    std::vector<float> a(nn), b(nn), c_serial(nn), c_mp(nn);
    for (auto& v : a) v = static_cast<float>(vip::rng::uniform01(g) - 0.5);
    for (auto& v : b) v = static_cast<float>(vip::rng::uniform01(g) - 0.5);

    const double flops = 2.0 * n * static_cast<double>(n) * n;
    const int reps = n <= 128 ? 20 : 5;
    const double t_serial = time_best_of(reps, [&] {
      std::memset(c_serial.data(), 0, nn * sizeof(float));
      vip::kernels::gemm_serial(a.data(), b.data(), c_serial.data(), n, n, n);
    });
    const double t_mp = time_best_of(reps, [&] {
      std::memset(c_mp.data(), 0, nn * sizeof(float));
      vip::kernels::gemm(a.data(), b.data(), c_mp.data(), n, n, n);
    });
    const bool same = std::memcmp(c_serial.data(), c_mp.data(), nn * sizeof(float)) == 0;
    std::printf("%8d %12.2f %12.2f %8.2fx %s\n", n, flops / t_serial / 1e9, flops / t_mp / 1e9,
                t_serial / t_mp, same ? "ok" : "MISMATCH");
    if (!same) return 2;
  }
  return 0;
}
