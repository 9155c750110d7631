#pragma once

// Low-level dense kernels. Two implementations of the matrix product are
// kept side by side:
//
//   gemm_serial  - naive triple loop, the reference the tests compare against
//   gemm         - ikj loop order with an OpenMP row partition
//
// Both accumulate into a pre-initialized C (zeros for a plain product, the
// broadcast bias row for a linear layer). For every output element the inner
// accumulation runs in increasing-k order in both kernels and under any
// thread count, so gemm is bit-reproducible regardless of how many workers
// run it. tools/kernel_bench.cpp compares the two.

#include <cstdint>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vip::kernels {

using i64 = std::int64_t;

inline int& thread_count_ref() {
  static int n = 0;  // 0 = not yet initialized
  return n;
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) { thread_count_ref() = n < 1 ? 1 : n; }

inline int threads() {
  int& n = thread_count_ref();
  if (n == 0) {
    if (const char* env = std::getenv("VIP_THREADS")) {
      const int v = std::atoi(env);
      n = v >= 1 ? v : hardware_threads();
    } else {
      n = hardware_threads();
    }
  }
  return n;
}

// C[m,n] += A[m,k] * B[k,n], plain ijk loops.
template <typename T>
void gemm_serial(const T* a, const T* b, T* c, i64 m, i64 k, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    for (i64 j = 0; j < n; ++j) {
      T sum = c[i * n + j];
      for (i64 p = 0; p < k; ++p) {
        sum += a[i * k + p] * b[p * n + j];
      }
      c[i * n + j] = sum;
    }
  }
}

template <typename T>
inline void gemm_rows(const T* a, const T* b, T* c, i64 i0, i64 i1, i64 k, i64 n) {
  for (i64 i = i0; i < i1; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (i64 p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (i64 j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// C[m,n] += A[m,k] * B[k,n]. Row blocks go to the worker pool; each element
// is produced by exactly one worker with a serial k loop.
template <typename T>
void gemm(const T* a, const T* b, T* c, i64 m, i64 k, i64 n) {
  const int nt = threads();
#ifdef _OPENMP
  if (nt > 1 && m * k * n >= (i64(1) << 16)) {
#pragma omp parallel for schedule(static) num_threads(nt)
    for (i64 i = 0; i < m; ++i) {
      gemm_rows(a, b, c, i, i + 1, k, n);
    }
    return;
  }
#endif
  (void)nt;
  gemm_rows(a, b, c, 0, m, k, n);
}

// At[n,m] = A[m,n]^T
template <typename T>
void transpose(const T* a, T* at, i64 m, i64 n) {
  constexpr i64 kBlock = 32;
  for (i64 i0 = 0; i0 < m; i0 += kBlock) {
    const i64 i1 = i0 + kBlock < m ? i0 + kBlock : m;
    for (i64 j0 = 0; j0 < n; j0 += kBlock) {
      const i64 j1 = j0 + kBlock < n ? j0 + kBlock : n;
      for (i64 i = i0; i < i1; ++i) {
        for (i64 j = j0; j < j1; ++j) {
          at[j * m + i] = a[i * n + j];
        }
      }
    }
  }
}

}  // namespace vip::kernels
