// Compiled with -mavx2 -mfma. Only reached through avx2_table() after a
// runtime CPU check. Keep this TU free of STL containers so no AVX-encoded
// inline template instantiations leak into the rest of the program.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "rtd/core/kernels.hpp"

namespace rtd::kernels::avx2 {

namespace {

// R rows x 8 columns. Accumulators start at zero and take one FMA per k, so each
// lane computes exactly fma(a_ik, b_kj, acc) in ascending k, the same sequence
// the scalar tail below uses.
template <int R>
inline void tile_r8(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                    double* c, std::size_t ldc, bool accumulate) {
  __m256d acc[R][2];
  for (int r = 0; r < R; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* crow = c + r * ldc;
    if (accumulate) {
      acc[r][0] = _mm256_add_pd(acc[r][0], _mm256_loadu_pd(crow));
      acc[r][1] = _mm256_add_pd(acc[r][1], _mm256_loadu_pd(crow + 4));
    }
    _mm256_storeu_pd(crow, acc[r][0]);
    _mm256_storeu_pd(crow + 4, acc[r][1]);
  }
}

template <int R>
inline void tile_r4(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                    double* c, std::size_t ldc, bool accumulate) {
  __m256d acc[R];
  for (int r = 0; r < R; ++r) acc[r] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    for (int r = 0; r < R; ++r) {
      acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), b0, acc[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* crow = c + r * ldc;
    if (accumulate) acc[r] = _mm256_add_pd(acc[r], _mm256_loadu_pd(crow));
    _mm256_storeu_pd(crow, acc[r]);
  }
}

inline void tile_scalar(std::size_t rows, std::size_t cols, std::size_t k, const double* a, std::size_t lda,
                        const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[r * lda + p], b[p * ldb + j], acc);
      c[r * ldc + j] = accumulate ? c[r * ldc + j] + acc : acc;
    }
  }
}

template <int R>
void row_block(std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) tile_r8<R>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  for (; j + 4 <= n; j += 4) tile_r4<R>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  if (j < n) tile_scalar(R, n - j, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  // Column panels outermost so a K x 64 slice of B stays cache resident while
  // every row block of A streams past it.
  constexpr std::size_t kPanel = 64;
  for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
    const std::size_t nb = (n - j0 < kPanel) ? n - j0 : kPanel;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) row_block<4>(nb, k, a + i * lda, lda, b + j0, ldb, c + i * ldc + j0, ldc, accumulate);
    switch (m - i) {
      case 3: row_block<3>(nb, k, a + i * lda, lda, b + j0, ldb, c + i * ldc + j0, ldc, accumulate); break;
      case 2: row_block<2>(nb, k, a + i * lda, lda, b + j0, ldb, c + i * ldc + j0, ldc, accumulate); break;
      case 1: row_block<1>(nb, k, a + i * lda, lda, b + j0, ldb, c + i * ldc + j0, ldc, accumulate); break;
      default: break;
    }
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, double alpha, double* x) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::kAvx2, "avx2", gemm_nn, dot, axpy, add, mul, scale};
  return t;
}

}  // namespace rtd::kernels::avx2
