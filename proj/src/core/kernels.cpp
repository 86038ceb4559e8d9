#include "rtd/core/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "rtd/core/errors.hpp"

namespace rtd::kernels {

#ifdef RTD_HAVE_AVX2
namespace avx2 {
const KernelTable& table();
}
#endif

bool avx2_available() {
#if defined(RTD_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
#ifdef RTD_HAVE_AVX2
  if (avx2_available()) return &avx2::table();
#endif
  return nullptr;
}

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("RTD_KERNELS");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

void select(Isa isa) {
  if (isa == Isa::kScalar) {
    current() = &scalar_table();
    return;
  }
  const KernelTable* t = avx2_table();
  RTD_REQUIRE(t != nullptr, "AVX2 kernels are not available on this CPU/build");
  current() = t;
}

std::string_view active_name() { return active().name; }

ScopedIsa::ScopedIsa(Isa isa) : previous_(active().isa) { select(isa); }
ScopedIsa::~ScopedIsa() { select(previous_); }

namespace {

// dst[cols x rows] = src[rows x cols]^T, src with leading dimension ld.
void transpose_into(std::vector<double>& dst, const double* src, std::size_t rows, std::size_t cols, std::size_t ld) {
  dst.resize(rows * cols);
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * ld + j];
      }
    }
  }
}

}  // namespace

void gemm_strided(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    }
    return;
  }
  thread_local std::vector<double> scratch_a;
  thread_local std::vector<double> scratch_b;
  const double* ap = a;
  std::size_t la = lda;
  if (trans_a) {
    // stored [k x m]
    transpose_into(scratch_a, a, k, m, lda);
    ap = scratch_a.data();
    la = k;
  }
  const double* bp = b;
  std::size_t lb = ldb;
  if (trans_b) {
    // stored [n x k]
    transpose_into(scratch_b, b, n, k, ldb);
    bp = scratch_b.data();
    lb = n;
  }
  active().gemm_nn(m, n, k, ap, la, bp, lb, c, ldc, accumulate);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
  gemm_strided(trans_a, trans_b, m, n, k, a, trans_a ? m : k, b, trans_b ? k : n, c, n, accumulate);
}

}  // namespace rtd::kernels
