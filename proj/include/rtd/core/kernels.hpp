#pragma once

// Dense float64 inner loops. Every kernel has a portable scalar reference and,
// when the CPU supports it, an AVX2+FMA variant. The active table is chosen
// once at startup (override with RTD_KERNELS=scalar|avx2) and may be switched
// explicitly for equivalence testing.

#include <cstddef>
#include <string_view>

namespace rtd::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  const char* name;
  // C[M,N] = A[M,K] * B[K,N] (accumulate=false) or C += A*B (accumulate=true).
  // Row-major with leading dimensions. Each C element is summed over k in
  // ascending order, independent of where it sits in the output tile.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out = x + y (out may alias either input)
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  // out = x * y elementwise
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // x *= alpha
  void (*scale)(std::size_t n, double alpha, double* x);
};

const KernelTable& scalar_table();
// nullptr when the AVX2 variant was not built or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();
bool avx2_available();

const KernelTable& active();
void select(Isa isa);
std::string_view active_name();

// RAII switch used by equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

// C[M,N] (+)= op(A) * op(B), where op(A) is A[M,K] or A^T with A stored [K,M],
// and op(B) is B[K,N] or B^T with B stored [N,K]. Contiguous row-major storage.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

// Strided variant for sub-blocks (attention heads): leading dimensions refer
// to the stored (untransposed) matrices.
void gemm_strided(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate);

}  // namespace rtd::kernels
