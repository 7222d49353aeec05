#pragma once

// Dense double-precision kernels used by the LSTM, dense layers and word2vec.
//
// Every kernel has a portable scalar reference implementation. Vectorized
// variants (AVX2+FMA on x86-64, NEON on aarch64) are selected once at
// startup from CPUID; EHRSUM_SIMD=scalar|avx2|neon|auto overrides the choice.
// Variants differ from the reference only in summation order, so results agree
// to rounding but are not bit-identical across backends. Within one backend
// every kernel is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace ehrsum::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  // returns sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += W x, W row-major rows x cols
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols,
               const double* x, double* y);
  // x += W^T y
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols,
                 const double* y, double* x);
  // W += u v^T
  void (*ger)(double* w, std::size_t rows, std::size_t cols, const double* u,
              const double* v);
};

const KernelTable& scalar_table();
#if defined(EHRSUM_HAVE_AVX2_TU)
const KernelTable& avx2_table();
#endif
#if defined(EHRSUM_HAVE_NEON_TU)
const KernelTable& neon_table();
#endif

bool backend_supported(Backend b);
Backend active_backend();
// Throws std::invalid_argument when the backend is not supported here.
void set_backend(Backend b);
std::string_view backend_name(Backend b);
const KernelTable& table_for(Backend b);

// Thin wrappers over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y);
void gemv_t(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> y, std::span<double> x);
void ger(std::span<double> w, std::size_t rows, std::size_t cols,
         std::span<const double> u, std::span<const double> v);

}  // namespace ehrsum::kernels
