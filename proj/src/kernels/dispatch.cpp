#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "ehrsum/kernels.hpp"

namespace ehrsum::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(EHRSUM_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() {
  const char* env = std::getenv("EHRSUM_SIMD");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return Backend::kScalar;
  if (choice == "avx2" && backend_supported(Backend::kAvx2)) return Backend::kAvx2;
  if (choice == "neon" && backend_supported(Backend::kNeon)) return Backend::kNeon;
  if (backend_supported(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_supported(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

struct Active {
  std::atomic<Backend> backend;
  std::atomic<const KernelTable*> table;
  Active() : backend(detect()), table(&table_for(backend.load())) {}
};

Active& active() {
  static Active state;
  return state;
}

inline const KernelTable& current() {
  return *active().table.load(std::memory_order_relaxed);
}

}  // namespace

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return cpu_has_avx2();
    case Backend::kNeon:
#if defined(EHRSUM_HAVE_NEON_TU)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Backend b) {
  switch (b) {
#if defined(EHRSUM_HAVE_AVX2_TU)
    case Backend::kAvx2:
      if (cpu_has_avx2()) return avx2_table();
      break;
#endif
#if defined(EHRSUM_HAVE_NEON_TU)
    case Backend::kNeon:
      return neon_table();
#endif
    default:
      break;
  }
  if (b != Backend::kScalar) {
    throw std::invalid_argument("kernel backend not supported on this machine: " +
                                std::string(backend_name(b)));
  }
  return scalar_table();
}

Backend active_backend() { return active().backend.load(); }

void set_backend(Backend b) {
  const KernelTable& t = table_for(b);
  active().backend.store(b);
  active().table.store(&t);
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return current().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  current().axpy(alpha, x.data(), y.data(), x.size());
}

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y) {
  assert(w.size() == rows * cols && x.size() == cols && y.size() == rows);
  current().gemv(w.data(), rows, cols, x.data(), y.data());
}

void gemv_t(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> y, std::span<double> x) {
  assert(w.size() == rows * cols && x.size() == cols && y.size() == rows);
  current().gemv_t(w.data(), rows, cols, y.data(), x.data());
}

void ger(std::span<double> w, std::size_t rows, std::size_t cols,
         std::span<const double> u, std::span<const double> v) {
  assert(w.size() == rows * cols && u.size() == rows && v.size() == cols);
  current().ger(w.data(), rows, cols, u.data(), v.data());
}

}  // namespace ehrsum::kernels
