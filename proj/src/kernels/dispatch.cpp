#include <atomic>
#include <cstdlib>
#include <string>

#include "patmod/error.hpp"
#include "patmod/kernels.hpp"

namespace patmod::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(PATMOD_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  const char* env = std::getenv("PATMOD_SIMD");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return Isa::scalar;
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw ContractError("kernel variant '" + std::string(isa_name(isa)) +
                        "' is not available on this CPU/build");
  }
  current().store(isa, std::memory_order_relaxed);
}

void gemm(Transpose ta, Transpose tb, ConstMatrixView a, ConstMatrixView b, MatrixView c,
          bool accumulate) {
#if defined(PATMOD_HAVE_AVX2)
  if (active_isa() == Isa::avx2) return avx2::gemm(ta, tb, a, b, c, accumulate);
#endif
  scalar::gemm(ta, tb, a, b, c, accumulate);
}

NearestHit nearest_scan(const double* xs, const double* ys, const double* zs, std::size_t n,
                        double qx, double qy, double qz) {
#if defined(PATMOD_HAVE_AVX2)
  if (active_isa() == Isa::avx2) return avx2::nearest_scan(xs, ys, zs, n, qx, qy, qz);
#endif
  return scalar::nearest_scan(xs, ys, zs, n, qx, qy, qz);
}

}  // namespace patmod::kernels
