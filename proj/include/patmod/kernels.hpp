#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// where the build and CPU allow it, an AVX2/FMA version. The active variant is
// picked once at startup (PATMOD_SIMD=scalar|avx2|auto overrides detection)
// and can be switched explicitly for equivalence tests.

#include <cstddef>
#include <limits>
#include <string_view>

namespace patmod::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
Isa active_isa();
/// Throws ContractError when the requested ISA is not available.
void set_active_isa(Isa isa);

/// Row-major matrix view with an explicit row stride.
struct ConstMatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  double operator()(std::size_t i, std::size_t j) const { return data[i * stride + j]; }
};

struct MatrixView {
  double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  double& operator()(std::size_t i, std::size_t j) const { return data[i * stride + j]; }
};

enum class Transpose { no, yes };

/// c (+)= op(a) * op(b). Shapes are checked by the caller; a and b must not
/// alias c.
void gemm(Transpose ta, Transpose tb, ConstMatrixView a, ConstMatrixView b, MatrixView c,
          bool accumulate);

struct NearestHit {
  double dist2 = std::numeric_limits<double>::infinity();
  std::size_t index = 0;
};

/// Nearest of n points stored as separate coordinate arrays. Squared distance
/// is evaluated as dx*dx + dy*dy + dz*dz in that order by every variant, so
/// all variants return bitwise-identical results. Ties go to the lowest index.
NearestHit nearest_scan(const double* xs, const double* ys, const double* zs, std::size_t n,
                        double qx, double qy, double qz);

namespace scalar {
void gemm(Transpose ta, Transpose tb, ConstMatrixView a, ConstMatrixView b, MatrixView c,
          bool accumulate);
NearestHit nearest_scan(const double* xs, const double* ys, const double* zs, std::size_t n,
                        double qx, double qy, double qz);
}  // namespace scalar

namespace avx2 {
void gemm(Transpose ta, Transpose tb, ConstMatrixView a, ConstMatrixView b, MatrixView c,
          bool accumulate);
NearestHit nearest_scan(const double* xs, const double* ys, const double* zs, std::size_t n,
                        double qx, double qy, double qz);
}  // namespace avx2

}  // namespace patmod::kernels
