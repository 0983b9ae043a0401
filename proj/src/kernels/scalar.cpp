#include "patmod/kernels.hpp"

namespace patmod::kernels::scalar {

void gemm(Transpose ta, Transpose tb, ConstMatrixView a, ConstMatrixView b, MatrixView c,
          bool accumulate) {
  const std::size_t m = c.rows;
  const std::size_t n = c.cols;
  const std::size_t k = ta == Transpose::no ? a.cols : a.rows;
  auto a_at = [&](std::size_t i, std::size_t p) { return ta == Transpose::no ? a(i, p) : a(p, i); };
  auto b_at = [&](std::size_t p, std::size_t j) { return tb == Transpose::no ? b(p, j) : b(j, p); };

  for (std::size_t i = 0; i < m; ++i) {
    double* row = c.data + i * c.stride;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a_at(i, p);
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * b_at(p, j);
    }
  }
}

NearestHit nearest_scan(const double* xs, const double* ys, const double* zs, std::size_t n,
                        double qx, double qy, double qz) {
  NearestHit best;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best.dist2) {
      best.dist2 = d2;
      best.index = i;
    }
  }
  return best;
}

}  // namespace patmod::kernels::scalar
