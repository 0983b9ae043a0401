#include <immintrin.h>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "patmod/kernels.hpp"

namespace patmod::kernels::avx2 {
namespace {

// Copies op(src) into a dense row-major buffer.
ConstMatrixView materialize(Transpose t, ConstMatrixView src, std::vector<double>& buffer) {
  if (t == Transpose::no) return src;
  const std::size_t rows = src.cols;
  const std::size_t cols = src.rows;
  buffer.resize(rows * cols);
  constexpr std::size_t kBlock = 16;
  for (std::size_t i0 = 0; i0 < src.rows; i0 += kBlock) {
    const std::size_t i1 = std::min(src.rows, i0 + kBlock);
    for (std::size_t j0 = 0; j0 < src.cols; j0 += kBlock) {
      const std::size_t j1 = std::min(src.cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        const double* in = src.data + i * src.stride;
        for (std::size_t j = j0; j < j1; ++j) buffer[j * cols + i] = in[j];
      }
    }
  }
  return {buffer.data(), rows, cols, cols};
}

inline void tile_4x8(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                     double* c, std::size_t ldc, std::size_t k, bool accumulate) {
  __m256d c00, c01, c10, c11, c20, c21, c30, c31;
  if (accumulate) {
    c00 = _mm256_loadu_pd(c);
    c01 = _mm256_loadu_pd(c + 4);
    c10 = _mm256_loadu_pd(c + ldc);
    c11 = _mm256_loadu_pd(c + ldc + 4);
    c20 = _mm256_loadu_pd(c + 2 * ldc);
    c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
    c30 = _mm256_loadu_pd(c + 3 * ldc);
    c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_pd();
  }
  const double* a0 = a;
  const double* a1 = a + lda;
  const double* a2 = a + 2 * lda;
  const double* a3 = a + 3 * lda;
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d av = _mm256_broadcast_sd(a0 + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a1 + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a2 + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a3 + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

inline void tile_1x8(const double* a, const double* b, std::size_t ldb, double* c, std::size_t k,
                     bool accumulate) {
  __m256d c0 = accumulate ? _mm256_loadu_pd(c) : _mm256_setzero_pd();
  __m256d c1 = accumulate ? _mm256_loadu_pd(c + 4) : _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

inline void tile_1x4(const double* a, const double* b, std::size_t ldb, double* c, std::size_t k,
                     bool accumulate) {
  __m256d c0 = accumulate ? _mm256_loadu_pd(c) : _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb), c0);
  }
  _mm256_storeu_pd(c, c0);
}

inline void tile_6x8(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                     std::size_t ldc, std::size_t k, bool accumulate) {
  __m256d acc[6][2];
  for (std::size_t r = 0; r < 6; ++r) {
    acc[r][0] = accumulate ? _mm256_loadu_pd(c + r * ldc) : _mm256_setzero_pd();
    acc[r][1] = accumulate ? _mm256_loadu_pd(c + r * ldc + 4) : _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    for (std::size_t r = 0; r < 6; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (std::size_t r = 0; r < 6; ++r) {
    _mm256_storeu_pd(c + r * ldc, acc[r][0]);
    _mm256_storeu_pd(c + r * ldc + 4, acc[r][1]);
  }
}

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  // Full 8-column panels of B are copied into contiguous k x 8 blocks when
  // enough rows reuse them; row blocks keep a slice of A in L2. Every output
  // element sees the same FMA chain whichever path computes it.
  constexpr std::size_t kRowBlock = 96;
  const std::size_t m = c.rows;
  const std::size_t n = c.cols;
  const std::size_t k = a.cols;
  const std::size_t panels = n / 8;
  const bool pack = m >= 16 && panels > 0;
  thread_local std::vector<double> packed;
  if (pack) {
    packed.resize(panels * k * 8);
    for (std::size_t jp = 0; jp < panels; ++jp) {
      double* dst = packed.data() + jp * k * 8;
      for (std::size_t p = 0; p < k; ++p) {
        const double* src = b.data + p * b.stride + jp * 8;
        for (std::size_t q = 0; q < 8; ++q) dst[p * 8 + q] = src[q];
      }
    }
  }
  // Splitting k only stores and reloads the running sums, which is exact.
  constexpr std::size_t kDepthBlock = 256;
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    std::size_t j = 0;
    for (std::size_t p0 = 0; p0 < k || p0 == 0; p0 += kDepthBlock) {
      const std::size_t kb = std::min(k - p0, kDepthBlock);
      const bool acc = accumulate || p0 > 0;
      const double* ab = a.data + p0;
      for (j = 0; j + 8 <= n; j += 8) {
        const double* bp = pack ? packed.data() + (j / 8) * k * 8 + p0 * 8 : b.data + p0 * b.stride + j;
        const std::size_t ldb = pack ? 8 : b.stride;
        std::size_t i = i0;
        for (; i + 6 <= i1; i += 6) {
          tile_6x8(ab + i * a.stride, a.stride, bp, ldb, c.data + i * c.stride + j, c.stride, kb, acc);
        }
        for (; i + 4 <= i1; i += 4) {
          tile_4x8(ab + i * a.stride, a.stride, bp, ldb, c.data + i * c.stride + j, c.stride, kb, acc);
        }
        for (; i < i1; ++i) {
          tile_1x8(ab + i * a.stride, bp, ldb, c.data + i * c.stride + j, kb, acc);
        }
      }
      if (k == 0) break;
    }
    for (; j + 4 <= n; j += 4) {
      for (std::size_t i = i0; i < i1; ++i) {
        tile_1x4(a.data + i * a.stride, b.data + j, b.stride, c.data + i * c.stride + j, k,
                 accumulate);
      }
    }
    for (; j < n; ++j) {
      for (std::size_t i = i0; i < i1; ++i) {
        const double* ai = a.data + i * a.stride;
        double sum = accumulate ? c(i, j) : 0.0;
        for (std::size_t p = 0; p < k; ++p) sum += ai[p] * b(p, j);
        c(i, j) = sum;
      }
    }
  }
}

// c(i, j) = dot(a row i, b row j); used when transposing b would cost more
// than the product itself.
void gemm_nt_dot(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  const std::size_t k = a.cols;
  for (std::size_t i = 0; i < c.rows; ++i) {
    const double* ai = a.data + i * a.stride;
    for (std::size_t j = 0; j < c.cols; ++j) {
      const double* bj = b.data + j * b.stride;
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p), _mm256_loadu_pd(bj + p), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p + 4), _mm256_loadu_pd(bj + p + 4), acc1);
      }
      alignas(32) double lanes[4];
      _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
      double sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
      for (; p < k; ++p) sum += ai[p] * bj[p];
      c(i, j) = accumulate ? c(i, j) + sum : sum;
    }
  }
}

}  // namespace

void gemm(Transpose ta, Transpose tb, ConstMatrixView a, ConstMatrixView b, MatrixView c,
          bool accumulate) {
  if (ta == Transpose::no && tb == Transpose::yes && c.rows < 8) {
    gemm_nt_dot(a, b, c, accumulate);
    return;
  }
  thread_local std::vector<double> pack_a;
  thread_local std::vector<double> pack_b;
  const ConstMatrixView da = materialize(ta, a, pack_a);
  const ConstMatrixView db = materialize(tb, b, pack_b);
  gemm_nn(da, db, c, accumulate);
}

NearestHit nearest_scan(const double* xs, const double* ys, const double* zs, std::size_t n,
                        double qx, double qy, double qz) {
  NearestHit best;
  std::size_t i = 0;
  if (n >= 4) {
    const __m256d vqx = _mm256_set1_pd(qx);
    const __m256d vqy = _mm256_set1_pd(qy);
    const __m256d vqz = _mm256_set1_pd(qz);
    __m256d vbest = _mm256_set1_pd(best.dist2);
    __m256i vbest_idx = _mm256_setzero_si256();
    __m256i vidx = _mm256_set_epi64x(3, 2, 1, 0);
    const __m256i four = _mm256_set1_epi64x(4);
    for (; i + 4 <= n; i += 4) {
      const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vqx);
      const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vqy);
      const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vqz);
      __m256d d2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
      d2 = _mm256_add_pd(d2, _mm256_mul_pd(dz, dz));
      const __m256d closer = _mm256_cmp_pd(d2, vbest, _CMP_LT_OQ);
      vbest = _mm256_blendv_pd(vbest, d2, closer);
      vbest_idx = _mm256_castpd_si256(_mm256_blendv_pd(_mm256_castsi256_pd(vbest_idx),
                                                       _mm256_castsi256_pd(vidx), closer));
      vidx = _mm256_add_epi64(vidx, four);
    }
    alignas(32) double lane_d2[4];
    alignas(32) std::int64_t lane_idx[4];
    _mm256_store_pd(lane_d2, vbest);
    _mm256_store_si256(reinterpret_cast<__m256i*>(lane_idx), vbest_idx);
    for (int lane = 0; lane < 4; ++lane) {
      const auto idx = static_cast<std::size_t>(lane_idx[lane]);
      if (lane_d2[lane] < best.dist2 || (lane_d2[lane] == best.dist2 && idx < best.index)) {
        best.dist2 = lane_d2[lane];
        best.index = idx;
      }
    }
  }
  for (; i < n; ++i) {
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

}  // namespace patmod::kernels::avx2
