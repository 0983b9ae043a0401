#include <string>
#include <vector>

#include "patmod/kernels.hpp"
#include "patmod/error.hpp"
#include "patmod/ops.hpp"

namespace patmod::num {
namespace {

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t out_channels, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;
};

// Unfolds the input into a (C*kh*kw) x (out_h*out_w) matrix; taps that fall
// in the padding read zero.
std::vector<double> im2col(const ConvGeometry& g, const double* src) {
  const std::size_t plane = g.out_h * g.out_w;
  std::vector<double> col(g.channels * g.kh * g.kw * plane, 0.0);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col.data() + ((c * g.kh + ky) * g.kw + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            row[oy * g.out_w + ox] =
                src[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters column entries back onto the input gradient.
void col2im(const ConvGeometry& g, const std::vector<double>& col, double* dst) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col.data() + ((c * g.kh + ky) * g.kw + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dst[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] +=
                row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

kernels::ConstMatrixView as_matrix(const double* p, std::size_t rows, std::size_t cols) {
  return {p, rows, cols, cols};
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, std::size_t pad) {
  const Tensor& in = input.value();
  const Tensor& k = kernel.value();
  if (in.rank() != 3 || k.rank() != 4) {
    throw DimensionError("conv2d: expected CxHxW input and OxCxkxk kernel, got " +
                         shape_str(in.shape()) + " and " + shape_str(k.shape()));
  }
  if (stride == 0) throw ContractError("conv2d: stride must be >= 1");
  if (k.dim(1) != in.dim(0)) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " does not match input " +
                         shape_str(in.shape()));
  }
  ConvGeometry g{in.dim(0), in.dim(1), in.dim(2), k.dim(0), k.dim(2), k.dim(3), stride, pad, 0, 0};
  if (g.kh > g.height + 2 * pad || g.kw > g.width + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
                         shape_str(in.shape()) + " (pad " + std::to_string(pad) + ")");
  }
  g.out_h = (g.height + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kw) / stride + 1;

  std::vector<std::uint32_t> inputs{input.id(), kernel.id()};
  Tensor out({g.out_channels, g.out_h, g.out_w}, 0.0);
  if (bias.valid()) {
    const Tensor& b = bias.value();
    if (b.size() != g.out_channels) {
      throw DimensionError("conv2d: bias " + shape_str(b.shape()) + " does not match kernel " +
                           shape_str(k.shape()));
    }
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t p = 0; p < plane; ++p) out[o * plane + p] = b[o];
    }
    inputs.push_back(bias.id());
  }
  const std::size_t taps = g.channels * g.kh * g.kw;
  const std::size_t plane = g.out_h * g.out_w;
  const std::vector<double> col = im2col(g, in.data().data());
  kernels::gemm(kernels::Transpose::no, kernels::Transpose::no, as_matrix(k.data().data(), g.out_channels, taps),
                as_matrix(col.data(), taps, plane), {out.data().data(), g.out_channels, plane, plane}, true);

  const bool has_bias = bias.valid();
  return input.tape().record(std::move(out), std::move(inputs),
                             [g, has_bias, taps, plane](Tape& tape, std::uint32_t self) {
                               const std::uint32_t ii = tape.input(self, 0);
                               const std::uint32_t ik = tape.input(self, 1);
                               const auto go = as_matrix(tape.grad(self).data().data(), g.out_channels, plane);
                               if (tape.requires_grad(ii)) {
                                 std::vector<double> dcol(taps * plane, 0.0);
                                 kernels::gemm(kernels::Transpose::yes, kernels::Transpose::no,
                                               as_matrix(tape.value(ik).data().data(), g.out_channels, taps), go,
                                               {dcol.data(), taps, plane, plane}, false);
                                 col2im(g, dcol, tape.grad(ii).data().data());
                               }
                               if (tape.requires_grad(ik)) {
                                 const std::vector<double> col = im2col(g, tape.value(ii).data().data());
                                 kernels::gemm(kernels::Transpose::no, kernels::Transpose::yes, go,
                                               as_matrix(col.data(), taps, plane),
                                               {tape.grad(ik).data().data(), g.out_channels, taps, taps}, true);
                               }
                               if (has_bias && tape.requires_grad(tape.input(self, 2))) {
                                 Tensor& gb = tape.grad(tape.input(self, 2));
                                 for (std::size_t o = 0; o < g.out_channels; ++o) {
                                   for (std::size_t p = 0; p < plane; ++p) gb[o] += go(o, p);
                                 }
                               }
                             });
}

}  // namespace patmod::num
