#include "patmod/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "patmod/error.hpp"

namespace patmod::num {
namespace {

using kernels::Transpose;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

void require_same_tape(const char* op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

enum class Broadcast { none, row };

// Second operand is either the same shape or a single row spread over all rows.
Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.rank() == 2) {
    const std::size_t d = a.cols();
    if ((b.rank() == 2 && b.rows() == 1 && b.cols() == d) || (b.rank() == 1 && b.dim(0) == d)) {
      return Broadcast::row;
    }
  }
  shape_mismatch(op, a.shape(), b.shape());
}

// Sums an nxd gradient down its rows into a row-shaped accumulator.
void accumulate_row_sums(const Tensor& g, Tensor& row) {
  const std::size_t n = g.rows();
  const std::size_t d = g.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av.shape(), bv.shape());
  Tensor out({av.rows(), bv.cols()});
  kernels::gemm(Transpose::no, Transpose::no, av.view(), bv.view(), out.view(), false);
  return a.tape().record(std::move(out), {a.id(), b.id()}, [](Tape& tape, std::uint32_t self) {
    const std::uint32_t ia = tape.input(self, 0);
    const std::uint32_t ib = tape.input(self, 1);
    const Tensor& g = tape.grad(self);
    if (tape.requires_grad(ia)) {
      kernels::gemm(Transpose::no, Transpose::yes, g.view(), tape.value(ib).view(),
                    tape.grad(ia).view(), true);
    }
    if (tape.requires_grad(ib)) {
      kernels::gemm(Transpose::yes, Transpose::no, tape.value(ia).view(), g.view(),
                    tape.grad(ib).view(), true);
    }
  });
}

Var linear(Var x, Var w, Var bias) {
  require_same_tape("linear", x, w);
  require_same_tape("linear", x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = bias.value();
  require_matrix("linear", xv);
  require_matrix("linear", wv);
  if (xv.cols() != wv.rows()) shape_mismatch("linear", xv.shape(), wv.shape());
  const std::size_t n = xv.rows();
  const std::size_t d = wv.cols();
  if (bv.size() != d) shape_mismatch("linear(bias)", wv.shape(), bv.shape());
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = bv[j];
  }
  kernels::gemm(Transpose::no, Transpose::no, xv.view(), wv.view(), out.view(), true);
  return x.tape().record(std::move(out), {x.id(), w.id(), bias.id()},
                         [](Tape& tape, std::uint32_t self) {
                           const std::uint32_t ix = tape.input(self, 0);
                           const std::uint32_t iw = tape.input(self, 1);
                           const std::uint32_t ib = tape.input(self, 2);
                           const Tensor& g = tape.grad(self);
                           if (tape.requires_grad(ix)) {
                             kernels::gemm(Transpose::no, Transpose::yes, g.view(),
                                           tape.value(iw).view(), tape.grad(ix).view(), true);
                           }
                           if (tape.requires_grad(iw)) {
                             kernels::gemm(Transpose::yes, Transpose::no, tape.value(ix).view(),
                                           g.view(), tape.grad(iw).view(), true);
                           }
                           if (tape.requires_grad(ib)) accumulate_row_sums(g, tape.grad(ib));
                         });
}

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind("add", av, bv);
  Tensor out = av;
  const std::size_t d = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[kind == Broadcast::none ? i : i % d];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [kind](Tape& tape, std::uint32_t self) {
    const std::uint32_t ia = tape.input(self, 0);
    const std::uint32_t ib = tape.input(self, 1);
    const Tensor& g = tape.grad(self);
    if (tape.requires_grad(ia)) {
      Tensor& ga = tape.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tape.requires_grad(ib)) {
      Tensor& gb = tape.grad(ib);
      if (kind == Broadcast::none) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      } else {
        accumulate_row_sums(g, gb);
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape("sub", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind("sub", av, bv);
  Tensor out = av;
  const std::size_t d = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[kind == Broadcast::none ? i : i % d];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [kind](Tape& tape, std::uint32_t self) {
    const std::uint32_t ia = tape.input(self, 0);
    const std::uint32_t ib = tape.input(self, 1);
    const Tensor& g = tape.grad(self);
    if (tape.requires_grad(ia)) {
      Tensor& ga = tape.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tape.requires_grad(ib)) {
      Tensor& gb = tape.grad(ib);
      if (kind == Broadcast::none) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      } else {
        Tensor sums(gb.shape(), 0.0);
        accumulate_row_sums(g, sums);
        for (std::size_t j = 0; j < gb.size(); ++j) gb[j] -= sums[j];
      }
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind("mul", av, bv);
  Tensor out = av;
  const std::size_t d = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[kind == Broadcast::none ? i : i % d];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [kind](Tape& tape, std::uint32_t self) {
    const std::uint32_t ia = tape.input(self, 0);
    const std::uint32_t ib = tape.input(self, 1);
    const Tensor& g = tape.grad(self);
    const Tensor& av = tape.value(ia);
    const Tensor& bv = tape.value(ib);
    const std::size_t d = bv.size();
    if (tape.requires_grad(ia)) {
      Tensor& ga = tape.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * bv[kind == Broadcast::none ? i : i % d];
      }
    }
    if (tape.requires_grad(ib)) {
      Tensor& gb = tape.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[kind == Broadcast::none ? i : i % d] += g[i] * av[i];
      }
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape().record(std::move(out), {a.id()}, [s](Tape& tape, std::uint32_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.tape().record(std::move(out), {a.id()}, [](Tape& tape, std::uint32_t self) {
    const std::uint32_t ia = tape.input(self, 0);
    const Tensor& g = tape.grad(self);
    const Tensor& x = tape.value(ia);
    Tensor& ga = tape.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) ga[i] += g[i];
    }
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  return a.tape().record(std::move(out), {a.id()}, [](Tape& tape, std::uint32_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DomainError("concat: no tensors given");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(first));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    require_same_tape("concat", parts.front(), p);
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_mismatch("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_mismatch("concat", first, s);
    }
    out_shape[axis] += s[axis];
    widths.push_back(s[axis] * inner);
    ids.push_back(p.id());
  }
  const std::size_t total_width = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t w = 0; w < widths[k]; ++w) {
        out[o * total_width + offset + w] = v[o * widths[k] + w];
      }
    }
    offset += widths[k];
  }
  return parts.front().tape().record(
      std::move(out), std::move(ids),
      [outer, total_width, widths](Tape& tape, std::uint32_t self) {
        const Tensor& g = tape.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          const std::uint32_t id = tape.input(self, k);
          if (tape.requires_grad(id)) {
            Tensor& gk = tape.grad(id);
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t w = 0; w < widths[k]; ++w) {
                gk[o * widths[k] + w] += g[o * total_width + offset + w];
              }
            }
          }
          offset += widths[k];
        }
      });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (av.rank() == 0 || begin > end || end > av.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(av.shape()));
  }
  const std::size_t row = av.dim(0) ? av.size() / av.dim(0) : 0;
  Shape shape = av.shape();
  shape[0] = end - begin;
  std::vector<double> data(av.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                           av.data().begin() + static_cast<std::ptrdiff_t>(end * row));
  return a.tape().record(Tensor(std::move(shape), std::move(data)), {a.id()},
                         [begin, row](Tape& tape, std::uint32_t self) {
                           const Tensor& g = tape.grad(self);
                           Tensor& ga = tape.grad(tape.input(self, 0));
                           for (std::size_t i = 0; i < g.size(); ++i) ga[begin * row + i] += g[i];
                         });
}

Var gather_rows(Var a, const std::vector<std::size_t>& rows) {
  const Tensor& av = a.value();
  if (av.rank() == 0) throw DimensionError("gather_rows: scalar input");
  const std::size_t n = av.dim(0);
  const std::size_t row = n ? av.size() / n : 0;
  Shape shape = av.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                           shape_str(av.shape()));
    }
    for (std::size_t j = 0; j < row; ++j) out[r * row + j] = av[rows[r] * row + j];
  }
  return a.tape().record(std::move(out), {a.id()}, [rows, row](Tape& tape, std::uint32_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < row; ++j) ga[rows[r] * row + j] += g[r * row + j];
    }
  });
}

Var repeat_rows(Var row, std::size_t n) {
  const Tensor& rv = row.value();
  if (rv.rank() != 2 || rv.rows() != 1) {
    throw DimensionError("repeat_rows: expected a 1xd row, got " + shape_str(rv.shape()));
  }
  const std::size_t d = rv.cols();
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = rv[j];
  }
  return row.tape().record(std::move(out), {row.id()}, [](Tape& tape, std::uint32_t self) {
    accumulate_row_sums(tape.grad(self), tape.grad(tape.input(self, 0)));
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a.id()}, [](Tape& tape, std::uint32_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var reduce_sum(Var a) {
  const Tensor& av = a.value();
  if (av.empty()) throw DomainError("reduce_sum: empty tensor");
  double total = 0.0;
  for (double v : av.data()) total += v;
  return a.tape().record(Tensor::scalar(total), {a.id()}, [](Tape& tape, std::uint32_t self) {
    const double g = tape.grad(self)[0];
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (double& v : ga.data()) v += g;
  });
}

Var reduce_mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DomainError("reduce_mean: empty tensor");
  return scale(reduce_sum(a), 1.0 / static_cast<double>(n));
}

Var reduce_sum(Var a, std::size_t axis) {
  const Tensor& av = a.value();
  require_matrix("reduce_sum", av);
  if (axis > 1) throw DimensionError("reduce_sum: axis out of range for " + shape_str(av.shape()));
  const std::size_t n = av.rows();
  const std::size_t d = av.cols();
  if ((axis == 0 ? n : d) == 0) throw DomainError("reduce_sum: empty reduction axis");
  Tensor out(axis == 0 ? Shape{1, d} : Shape{n, 1}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[axis == 0 ? j : i] += av[i * d + j];
  }
  return a.tape().record(std::move(out), {a.id()}, [axis, n, d](Tape& tape, std::uint32_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[axis == 0 ? j : i];
    }
  });
}

Var reduce_mean(Var a, std::size_t axis) {
  const Tensor& av = a.value();
  require_matrix("reduce_mean", av);
  if (axis > 1) throw DimensionError("reduce_mean: axis out of range for " + shape_str(av.shape()));
  const std::size_t count = axis == 0 ? av.rows() : av.cols();
  if (count == 0) throw DomainError("reduce_mean: empty reduction axis");
  return scale(reduce_sum(a, axis), 1.0 / static_cast<double>(count));
}

ArgReduction min_over_rows(Var a) {
  const Tensor& av = a.value();
  require_matrix("min_over_rows", av);
  const std::size_t n = av.rows();
  const std::size_t d = av.cols();
  if (d == 0) throw DomainError("min_over_rows: empty rows");
  Tensor out({n});
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = av[i * d];
    for (std::size_t j = 1; j < d; ++j) {
      if (av[i * d + j] < best) {
        best = av[i * d + j];
        idx[i] = j;
      }
    }
    out[i] = best;
  }
  Var values = a.tape().record(std::move(out), {a.id()}, [idx, d](Tape& tape, std::uint32_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * d + idx[i]] += g[i];
  });
  return {values, std::move(idx)};
}

ArgReduction max_pool_rows(Var a) {
  const Tensor& av = a.value();
  require_matrix("max_pool_rows", av);
  const std::size_t n = av.rows();
  const std::size_t d = av.cols();
  if (n == 0) throw DomainError("max_pool_rows: no rows to pool");
  Tensor out({1, d});
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t j = 0; j < d; ++j) out[j] = av[j];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (av[i * d + j] > out[j]) {
        out[j] = av[i * d + j];
        idx[j] = i;
      }
    }
  }
  Var values = a.tape().record(std::move(out), {a.id()}, [idx, d](Tape& tape, std::uint32_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& ga = tape.grad(tape.input(self, 0));
    for (std::size_t j = 0; j < d; ++j) ga[idx[j] * d + j] += g[j];
  });
  return {values, std::move(idx)};
}

Var row_norms(Var a) {
  const Tensor& av = a.value();
  require_matrix("row_norms", av);
  const std::size_t n = av.rows();
  const std::size_t d = av.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += av[i * d + j] * av[i * d + j];
    out[i] = std::sqrt(s);
  }
  return a.tape().record(std::move(out), {a.id()}, [n, d](Tape& tape, std::uint32_t self) {
    const std::uint32_t ia = tape.input(self, 0);
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    const Tensor& x = tape.value(ia);
    Tensor& ga = tape.grad(ia);
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] == 0.0) continue;
      const double f = g[i] / y[i];
      for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += f * x[i * d + j];
    }
  });
}

Var pairwise_distances(Var a, Var b) {
  require_same_tape("pairwise_distances", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("pairwise_distances", av);
  require_matrix("pairwise_distances", bv);
  if (av.cols() != bv.cols()) shape_mismatch("pairwise_distances", av.shape(), bv.shape());
  const std::size_t n = av.rows();
  const std::size_t m = bv.rows();
  const std::size_t d = av.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = bv[j * d + k] - av[i * d + k];
        s += diff * diff;
      }
      out[i * m + j] = std::sqrt(s);
    }
  }
  return a.tape().record(std::move(out), {a.id(), b.id()}, [n, m, d](Tape& tape, std::uint32_t self) {
    const std::uint32_t ia = tape.input(self, 0);
    const std::uint32_t ib = tape.input(self, 1);
    const Tensor& g = tape.grad(self);
    const Tensor& dist = tape.value(self);
    const Tensor& av = tape.value(ia);
    const Tensor& bv = tape.value(ib);
    Tensor* ga = tape.requires_grad(ia) ? &tape.grad(ia) : nullptr;
    Tensor* gb = tape.requires_grad(ib) ? &tape.grad(ib) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double r = dist[i * m + j];
        if (r == 0.0 || g[i * m + j] == 0.0) continue;
        const double f = g[i * m + j] / r;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = av[i * d + k] - bv[j * d + k];
          if (ga) (*ga)[i * d + k] += f * diff;
          if (gb) (*gb)[j * d + k] -= f * diff;
        }
      }
    }
  });
}

}  // namespace patmod::num
