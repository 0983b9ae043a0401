#pragma once

#include <cstddef>
#include <vector>

#include "patmod/tape.hpp"

namespace patmod::num {

// Differentiable ops. Every op checks shapes and throws DimensionError naming
// the offending shapes. Binary elementwise ops accept identical shapes or a
// 1xd row broadcast over an nxd matrix (second operand only).

Var matmul(Var a, Var b);
/// x * w + bias, with bias a 1xn row (or length-n vector) broadcast over rows.
Var linear(Var x, Var w, Var bias);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var tanh(Var a);

/// Concatenation along any axis; all other dimensions must agree.
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Rows [begin, end) along axis 0.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, const std::vector<std::size_t>& rows);
/// 1xd -> nxd.
Var repeat_rows(Var row, std::size_t n);
Var reshape(Var a, Shape shape);

Var reduce_sum(Var a);
Var reduce_mean(Var a);
/// Rank-2 reductions along an axis: axis 0 -> 1xd, axis 1 -> nx1.
Var reduce_sum(Var a, std::size_t axis);
Var reduce_mean(Var a, std::size_t axis);

struct ArgReduction {
  Var values;
  std::vector<std::size_t> indices;
};

/// Minimum of each row of an nxd matrix -> length-n values and argmin columns.
/// Ties go to the lowest column; the gradient reaches only the argmin entries.
ArgReduction min_over_rows(Var a);
/// Maximum down each column of an nxd matrix -> 1xd (max pooling over rows).
ArgReduction max_pool_rows(Var a);

/// Euclidean norm of each row -> nx1. The gradient at a zero row is zero.
Var row_norms(Var a);
/// All pairwise Euclidean distances between rows: nxd, mxd -> nxm.
Var pairwise_distances(Var a, Var b);

/// Direct-loop cross-correlation. input CxHxW, kernel OxCxkxk, optional bias
/// of length O (pass an invalid Var to omit).
Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, std::size_t pad);

}  // namespace patmod::num
