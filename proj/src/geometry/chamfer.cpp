#include <cmath>

#include "patmod/error.hpp"
#include "patmod/neighbors.hpp"

namespace patmod::geom {
namespace {

struct DirectedPass {
  std::vector<std::size_t> nearest;
  std::vector<double> distance;
  double sum = 0.0;
};

// For every row of `from`, its nearest row in `to`.
DirectedPass directed(const num::Tensor& from, const num::Tensor& to) {
  const KdTree tree(to);
  DirectedPass pass;
  const std::size_t n = from.rows();
  pass.nearest.resize(n);
  pass.distance.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hit = tree.nearest({from[3 * i], from[3 * i + 1], from[3 * i + 2]});
    pass.nearest[i] = hit.index;
    pass.distance[i] = std::sqrt(hit.dist2);
    pass.sum += pass.distance[i];
  }
  return pass;
}

void check_cloud(const num::Tensor& t, const char* side) {
  if (t.rank() != 2 || t.cols() != 3) {
    throw DimensionError(std::string("chamfer: ") + side + " must be nx3, got " + num::shape_str(t.shape()));
  }
  if (t.rows() == 0) throw DomainError(std::string("chamfer: ") + side + " point set is empty");
}

// Adds sign * g * (p_from - p_to) / |p_from - p_to| to the `from` rows and the
// negation to the matched `to` rows.
void push_pair_gradients(const DirectedPass& pass, const num::Tensor& from, const num::Tensor& to, double g,
                         num::Tensor* grad_from, num::Tensor* grad_to) {
  for (std::size_t i = 0; i < pass.nearest.size(); ++i) {
    const double d = pass.distance[i];
    if (d == 0.0) continue;
    const std::size_t j = pass.nearest[i];
    const double f = g / d;
    for (std::size_t a = 0; a < 3; ++a) {
      const double diff = from[3 * i + a] - to[3 * j + a];
      if (grad_from) (*grad_from)[3 * i + a] += f * diff;
      if (grad_to) (*grad_to)[3 * j + a] -= f * diff;
    }
  }
}

}  // namespace

num::Var chamfer(num::Var a, num::Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("chamfer: operands on different tapes");
  const num::Tensor& av = a.value();
  const num::Tensor& bv = b.value();
  check_cloud(av, "first");
  check_cloud(bv, "second");
  DirectedPass b_to_a = directed(bv, av);
  DirectedPass a_to_b = directed(av, bv);
  const double value = b_to_a.sum + a_to_b.sum;
  return a.tape().record(
      num::Tensor::scalar(value), {a.id(), b.id()},
      [b_to_a = std::move(b_to_a), a_to_b = std::move(a_to_b)](num::Tape& tape, std::uint32_t self) {
        const std::uint32_t ia = tape.input(self, 0);
        const std::uint32_t ib = tape.input(self, 1);
        const double g = tape.grad(self)[0];
        num::Tensor* ga = tape.requires_grad(ia) ? &tape.grad(ia) : nullptr;
        num::Tensor* gb = tape.requires_grad(ib) ? &tape.grad(ib) : nullptr;
        push_pair_gradients(a_to_b, tape.value(ia), tape.value(ib), g, ga, gb);
        push_pair_gradients(b_to_a, tape.value(ib), tape.value(ia), g, gb, ga);
      });
}

double chamfer_sum(const PointCloud& a, const PointCloud& b) {
  check_cloud(a.tensor(), "first");
  check_cloud(b.tensor(), "second");
  return directed(b.tensor(), a.tensor()).sum + directed(a.tensor(), b.tensor()).sum;
}

double chamfer_eval(const PointCloud& a, const PointCloud& b) {
  check_cloud(a.tensor(), "first");
  check_cloud(b.tensor(), "second");
  const double mean_a = directed(a.tensor(), b.tensor()).sum / static_cast<double>(a.size());
  const double mean_b = directed(b.tensor(), a.tensor()).sum / static_cast<double>(b.size());
  return 0.5 * (mean_a + mean_b);
}

}  // namespace patmod::geom
