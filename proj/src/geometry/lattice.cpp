#include <algorithm>
#include <string>

#include "patmod/error.hpp"
#include "patmod/geometry.hpp"

namespace patmod::geom {
namespace {

double ratio(std::size_t a, std::size_t b, std::size_t c) {
  return static_cast<double>(std::max({a, b, c})) / static_cast<double>(std::min({a, b, c}));
}

std::vector<double> axis_values(std::size_t n, double extent) {
  std::vector<double> v(n, 0.0);
  if (n == 1) return v;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return v;
}

}  // namespace

std::array<std::size_t, 3> lattice_dims(std::size_t p, SamplingMode mode) {
  if (p == 0) throw DomainError("lattice needs at least one point");
  if (mode == SamplingMode::plane) {
    // Factor pair closest to square, larger side along x.
    std::array<std::size_t, 3> best{p, 1, 1};
    for (std::size_t b = 1; b * b <= p; ++b) {
      if (p % b == 0) best = {p / b, b, 1};
    }
    return best;
  }
  // Factor triple with the smallest max/min ratio; ties prefer larger nx, then larger ny.
  std::array<std::size_t, 3> best{p, 1, 1};
  double best_ratio = ratio(p, 1, 1);
  for (std::size_t a = p; a >= 1; --a) {
    if (p % a != 0) continue;
    const std::size_t rest = p / a;
    for (std::size_t b = rest; b >= 1; --b) {
      if (rest % b != 0) continue;
      const std::size_t c = rest / b;
      const double r = ratio(a, b, c);
      if (r < best_ratio) {
        best_ratio = r;
        best = {a, b, c};
      }
    }
  }
  return best;
}

num::Tensor grid_lattice(std::size_t p, double extent, SamplingMode mode) {
  const auto dims = lattice_dims(p, mode);
  const auto xs = axis_values(dims[0], extent);
  const auto ys = axis_values(dims[1], extent);
  const auto zs = axis_values(dims[2], extent);
  num::Tensor out({p, 3});
  std::size_t row = 0;
  for (double x : xs) {
    for (double y : ys) {
      for (double z : zs) {
        out[3 * row] = x;
        out[3 * row + 1] = y;
        out[3 * row + 2] = mode == SamplingMode::plane ? 0.0 : z;
        ++row;
      }
    }
  }
  return out;
}

}  // namespace patmod::geom
