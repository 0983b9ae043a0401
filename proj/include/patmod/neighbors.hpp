#pragma once

#include <cstddef>
#include <vector>

#include "patmod/geometry.hpp"
#include "patmod/kernels.hpp"
#include "patmod/tape.hpp"

namespace patmod::geom {

/// Exact Euclidean nearest-neighbour index over a fixed point set. Immutable
/// after construction. Ties resolve to the lowest target index, matching a
/// brute-force scan bit for bit.
class KdTree {
 public:
  /// points: nx3, n >= 1 (DomainError otherwise).
  explicit KdTree(const num::Tensor& points, std::size_t leaf_size = 16);

  kernels::NearestHit nearest(const Vec3& query) const;
  std::size_t size() const { return order_.size(); }

 private:
  struct Node {
    double split = 0.0;
    std::uint32_t axis = 0;
    std::uint32_t left = 0, right = 0;
    std::uint32_t begin = 0, end = 0;
    bool leaf = false;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end, const num::Tensor& points);
  void search(std::uint32_t node, const Vec3& q, kernels::NearestHit& best) const;

  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<double> xs_, ys_, zs_;
  std::vector<Node> nodes_;
};

struct NeighborResult {
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

/// Nearest target of every query row. targets must be nonempty.
NeighborResult nearest_neighbor(const num::Tensor& queries, const num::Tensor& targets);

/// Raw-sum Chamfer distance: sum over b of min_a |a-b| plus sum over a of
/// min_b |a-b| (unsquared norms). Differentiable through both inputs via the
/// nearest pairing; a coincident pair contributes a zero gradient.
num::Var chamfer(num::Var a, num::Var b);

/// Raw-sum Chamfer of two clouds (training form).
double chamfer_sum(const PointCloud& a, const PointCloud& b);
/// Reporting form: ((1/|A|) sum_a min + (1/|B|) sum_b min) / 2.
double chamfer_eval(const PointCloud& a, const PointCloud& b);

}  // namespace patmod::geom
