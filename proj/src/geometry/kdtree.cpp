#include <cmath>
#include <algorithm>
#include <numeric>

#include "patmod/error.hpp"
#include "patmod/neighbors.hpp"

namespace patmod::geom {

KdTree::KdTree(const num::Tensor& points, std::size_t leaf_size) : leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (points.rank() != 2 || points.cols() != 3) {
    throw DimensionError("KdTree: expected nx3 points, got " + num::shape_str(points.shape()));
  }
  const std::size_t n = points.rows();
  if (n == 0) throw DomainError("nearest neighbour search over an empty target set");
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * n / leaf_size_ + 2);
  build(0, static_cast<std::uint32_t>(n), points);
  xs_.resize(n);
  ys_.resize(n);
  zs_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs_[i] = points[3 * order_[i]];
    ys_[i] = points[3 * order_[i] + 1];
    zs_[i] = points[3 * order_[i] + 2];
  }
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end, const num::Tensor& points) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= leaf_size_) {
    // Ascending order inside a leaf keeps lowest-index tie breaking local.
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_[id].leaf = true;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Vec3 lo{points[3 * order_[begin]], points[3 * order_[begin] + 1], points[3 * order_[begin] + 2]};
  Vec3 hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points[3 * order_[i] + a]);
      hi[a] = std::max(hi[a], points[3 * order_[i] + a]);
    }
  }
  std::uint32_t axis = 0;
  for (std::uint32_t a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t x, std::size_t y) {
                     const double cx = points[3 * x + axis];
                     const double cy = points[3 * y + axis];
                     return cx < cy || (cx == cy && x < y);
                   });
  const double split = points[3 * order_[mid] + axis];
  const std::uint32_t left = build(begin, mid, points);
  const std::uint32_t right = build(mid, end, points);
  Node& node = nodes_[id];
  node.split = split;
  node.axis = axis;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(std::uint32_t id, const Vec3& q, kernels::NearestHit& best) const {
  const Node& node = nodes_[id];
  if (node.leaf) {
    const auto hit = kernels::nearest_scan(xs_.data() + node.begin, ys_.data() + node.begin,
                                           zs_.data() + node.begin, node.end - node.begin, q[0], q[1], q[2]);
    const std::size_t index = order_[node.begin + hit.index];
    if (hit.dist2 < best.dist2 || (hit.dist2 == best.dist2 && index < best.index)) {
      best.dist2 = hit.dist2;
      best.index = index;
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::uint32_t near = diff < 0.0 ? node.left : node.right;
  const std::uint32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, best);
  // <= keeps equal-distance candidates with lower indices reachable.
  if (diff * diff <= best.dist2) search(far, q, best);
}

kernels::NearestHit KdTree::nearest(const Vec3& query) const {
  kernels::NearestHit best;
  best.index = order_.size();
  search(0, query, best);
  return best;
}

NeighborResult nearest_neighbor(const num::Tensor& queries, const num::Tensor& targets) {
  if (queries.rank() != 2 || queries.cols() != 3) {
    throw DimensionError("nearest_neighbor: expected nx3 queries, got " + num::shape_str(queries.shape()));
  }
  const KdTree tree(targets);
  NeighborResult out;
  const std::size_t n = queries.rows();
  out.indices.resize(n);
  out.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hit = tree.nearest({queries[3 * i], queries[3 * i + 1], queries[3 * i + 2]});
    out.indices[i] = hit.index;
    out.distances[i] = std::sqrt(hit.dist2);
  }
  return out;
}

}  // namespace patmod::geom
