#include <algorithm>
#include <cmath>

#include "patmod/error.hpp"
#include "patmod/geometry.hpp"

namespace patmod::geom {

PointCloud::PointCloud(num::Tensor points) : data_(std::move(points)) {
  if (data_.rank() != 2 || data_.dim(1) != 3) {
    throw DimensionError("point cloud needs an nx3 tensor, got " + num::shape_str(data_.shape()));
  }
}

PointCloud::PointCloud(const std::vector<Vec3>& points) : data_(num::Shape{points.size(), 3}) {
  for (std::size_t i = 0; i < points.size(); ++i) set(i, points[i]);
}

void PointCloud::set(std::size_t i, const Vec3& p) {
  data_[3 * i] = p[0];
  data_[3 * i + 1] = p[1];
  data_[3 * i + 2] = p[2];
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& indices) const {
  PointCloud out(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) out.set(r, (*this)[indices[r]]);
  return out;
}

double Box::max_side() const { return std::max({side(0), side(1), side(2)}); }

bool Box::contains(const Vec3& p) const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (p[a] < lo[a] || p[a] > hi[a]) return false;
  }
  return true;
}

Box bounding_box(const PointCloud& cloud, double epsilon) {
  if (cloud.empty()) throw DomainError("bounding_box: empty point cloud");
  Box box{cloud[0], cloud[0]};
  for (std::size_t i = 1; i < cloud.size(); ++i) {
    const Vec3 p = cloud[i];
    for (std::size_t a = 0; a < 3; ++a) {
      box.lo[a] = std::min(box.lo[a], p[a]);
      box.hi[a] = std::max(box.hi[a], p[a]);
    }
  }
  for (std::size_t a = 0; a < 3; ++a) box.hi[a] += epsilon;
  return box;
}

double relative_box_epsilon(const Box& raw) {
  const double side = raw.max_side();
  return side > 0.0 ? 1e-6 * side : 1e-6;
}

Box reference_box(const PointCloud& cloud) {
  const Box raw = bounding_box(cloud, 0.0);
  return bounding_box(cloud, relative_box_epsilon(raw));
}

Box union_box(const PointCloud& a, const PointCloud& b) {
  Box box = bounding_box(a, 0.0);
  const Box other = bounding_box(b, 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    box.lo[k] = std::min(box.lo[k], other.lo[k]);
    box.hi[k] = std::max(box.hi[k], other.hi[k]);
  }
  const double eps = relative_box_epsilon(box);
  for (std::size_t k = 0; k < 3; ++k) box.hi[k] += eps;
  return box;
}

}  // namespace patmod::geom
