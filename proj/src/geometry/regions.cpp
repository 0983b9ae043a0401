#include <cmath>
#include <string>

#include "patmod/error.hpp"
#include "patmod/geometry.hpp"
#include "patmod/log.hpp"

namespace patmod::geom {

std::size_t cube_root(std::size_t m) {
  if (m == 0) throw DomainError("region count must be positive");
  std::size_t r = static_cast<std::size_t>(std::llround(std::cbrt(static_cast<double>(m))));
  for (std::size_t c : {r - 1, r, r + 1}) {
    if (c > 0 && c * c * c == m) return c;
  }
  throw DomainError("region count " + std::to_string(m) + " is not a perfect cube");
}

VoxelIndex voxel_of(const Vec3& p, const Box& box, std::size_t per_edge) {
  std::array<std::size_t, 3> idx{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double side = box.side(a);
    double t = side > 0.0 ? (p[a] - box.lo[a]) / side : 0.0;
    const double cell = std::floor(t * static_cast<double>(per_edge));
    if (!(cell > 0.0)) {
      idx[a] = 0;
    } else if (cell >= static_cast<double>(per_edge - 1)) {
      idx[a] = per_edge - 1;
    } else {
      idx[a] = static_cast<std::size_t>(cell);
    }
  }
  return {idx[0], idx[1], idx[2]};
}

std::size_t linear_index(const VoxelIndex& v, std::size_t per_edge) {
  return (v.i * per_edge + v.j) * per_edge + v.k;
}

RegionSet split_regions(const PointCloud& source, const PointCloud& reference, std::size_t m,
                        std::size_t capacity) {
  return split_regions(source, reference_box(reference), m, capacity);
}

RegionSet split_regions(const PointCloud& source, const Box& box, std::size_t m, std::size_t capacity) {
  const std::size_t per_edge = cube_root(m);
  RegionSet set;
  set.capacity = capacity;
  set.per_edge = per_edge;
  set.box = box;
  set.regions.resize(m);
  for (std::size_t i = 0; i < per_edge; ++i) {
    for (std::size_t j = 0; j < per_edge; ++j) {
      for (std::size_t k = 0; k < per_edge; ++k) {
        Region& r = set.regions[(i * per_edge + j) * per_edge + k];
        r.voxel = {i, j, k};
        r.padded_points = num::Tensor({capacity, 3}, 0.0);
        r.mask.assign(capacity, 0);
      }
    }
  }
  for (std::size_t p = 0; p < source.size(); ++p) {
    Region& r = set.regions[linear_index(voxel_of(source[p], box, per_edge), per_edge)];
    if (r.source_rows.size() >= capacity) {
      ++set.truncated;
      continue;
    }
    const std::size_t row = r.source_rows.size();
    const Vec3 pt = source[p];
    for (std::size_t a = 0; a < 3; ++a) r.padded_points[3 * row + a] = pt[a];
    r.mask[row] = 1;
    r.source_rows.push_back(p);
  }
  for (Region& r : set.regions) {
    if (r.empty()) continue;
    Vec3 sum{0, 0, 0};
    for (std::size_t row = 0; row < r.real_count(); ++row) {
      for (std::size_t a = 0; a < 3; ++a) sum[a] += r.padded_points[3 * row + a];
    }
    for (std::size_t a = 0; a < 3; ++a) r.center[a] = sum[a] / static_cast<double>(r.real_count());
  }
  if (set.truncated > 0) {
    log::warn("region capacity " + std::to_string(capacity) + " exceeded; dropped " +
              std::to_string(set.truncated) + " points (lowest indices kept)");
  }
  return set;
}

std::vector<PointCloud> partition(const PointCloud& cloud, const Box& box, std::size_t m) {
  const std::size_t per_edge = cube_root(m);
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    members[linear_index(voxel_of(cloud[p], box, per_edge), per_edge)].push_back(p);
  }
  std::vector<PointCloud> out;
  out.reserve(m);
  for (const auto& idx : members) out.push_back(cloud.subset(idx));
  return out;
}

Region center_region(const Region& region) {
  Region out = region;
  if (region.empty()) {
    out.center = {0, 0, 0};
    return out;
  }
  for (std::size_t row = 0; row < region.real_count(); ++row) {
    for (std::size_t a = 0; a < 3; ++a) out.padded_points[3 * row + a] -= region.center[a];
  }
  return out;
}

num::Tensor decenter(const num::Tensor& points, const Vec3& center) {
  if (points.rank() != 2 || points.cols() != 3) {
    throw DimensionError("decenter: expected nx3 points, got " + num::shape_str(points.shape()));
  }
  num::Tensor out = points;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) out[3 * i + a] += center[a];
  }
  return out;
}

}  // namespace patmod::geom
