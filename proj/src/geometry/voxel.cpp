#include <string>

#include "patmod/error.hpp"
#include "patmod/geometry.hpp"

namespace patmod::geom {

std::size_t VoxelGrid::occupied() const {
  std::size_t n = 0;
  for (auto v : occupancy) n += v;
  return n;
}

VoxelGrid voxelize(const PointCloud& cloud, std::size_t resolution, const Box& bounds) {
  if (resolution == 0) throw DomainError("voxelize: resolution must be >= 1");
  VoxelGrid grid{resolution, bounds, std::vector<std::uint8_t>(resolution * resolution * resolution, 0)};
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    grid.occupancy[linear_index(voxel_of(cloud[p], bounds, resolution), resolution)] = 1;
  }
  return grid;
}

double iou(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.resolution != b.resolution || !(a.bounds == b.bounds)) {
    throw ContractError("iou: grids differ in resolution or bounds (" + std::to_string(a.resolution) +
                        " vs " + std::to_string(b.resolution) + ")");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.occupancy.size(); ++i) {
    inter += a.occupancy[i] & b.occupancy[i];
    uni += a.occupancy[i] | b.occupancy[i];
  }
  if (uni == 0) throw DomainError("iou: both grids are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace patmod::geom
