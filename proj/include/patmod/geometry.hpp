#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "patmod/tensor.hpp"

namespace patmod::geom {

using Vec3 = std::array<double, 3>;

/// Ordered list of 3D points stored as an nx3 row-major tensor.
class PointCloud {
 public:
  PointCloud() : data_(num::Shape{0, 3}) {}
  explicit PointCloud(std::size_t n) : data_(num::Shape{n, 3}) {}
  /// Takes an nx3 tensor; throws DimensionError otherwise.
  explicit PointCloud(num::Tensor points);
  explicit PointCloud(const std::vector<Vec3>& points);
  PointCloud(std::initializer_list<Vec3> points) : PointCloud(std::vector<Vec3>(points)) {}

  std::size_t size() const { return data_.dim(0); }
  bool empty() const { return size() == 0; }
  Vec3 operator[](std::size_t i) const { return {data_[3 * i], data_[3 * i + 1], data_[3 * i + 2]}; }
  void set(std::size_t i, const Vec3& p);

  const num::Tensor& tensor() const { return data_; }
  num::Tensor& tensor() { return data_; }
  std::span<const double> flat() const { return data_.data(); }

  PointCloud subset(const std::vector<std::size_t>& indices) const;
  bool all_finite() const { return num::all_finite(data_); }

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.data_ == b.data_; }

 private:
  num::Tensor data_;
};

struct Box {
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};

  double side(std::size_t axis) const { return hi[axis] - lo[axis]; }
  double max_side() const;
  bool contains(const Vec3& p) const;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Axis-aligned bounds of a nonempty cloud with the max corner pushed out by
/// epsilon on every axis (so max-coordinate points fall inside the last voxel).
Box bounding_box(const PointCloud& cloud, double epsilon);
/// 1e-6 times the largest side, or 1e-6 for a degenerate (single point) box.
double relative_box_epsilon(const Box& raw);
/// bounding_box with relative_box_epsilon applied.
Box reference_box(const PointCloud& cloud);
/// Smallest box holding both clouds, with the relative epsilon.
Box union_box(const PointCloud& a, const PointCloud& b);

struct VoxelIndex {
  std::size_t i = 0, j = 0, k = 0;
  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
};

/// Cell of p in a per_edge^3 split of box; out-of-box points clamp to the
/// nearest boundary cell.
VoxelIndex voxel_of(const Vec3& p, const Box& box, std::size_t per_edge);
std::size_t linear_index(const VoxelIndex& v, std::size_t per_edge);

/// Exact integer cube root; throws DomainError when M is not a perfect cube.
std::size_t cube_root(std::size_t m);

/// One padded region: the first real_count rows hold real points in source
/// order, the rest are zero padding.
struct Region {
  num::Tensor padded_points;              // capacity x 3
  std::vector<std::uint8_t> mask;         // 1 for real rows
  std::vector<std::size_t> source_rows;   // source index of each real row
  Vec3 center{0, 0, 0};
  VoxelIndex voxel;

  std::size_t real_count() const { return source_rows.size(); }
  bool empty() const { return source_rows.empty(); }
};

struct RegionSet {
  std::vector<Region> regions;
  std::size_t capacity = 0;
  std::size_t per_edge = 1;
  Box box;
  std::size_t truncated = 0;  // real points dropped by capacity overflow

  std::size_t count() const { return regions.size(); }
};

/// Splits `source` into M = per_edge^3 regions over the bounding box of
/// `reference`. Overflow beyond capacity keeps the lowest-index points and
/// logs a warning.
RegionSet split_regions(const PointCloud& source, const PointCloud& reference, std::size_t m,
                        std::size_t capacity);
RegionSet split_regions(const PointCloud& source, const Box& box, std::size_t m, std::size_t capacity);

/// Unpadded partition of a cloud over the same voxel layout (ground-truth regions).
std::vector<PointCloud> partition(const PointCloud& cloud, const Box& box, std::size_t m);

/// Real rows translated by -center (mean of real rows); padding untouched.
Region center_region(const Region& region);
/// Adds center to every row.
num::Tensor decenter(const num::Tensor& points, const Vec3& center);

enum class SamplingMode { voxel, plane };

/// Lattice dimensions (nx, ny, nz) used for P points in the given mode.
std::array<std::size_t, 3> lattice_dims(std::size_t p, SamplingMode mode);
/// Regular lattice spanning [-extent, extent] per used axis; plane mode lies on z = 0.
num::Tensor grid_lattice(std::size_t p, double extent, SamplingMode mode);

struct VoxelGrid {
  std::size_t resolution = 0;
  Box bounds;
  std::vector<std::uint8_t> occupancy;

  std::size_t occupied() const;
};

VoxelGrid voxelize(const PointCloud& cloud, std::size_t resolution, const Box& bounds);
/// |a and b| / |a or b|; grids must share resolution and bounds.
double iou(const VoxelGrid& a, const VoxelGrid& b);

enum class DownsampleMethod { fps, random };

/// Farthest-point sampling from index 0; returns ascending source indices.
std::vector<std::size_t> farthest_point_indices(const PointCloud& cloud, std::size_t k);
PointCloud downsample(const PointCloud& cloud, std::size_t k, DownsampleMethod method,
                      std::uint64_t seed = 0);

}  // namespace patmod::geom
