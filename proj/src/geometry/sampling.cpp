#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "patmod/error.hpp"
#include "patmod/geometry.hpp"
#include "patmod/rng.hpp"

namespace patmod::geom {

std::vector<std::size_t> farthest_point_indices(const PointCloud& cloud, std::size_t k) {
  const std::size_t n = cloud.size();
  if (k > n) {
    throw DomainError("downsample: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
  }
  std::vector<std::size_t> picked;
  if (k == 0) return picked;
  picked.reserve(k);
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> taken(n, 0);
  std::size_t current = 0;
  for (std::size_t step = 0; step < k; ++step) {
    picked.push_back(current);
    taken[current] = 1;
    const Vec3 c = cloud[current];
    std::size_t next = n;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const Vec3 p = cloud[i];
      const double dx = p[0] - c[0];
      const double dy = p[1] - c[1];
      const double dz = p[2] - c[2];
      dist2[i] = std::min(dist2[i], dx * dx + dy * dy + dz * dz);
      if (dist2[i] > far) {
        far = dist2[i];
        next = i;
      }
    }
    current = next;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

PointCloud downsample(const PointCloud& cloud, std::size_t k, DownsampleMethod method, std::uint64_t seed) {
  if (method == DownsampleMethod::fps) return cloud.subset(farthest_point_indices(cloud, k));
  const std::size_t n = cloud.size();
  if (k > n) {
    throw DomainError("downsample: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  std::sort(order.begin(), order.end());
  return cloud.subset(order);
}

}  // namespace patmod::geom
