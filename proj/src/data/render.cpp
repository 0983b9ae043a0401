#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "patmod/data.hpp"
#include "patmod/error.hpp"
#include "patmod/rng.hpp"

namespace patmod::data {
namespace {

geom::Vec3 cross(const geom::Vec3& a, const geom::Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const geom::Vec3& a, const geom::Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

geom::Vec3 unit(const geom::Vec3& a) {
  const double n = std::sqrt(dot(a, a));
  if (!(n > 0.0)) throw DomainError("render: zero-length direction");
  return {a[0] / n, a[1] / n, a[2] / n};
}

}  // namespace

RenderView view_from_seed(std::uint64_t seed, std::size_t size) {
  Rng rng(derive_seed(seed, "view", 0));
  RenderView view;
  view.size = size;
  const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
  // Elevation between 15 and 60 degrees keeps the camera off the z axis.
  const double elevation = rng.uniform(std::numbers::pi / 12, std::numbers::pi / 3);
  view.direction = {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                    std::sin(elevation)};
  return view;
}

num::Tensor render_image(const geom::PointCloud& cloud, const RenderView& view) {
  if (view.size == 0 || !(view.half_width > 0.0) || !(view.depth_range > 0.0)) {
    throw ContractError("render_image: invalid view");
  }
  const geom::Vec3 w = unit(view.direction);
  const geom::Vec3 u = unit(cross({0, 0, 1}, w));
  const geom::Vec3 v = cross(w, u);
  const std::size_t n = view.size;
  const double pixel = 2.0 * view.half_width / static_cast<double>(n);

  std::vector<double> depth(n * n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const geom::Vec3 p = cloud[i];
    const double col = std::floor((dot(p, u) + view.half_width) / pixel);
    const double row = std::floor((view.half_width - dot(p, v)) / pixel);
    const double d = dot(p, w);
    for (double r = row; r <= row + 1; ++r) {
      for (double c = col; c <= col + 1; ++c) {
        if (r < 0 || c < 0 || r >= static_cast<double>(n) || c >= static_cast<double>(n)) continue;
        double& slot = depth[static_cast<std::size_t>(r) * n + static_cast<std::size_t>(c)];
        slot = std::max(slot, d);
      }
    }
  }

  num::Tensor image({1, n, n});
  for (std::size_t k = 0; k < n * n; ++k) {
    if (std::isinf(depth[k])) continue;
    const double t = std::clamp((depth[k] + view.depth_range) / (2.0 * view.depth_range), 0.0, 1.0);
    image[k] = 0.2 + 0.8 * t;
  }
  return image;
}

num::Tensor quantize(const num::Tensor& image) {
  num::Tensor out = image;
  for (double& x : out.data()) x = std::floor(std::clamp(x, 0.0, 1.0) * 255.0 + 0.5) / 255.0;
  return out;
}

}  // namespace patmod::data
