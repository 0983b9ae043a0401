#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "patmod/geometry.hpp"
#include "patmod/tensor.hpp"

namespace patmod::data {

enum class ShapeKind { table, chair, cross_plane, lamp, sofa_block, ring };

const std::vector<ShapeKind>& all_kinds();
std::string kind_name(ShapeKind kind);
/// Throws ConfigError for an unregistered class name.
ShapeKind parse_kind(const std::string& name);

/// Closed surface primitives. Boxes are axis aligned; cylinders and tori are
/// aligned with `axis` (0 = x, 1 = y, 2 = z).
struct Primitive {
  enum class Type { box, cylinder, torus };
  Type type = Type::box;
  geom::Vec3 center{0, 0, 0};
  geom::Vec3 half{0, 0, 0};   // box half extents
  double radius = 0.0;        // cylinder radius, torus major radius
  double half_height = 0.0;   // cylinder
  double tube = 0.0;          // torus minor radius
  std::size_t axis = 2;

  double area() const;
};

Primitive make_box(geom::Vec3 center, geom::Vec3 half);
Primitive make_cylinder(geom::Vec3 center, double radius, double half_height, std::size_t axis);
Primitive make_torus(geom::Vec3 center, double radius, double tube, std::size_t axis);

/// Parts of one shape instance before sampling.
std::vector<Primitive> assemble(ShapeKind kind, std::uint64_t seed);

struct SurfaceSample {
  geom::PointCloud cloud;
  std::vector<std::size_t> part;  // primitive of every point
};

/// Area-weighted uniform surface sampling. Point counts per primitive follow
/// the area shares (largest remainder), positions are uniform on each surface.
SurfaceSample sample_surface(const std::vector<Primitive>& parts, std::size_t count, std::uint64_t seed);

/// Centers the bounding box at the origin and scales the largest half extent
/// to `half`, clamping the result into [-half, half]^3.
geom::PointCloud normalize(const geom::PointCloud& cloud, double half = 0.45);

geom::PointCloud generate_shape(ShapeKind kind, std::uint64_t seed, std::size_t points = 2048);

struct RenderView {
  geom::Vec3 direction{1, 1, 1};  // towards the camera, normalized on use
  std::size_t size = 64;
  double half_width = 0.8;
  double depth_range = 0.45 * 1.7320508075688772;
};

/// Random camera direction in the upper hemisphere.
RenderView view_from_seed(std::uint64_t seed, std::size_t size = 64);

/// Orthographic point splat, 1 x size x size in [0, 1]. Background is 0,
/// nearer points are brighter.
num::Tensor render_image(const geom::PointCloud& cloud, const RenderView& view = {});

/// Rounds to the 8-bit grid used by the image files.
num::Tensor quantize(const num::Tensor& image);

struct Sample {
  std::string class_name;
  std::uint64_t seed = 0;
  std::string split;  // train, test_seen, test_unseen
  num::Tensor image;
  geom::PointCloud cloud;
};

struct DatasetConfig {
  std::vector<std::string> seen{"table", "chair", "cross_plane"};
  std::vector<std::string> unseen{"lamp", "sofa_block"};
  std::size_t train_per_class = 8;
  std::size_t test_per_class = 2;
  std::uint64_t seed = 1;
  std::size_t points = 2048;
  std::size_t image_size = 64;

  /// ConfigError on overlapping or unknown classes and zero counts.
  void validate() const;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test_seen;
  std::vector<Sample> test_unseen;

  std::size_t size() const { return train.size() + test_seen.size() + test_unseen.size(); }
  /// train, test_seen or test_unseen (also accepts seen / unseen).
  const std::vector<Sample>& split(const std::string& name) const;
};

std::uint64_t sample_seed(std::uint64_t master, const std::string& class_name, const std::string& split,
                          std::size_t index);
Sample make_sample(const std::string& class_name, std::uint64_t seed, const std::string& split,
                   std::size_t points, std::size_t image_size);
Dataset make_dataset(const DatasetConfig& config);

void write_xyz(const geom::PointCloud& cloud, const std::string& path);
geom::PointCloud read_xyz(const std::string& path);
void write_ply(const geom::PointCloud& cloud, const std::string& path);
geom::PointCloud read_ply(const std::string& path);
std::vector<std::uint8_t> encode_pgm(const num::Tensor& image);
num::Tensor decode_pgm(const std::vector<std::uint8_t>& bytes);
void write_pgm(const num::Tensor& image, const std::string& path);
num::Tensor read_pgm(const std::string& path);

std::vector<std::uint8_t> read_bytes(const std::string& path);
void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::string& path, const std::string& text);

struct ManifestRecord {
  std::string class_name;
  std::uint64_t seed = 0;
  std::string cloud_path;
  std::string image_path;
  std::string split;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Writes clouds/, images/ and manifest.jsonl under dir.
void write_dataset(const Dataset& dataset, const std::string& dir);
std::vector<ManifestRecord> read_manifest(const std::string& path);
/// only_split (train, test_seen, test_unseen) skips every other manifest row.
Dataset read_dataset(const std::string& dir, const std::string& only_split = "");

}  // namespace patmod::data
