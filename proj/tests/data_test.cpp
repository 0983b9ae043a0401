#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <unistd.h>

#include "patmod/data.hpp"
#include "patmod/error.hpp"
#include "test_support.hpp"

namespace patmod::data {
namespace {

namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("patmod_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Surface areas written out from side lengths, independent of Primitive::area.
double hand_area(const Primitive& p) {
  switch (p.type) {
    case Primitive::Type::box: {
      const double a = 2 * p.half[0], b = 2 * p.half[1], c = 2 * p.half[2];
      return 2 * (a * b + b * c + a * c);
    }
    case Primitive::Type::cylinder: {
      const double h = 2 * p.half_height;
      return kPi * p.radius * p.radius * 2 + 2 * kPi * p.radius * h;
    }
    case Primitive::Type::torus: return (2 * kPi * p.radius) * (2 * kPi * p.tube);
  }
  return 0;
}

TEST(ShapeClasses, NamesRoundTrip) {
  EXPECT_EQ(all_kinds().size(), 6u);
  for (ShapeKind k : all_kinds()) EXPECT_EQ(parse_kind(kind_name(k)), k);
  EXPECT_THROW(parse_kind("car"), ConfigError);
}

TEST(ShapeClasses, SameSeedSameShape) {
  for (ShapeKind k : all_kinds()) {
    EXPECT_EQ(generate_shape(k, 7), generate_shape(k, 7)) << kind_name(k);
    EXPECT_FALSE(generate_shape(k, 7) == generate_shape(k, 8)) << kind_name(k);
  }
}

TEST(ShapeClasses, PointsInsideNormalizationCube) {
  for (ShapeKind k : all_kinds()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const geom::PointCloud c = generate_shape(k, seed);
      ASSERT_EQ(c.size(), 2048u);
      double widest = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        for (double v : c[i]) {
          EXPECT_LE(std::abs(v), 0.45);
          widest = std::max(widest, std::abs(v));
        }
      }
      // The longest axis touches the bound.
      EXPECT_NEAR(widest, 0.45, 1e-12) << kind_name(k);
      const geom::Box box = geom::bounding_box(c, 0.0);
      for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(box.lo[a] + box.hi[a], 0.0, 1e-12);
    }
  }
}

TEST(ShapeClasses, PrimitiveAreasMatchClosedForm) {
  for (ShapeKind k : all_kinds()) {
    for (const Primitive& p : assemble(k, 3)) EXPECT_NEAR(p.area(), hand_area(p), 1e-12 * hand_area(p));
  }
}

TEST(SurfaceSampling, CountsProportionalToArea) {
  for (ShapeKind k : all_kinds()) {
    const auto parts = assemble(k, 11);
    const SurfaceSample s = sample_surface(parts, 10000, 11);
    double total = 0.0;
    for (const auto& p : parts) total += hand_area(p);
    std::vector<std::size_t> counts(parts.size(), 0);
    for (std::size_t idx : s.part) ++counts[idx];
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const double expected = 10000.0 * hand_area(parts[i]) / total;
      EXPECT_LE(std::abs(static_cast<double>(counts[i]) - expected), 0.05 * expected + 1.0)
          << kind_name(k) << " part " << i;
    }
  }
}

TEST(SurfaceSampling, BoxFacesProportionalToArea) {
  const Primitive box = make_box({0.1, -0.2, 0.3}, {0.5, 0.2, 0.1});
  const SurfaceSample s = sample_surface({box}, 10000, 5);
  std::array<double, 3> per_axis{};
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    const auto p = s.cloud[i];
    int on = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      const double d = std::abs(p[a] - box.center[a]);
      EXPECT_LE(d, box.half[a] + 1e-12);
      if (std::abs(d - box.half[a]) < 1e-12) {
        per_axis[a] += 1;
        ++on;
      }
    }
    EXPECT_GE(on, 1);
  }
  const double ab = 1.0 * 0.4, bc = 0.4 * 0.2, ac = 1.0 * 0.2;
  const double total = ab + bc + ac;
  EXPECT_NEAR(per_axis[0] / 10000.0, bc / total, 0.05 * bc / total);
  EXPECT_NEAR(per_axis[1] / 10000.0, ac / total, 0.05 * ac / total);
  EXPECT_NEAR(per_axis[2] / 10000.0, ab / total, 0.05 * ab / total);
}

TEST(SurfaceSampling, CylinderCapsAndSide) {
  const Primitive cyl = make_cylinder({0, 0, 0}, 0.3, 0.5, 0);
  const SurfaceSample s = sample_surface({cyl}, 10000, 2);
  double caps = 0;
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    const auto p = s.cloud[i];
    const double rho = std::hypot(p[1], p[2]);
    EXPECT_LE(rho, 0.3 + 1e-12);
    EXPECT_LE(std::abs(p[0]), 0.5 + 1e-12);
    const bool on_cap = std::abs(std::abs(p[0]) - 0.5) < 1e-12;
    const bool on_side = std::abs(rho - 0.3) < 1e-12;
    EXPECT_TRUE(on_cap || on_side);
    caps += on_cap ? 1 : 0;
  }
  const double cap_share = (2 * kPi * 0.09) / (2 * kPi * 0.09 + 2 * kPi * 0.3 * 1.0);
  EXPECT_NEAR(caps / 10000.0, cap_share, 0.05 * cap_share);
}

TEST(SurfaceSampling, TorusOuterHalfCarriesMoreArea) {
  const double big = 0.6, tube = 0.15;
  const Primitive tor = make_torus({0, 0, 0}, big, tube, 2);
  const SurfaceSample s = sample_surface({tor}, 10000, 9);
  double outer = 0;
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    const auto p = s.cloud[i];
    const double ring = std::hypot(p[0], p[1]);
    EXPECT_NEAR(std::hypot(ring - big, p[2]), tube, 1e-12);
    outer += ring > big ? 1 : 0;
  }
  // Outer half: 2*pi*r*(pi*R + 2r); inner: 2*pi*r*(pi*R - 2r).
  const double share = (kPi * big + 2 * tube) / (2 * kPi * big);
  EXPECT_NEAR(outer / 10000.0, share, 0.05 * share);
}

TEST(SurfaceSampling, Errors) {
  EXPECT_THROW(sample_surface({}, 10, 0), DomainError);
  EXPECT_THROW(sample_surface({make_box({0, 0, 0}, {0, 0, 0})}, 10, 0), DomainError);
}

TEST(Normalize, CentersAndScales) {
  const geom::PointCloud c({{1, 1, 1}, {3, 2, 1.5}});
  const geom::PointCloud n = normalize(c);
  // Center (2, 1.5, 1.25), largest half extent 1.
  EXPECT_NEAR(n[0][0], -0.45, 1e-15);
  EXPECT_NEAR(n[0][1], -0.225, 1e-15);
  EXPECT_NEAR(n[1][2], 0.1125, 1e-15);
}

TEST(Render, SinglePointSplatsTwoByTwo) {
  const num::Tensor img = render_image(geom::PointCloud({{0, 0, 0}}));
  ASSERT_EQ(img.shape(), (num::Shape{1, 64, 64}));
  std::size_t lit = 0;
  for (std::size_t r = 0; r < 64; ++r) {
    for (std::size_t c = 0; c < 64; ++c) {
      const double v = img[r * 64 + c];
      if (v != 0.0) {
        ++lit;
        EXPECT_TRUE(r == 32 || r == 33);
        EXPECT_TRUE(c == 32 || c == 33);
        EXPECT_NEAR(v, 0.6, 1e-15);  // depth 0 sits mid-range
      }
    }
  }
  EXPECT_EQ(lit, 4u);
}

TEST(Render, NearerPointWins) {
  const double s = 0.1 / std::sqrt(3.0);
  const num::Tensor img = render_image(geom::PointCloud({{0, 0, 0}, {s, s, s}}));
  const double range = 0.45 * std::sqrt(3.0);
  EXPECT_NEAR(img[32 * 64 + 32], 0.2 + 0.8 * (0.1 + range) / (2 * range), 1e-12);
}

TEST(Render, SmallCenteredShapeLeavesCornersDark) {
  geom::PointCloud c = generate_shape(ShapeKind::chair, 1);
  for (double& v : c.tensor().data()) v *= 0.3;
  const num::Tensor img = render_image(c);
  for (std::size_t r : {0u, 63u}) {
    for (std::size_t col : {0u, 63u}) EXPECT_EQ(img[r * 64 + col], 0.0);
  }
  for (double v : img.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Render, OutOfFrameIsBlack) {
  geom::PointCloud c = generate_shape(ShapeKind::table, 1);
  // (1,-1,0) lies in the image plane of the default view.
  for (std::size_t i = 0; i < c.size(); ++i) {
    auto p = c[i];
    p[0] += 3;
    p[1] -= 3;
    c.set(i, p);
  }
  for (double v : render_image(c).data()) EXPECT_EQ(v, 0.0);
}

TEST(Render, ShiftAlongViewKeepsFootprint) {
  const geom::PointCloud c = generate_shape(ShapeKind::lamp, 2);
  geom::PointCloud shifted = c;
  for (double& v : shifted.tensor().data()) v += 0.01;
  const num::Tensor a = render_image(c);
  const num::Tensor b = render_image(shifted);
  std::size_t differ = 0;
  for (std::size_t k = 0; k < a.size(); ++k) differ += (a[k] == 0.0) != (b[k] == 0.0);
  // Tiny footprint changes come from floor() at pixel edges only.
  EXPECT_LT(differ, 40u);
}

TEST(Render, Deterministic) {
  const geom::PointCloud c = generate_shape(ShapeKind::ring, 4);
  EXPECT_EQ(render_image(c), render_image(c));
  const RenderView v = view_from_seed(3);
  EXPECT_EQ(render_image(c, v), render_image(c, view_from_seed(3)));
  EXPECT_FALSE(render_image(c, v) == render_image(c));
}

TEST(Render, QuantizeRoundsHalfUp) {
  num::Tensor t({1, 1, 3}, std::vector<double>{0.5, 0.0, 1.0});
  const num::Tensor q = quantize(t);
  EXPECT_EQ(q[0], 128.0 / 255.0);
  EXPECT_EQ(q[1], 0.0);
  EXPECT_EQ(q[2], 1.0);
}

DatasetConfig small_config() {
  DatasetConfig cfg;
  cfg.train_per_class = 2;
  cfg.test_per_class = 1;
  cfg.points = 256;
  cfg.image_size = 32;
  cfg.seed = 5;
  return cfg;
}

TEST(Dataset, DefaultCounts) {
  DatasetConfig cfg;
  EXPECT_EQ(cfg.seen.size(), 3u);
  EXPECT_EQ(cfg.unseen.size(), 2u);
  cfg.points = 64;
  cfg.image_size = 16;
  const Dataset d = make_dataset(cfg);
  EXPECT_EQ(d.train.size(), 24u);
  EXPECT_EQ(d.test_seen.size(), 6u);
  EXPECT_EQ(d.test_unseen.size(), 4u);
}

TEST(Dataset, UnseenNeverInTraining) {
  const DatasetConfig cfg = small_config();
  const Dataset d = make_dataset(cfg);
  const std::set<std::string> unseen(cfg.unseen.begin(), cfg.unseen.end());
  for (const Sample& s : d.train) EXPECT_EQ(unseen.count(s.class_name), 0u);
  for (const Sample& s : d.test_seen) EXPECT_EQ(unseen.count(s.class_name), 0u);
  for (const Sample& s : d.test_unseen) EXPECT_EQ(unseen.count(s.class_name), 1u);
}

TEST(Dataset, SeedsDistinctAndImagesReRender) {
  const Dataset d = make_dataset(small_config());
  std::set<std::uint64_t> seeds;
  for (const auto* split : {&d.train, &d.test_seen, &d.test_unseen}) {
    for (const Sample& s : *split) {
      EXPECT_TRUE(seeds.insert(s.seed).second);
      RenderView view;
      view.size = 32;
      EXPECT_EQ(s.image, quantize(render_image(s.cloud, view)));
      EXPECT_EQ(s.cloud, generate_shape(parse_kind(s.class_name), s.seed, 256));
    }
  }
}

TEST(Dataset, ConfigErrors) {
  DatasetConfig overlap = small_config();
  overlap.unseen.push_back("chair");
  EXPECT_THROW(make_dataset(overlap), ConfigError);
  DatasetConfig unknown = small_config();
  unknown.seen = {"car"};
  EXPECT_THROW(make_dataset(unknown), ConfigError);
  DatasetConfig zero = small_config();
  zero.train_per_class = 0;
  EXPECT_THROW(make_dataset(zero), ConfigError);
  EXPECT_THROW(make_dataset(small_config()).split("validation"), ConfigError);
}

TEST(Dataset, ManifestsIdenticalForSameSeed) {
  TempDir tmp("dataset");
  write_dataset(make_dataset(small_config()), tmp.file("a"));
  write_dataset(make_dataset(small_config()), tmp.file("b"));
  EXPECT_EQ(read_bytes(tmp.file("a/manifest.jsonl")), read_bytes(tmp.file("b/manifest.jsonl")));
  for (const auto& entry : fs::recursive_directory_iterator(tmp.path() / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), tmp.path() / "a");
    EXPECT_EQ(read_bytes(entry.path().string()), read_bytes((tmp.path() / "b" / rel).string())) << rel;
  }
}

TEST(Dataset, DiskRoundTripMatchesMemory) {
  TempDir tmp("dataset_rt");
  const Dataset d = make_dataset(small_config());
  write_dataset(d, tmp.file("ds"));
  const auto records = read_manifest(tmp.file("ds/manifest.jsonl"));
  EXPECT_EQ(records.size(), d.size());
  for (const auto& r : records) {
    EXPECT_FALSE(fs::path(r.cloud_path).is_absolute());
    EXPECT_TRUE(fs::exists(tmp.path() / "ds" / r.image_path));
  }
  const Dataset back = read_dataset(tmp.file("ds"));
  ASSERT_EQ(back.train.size(), d.train.size());
  ASSERT_EQ(back.test_unseen.size(), d.test_unseen.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    EXPECT_EQ(back.train[i].cloud, d.train[i].cloud);
    EXPECT_EQ(back.train[i].image, d.train[i].image);
    EXPECT_EQ(back.train[i].seed, d.train[i].seed);
  }
}

TEST(Xyz, ExactRoundTrip) {
  TempDir tmp("xyz");
  const geom::PointCloud c(testing::random_tensor({100, 3}, 17, -3, 3));
  write_xyz(c, tmp.file("c.xyz"));
  EXPECT_EQ(read_xyz(tmp.file("c.xyz")), c);
}

TEST(Xyz, ParseErrorNamesLine) {
  TempDir tmp("xyz_bad");
  write_text(tmp.file("bad.xyz"), "0 0 0\n1 2\n");
  try {
    read_xyz(tmp.file("bad.xyz"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  write_text(tmp.file("word.xyz"), "0 0 0\n0 0 0\n1 x 3\n");
  EXPECT_THROW(read_xyz(tmp.file("word.xyz")), ParseError);
  EXPECT_THROW(read_xyz(tmp.file("missing.xyz")), IoError);
  EXPECT_THROW(write_xyz(geom::PointCloud(), tmp.file("e.xyz")), DomainError);
}

TEST(Ply, OnePointLayout) {
  TempDir tmp("ply1");
  write_ply(geom::PointCloud({{1, 2, 3}}), tmp.file("p.ply"));
  const auto bytes = read_bytes(tmp.file("p.ply"));
  const std::string header =
      "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n";
  ASSERT_EQ(bytes.size(), header.size() + 3 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
  // 1.0f = 0x3F800000, little endian.
  EXPECT_EQ(bytes[header.size() + 3], 0x3F);
  EXPECT_EQ(bytes[header.size() + 2], 0x80);
}

TEST(Ply, RoundTripWithinFloatQuantization) {
  TempDir tmp("ply");
  const geom::PointCloud c(testing::random_tensor({500, 3}, 23, -1, 1));
  write_ply(c, tmp.file("c.ply"));
  const geom::PointCloud back = read_ply(tmp.file("c.ply"));
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < 3 * c.size(); ++i) {
    const double v = c.tensor()[i];
    const float f = static_cast<float>(v);
    const double ulp = std::nextafter(std::abs(f), INFINITY) - std::abs(f);
    EXPECT_LE(std::abs(back.tensor()[i] - v), ulp);
  }
}

TEST(Ply, MalformedInputs) {
  TempDir tmp("ply_bad");
  write_ply(geom::PointCloud({{1, 2, 3}, {4, 5, 6}}), tmp.file("p.ply"));
  auto bytes = read_bytes(tmp.file("p.ply"));
  bytes.pop_back();
  write_bytes(tmp.file("short.ply"), bytes);
  EXPECT_THROW(read_ply(tmp.file("short.ply")), ParseError);
  write_text(tmp.file("ascii.ply"), "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n");
  EXPECT_THROW(read_ply(tmp.file("ascii.ply")), ParseError);
  write_text(tmp.file("noend.ply"), "ply\nformat binary_little_endian 1.0\n");
  EXPECT_THROW(read_ply(tmp.file("noend.ply")), ParseError);
}

TEST(Pgm, HeaderAndZeroPayload) {
  const auto bytes = encode_pgm(num::Tensor({1, 64, 64}));
  const std::string header = "P5\n64 64\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 64 * 64);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
  for (std::size_t i = header.size(); i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(Pgm, RoundTripWithinOneLevel) {
  TempDir tmp("pgm");
  const num::Tensor img = testing::random_tensor({1, 64, 64}, 31, 0, 1);
  write_pgm(img, tmp.file("i.pgm"));
  const num::Tensor back = read_pgm(tmp.file("i.pgm"));
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back[i] - img[i]), 0.5 / 255 + 1e-15);
  // Already-quantized images survive exactly.
  EXPECT_EQ(decode_pgm(encode_pgm(quantize(img))), quantize(img));
}

TEST(Pgm, MalformedHeader) {
  auto text = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  EXPECT_THROW(decode_pgm(text("P2\n1 1\n255\n\x01")), ParseError);
  EXPECT_THROW(decode_pgm(text("P5\n1\n")), ParseError);
  EXPECT_THROW(decode_pgm(text("P5\n2 2\n255\n\x01")), ParseError);
  EXPECT_THROW(decode_pgm(text("P5\n1 1\n300\n\x01")), ParseError);
  EXPECT_EQ(decode_pgm(text("P5\n# comment\n1 1\n255\n\xff"))[0], 1.0);
  EXPECT_THROW(encode_pgm(num::Tensor({1, 2, 2}, 1.5)), DomainError);
}

}  // namespace
}  // namespace patmod::data
