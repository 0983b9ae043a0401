#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "patmod/error.hpp"
#include "patmod/geometry.hpp"
#include "patmod/grad_check.hpp"
#include "patmod/log.hpp"
#include "patmod/neighbors.hpp"
#include "patmod/ops.hpp"
#include "test_support.hpp"

namespace patmod::geom {
namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double extent = 0.5) {
  return PointCloud(testing::random_tensor({n, 3}, seed, -extent, extent));
}

class QuietLog : public ::testing::Test {
 protected:
  void SetUp() override { log::set_level(log::Level::quiet); }
  void TearDown() override { log::set_level(log::Level::warning); }
};

TEST(BoundingBox, HandCase) {
  const Box box = bounding_box(PointCloud({{0, 0, 0}, {1, 2, 3}}), 0.0);
  EXPECT_EQ(box.lo, (Vec3{0, 0, 0}));
  EXPECT_EQ(box.hi, (Vec3{1, 2, 3}));
}

TEST(BoundingBox, SinglePointExpandsToEpsilon) {
  const PointCloud one({{0.25, -0.5, 1.0}});
  const Box raw = bounding_box(one, 0.0);
  EXPECT_EQ(raw.max_side(), 0.0);
  const Box box = reference_box(one);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(box.side(a), 1e-6, 1e-15);
  EXPECT_THROW(bounding_box(PointCloud(), 0.0), DomainError);
}

TEST(BoundingBox, ContainsEveryPoint) {
  const PointCloud cloud = random_cloud(100, 3);
  const Box box = reference_box(cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_TRUE(box.contains(cloud[i]));
  // Max-coordinate points land in the last voxel rather than past it.
  const VoxelIndex v = voxel_of(box.hi, box, 2);
  EXPECT_EQ(v, (VoxelIndex{1, 1, 1}));
}

TEST_F(QuietLog, SplitM8HasTwoSegmentsPerEdge) {
  const PointCloud cloud = random_cloud(64, 1);
  const RegionSet set = split_regions(cloud, cloud, 8, 64);
  EXPECT_EQ(set.per_edge, 2u);
  EXPECT_EQ(set.count(), 8u);
  EXPECT_THROW(split_regions(cloud, cloud, 9, 64), DomainError);
  EXPECT_EQ(cube_root(27), 3u);
}

TEST_F(QuietLog, SplitM1IsWholeCloudWithMeanCenter) {
  const PointCloud cloud = random_cloud(50, 2);
  const RegionSet set = split_regions(cloud, cloud, 1, 64);
  ASSERT_EQ(set.count(), 1u);
  const Region& r = set.regions[0];
  EXPECT_EQ(r.real_count(), 50u);
  Vec3 mean{0, 0, 0};
  for (std::size_t i = 0; i < 50; ++i) {
    for (std::size_t a = 0; a < 3; ++a) mean[a] += cloud[i][a] / 50.0;
  }
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(r.center[a], mean[a], 1e-15);
  for (std::size_t row = 50; row < 64; ++row) {
    EXPECT_EQ(r.mask[row], 0);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(r.padded_points[3 * row + a], 0.0);
  }
}

TEST_F(QuietLog, SplitIsAPartitionAgainstBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud cloud = random_cloud(500, 100 + seed);
    const RegionSet set = split_regions(cloud, cloud, 8, 500);
    std::vector<int> seen(cloud.size(), 0);
    for (const Region& r : set.regions) {
      for (std::size_t row = 0; row < r.padded_points.rows(); ++row) {
        EXPECT_EQ(r.mask[row] != 0, row < r.real_count());
      }
      for (std::size_t row = 0; row < r.real_count(); ++row) {
        const std::size_t src = r.source_rows[row];
        ++seen[src];
        for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(r.padded_points[3 * row + a], cloud[src][a]);
        // Voxel membership by direct comparison with the half-open cell bounds.
        const std::size_t idx[3] = {r.voxel.i, r.voxel.j, r.voxel.k};
        for (std::size_t a = 0; a < 3; ++a) {
          const double mid = set.box.lo[a] + 0.5 * set.box.side(a);
          EXPECT_EQ(cloud[src][a] >= mid, idx[a] == 1);
        }
      }
    }
    for (int count : seen) EXPECT_EQ(count, 1);
  }
}

TEST_F(QuietLog, OverflowKeepsLowestIndices) {
  const PointCloud cloud = random_cloud(40, 4);
  const RegionSet set = split_regions(cloud, cloud, 1, 16);
  EXPECT_EQ(set.truncated, 24u);
  std::vector<std::size_t> expected(16);
  for (std::size_t i = 0; i < 16; ++i) expected[i] = i;
  EXPECT_EQ(set.regions[0].source_rows, expected);
}

TEST_F(QuietLog, SourceOutsideReferenceIsClamped) {
  const PointCloud reference({{0, 0, 0}, {1, 1, 1}});
  const PointCloud source({{-5, -5, -5}, {5, 5, 5}, {0.9, 0.1, 0.1}});
  const RegionSet set = split_regions(source, reference, 8, 4);
  std::size_t total = 0;
  for (const Region& r : set.regions) total += r.real_count();
  EXPECT_EQ(total, 3u);
  EXPECT_EQ(set.regions[0].source_rows, std::vector<std::size_t>{0});
  EXPECT_EQ(set.regions[7].source_rows, std::vector<std::size_t>{1});
  EXPECT_EQ(set.regions[linear_index({1, 0, 0}, 2)].source_rows, std::vector<std::size_t>{2});
}

TEST(Centering, HandCaseAndIdentity) {
  Region r;
  r.padded_points = num::Tensor::matrix({{1, 1, 1}, {3, 3, 3}, {0, 0, 0}});
  r.mask = {1, 1, 0};
  r.source_rows = {0, 1};
  r.center = {2, 2, 2};
  const Region c = center_region(r);
  EXPECT_EQ(c.padded_points, num::Tensor::matrix({{-1, -1, -1}, {1, 1, 1}, {0, 0, 0}}));
  const Region again = center_region(Region{c.padded_points, c.mask, c.source_rows, {0, 0, 0}, {}});
  EXPECT_EQ(again.padded_points, c.padded_points);
  EXPECT_EQ(decenter(num::Tensor::matrix({{1, 2, 3}}), {0, 0, 0}), num::Tensor::matrix({{1, 2, 3}}));
}

TEST_F(QuietLog, CenterDecenterRoundTripOnRandomRegions) {
  const PointCloud cloud = random_cloud(300, 9);
  const RegionSet set = split_regions(cloud, cloud, 8, 300);
  for (const Region& r : set.regions) {
    if (r.empty()) continue;
    const Region c = center_region(r);
    Vec3 mean{0, 0, 0};
    for (std::size_t row = 0; row < c.real_count(); ++row) {
      for (std::size_t a = 0; a < 3; ++a) mean[a] += c.padded_points[3 * row + a];
    }
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(mean[a] / c.real_count(), 0.0, 1e-12);
    const num::Tensor back = decenter(c.padded_points, c.center);
    for (std::size_t row = 0; row < r.real_count(); ++row) {
      for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_NEAR(back[3 * row + a], r.padded_points[3 * row + a], 1e-12);
      }
    }
  }
}

TEST(Lattice, VoxelModeDefaults) {
  EXPECT_EQ(lattice_dims(256, SamplingMode::voxel), (std::array<std::size_t, 3>{8, 8, 4}));
  const num::Tensor grid = grid_lattice(256, 0.5, SamplingMode::voxel);
  EXPECT_EQ(grid.shape(), (num::Shape{256, 3}));
  for (double v : grid.data()) {
    EXPECT_GE(v, -0.5);
    EXPECT_LE(v, 0.5);
  }
  std::set<std::array<double, 3>> unique;
  for (std::size_t i = 0; i < 256; ++i) unique.insert({grid[3 * i], grid[3 * i + 1], grid[3 * i + 2]});
  EXPECT_EQ(unique.size(), 256u);
}

TEST(Lattice, EightPointsAreCubeCorners) {
  const num::Tensor grid = grid_lattice(8, 1.0, SamplingMode::voxel);
  for (double v : grid.data()) EXPECT_EQ(std::abs(v), 1.0);
  EXPECT_EQ(lattice_dims(27, SamplingMode::voxel), (std::array<std::size_t, 3>{3, 3, 3}));
  EXPECT_EQ(lattice_dims(12, SamplingMode::voxel), (std::array<std::size_t, 3>{3, 2, 2}));
  EXPECT_THROW(grid_lattice(0, 1.0, SamplingMode::voxel), DomainError);
}

TEST(Lattice, PlaneModeIsFlat) {
  EXPECT_EQ(lattice_dims(256, SamplingMode::plane), (std::array<std::size_t, 3>{16, 16, 1}));
  const num::Tensor grid = grid_lattice(256, 0.5, SamplingMode::plane);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(grid[3 * i + 2], 0.0);
}

TEST(Nearest, HandCases) {
  const num::Tensor targets = num::Tensor::matrix({{1, 0, 0}, {0.5, 0, 0}});
  const NeighborResult r = nearest_neighbor(num::Tensor::matrix({{0, 0, 0}, {1, 0, 0}}), targets);
  EXPECT_EQ(r.indices[0], 1u);
  EXPECT_EQ(r.distances[0], 0.5);
  EXPECT_EQ(r.indices[1], 0u);
  EXPECT_EQ(r.distances[1], 0.0);
  EXPECT_THROW(nearest_neighbor(targets, num::Tensor({0, 3})), DomainError);
}

TEST(Nearest, MatchesBruteForceUnderEveryKernel) {
  for (kernels::Isa isa : {kernels::Isa::scalar, kernels::Isa::avx2}) {
    if (!kernels::isa_available(isa)) continue;
    const kernels::Isa saved = kernels::active_isa();
    kernels::set_active_isa(isa);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const num::Tensor q = testing::random_tensor({200, 3}, 50 + seed);
      const num::Tensor t = testing::random_tensor({300, 3}, 80 + seed);
      const NeighborResult r = nearest_neighbor(q, t);
      for (std::size_t i = 0; i < 200; ++i) {
        const auto b = testing::brute_nearest(t, &q.data()[3 * i]);
        ASSERT_EQ(r.indices[i], b.index);
        ASSERT_EQ(r.distances[i], b.distance);
      }
    }
    kernels::set_active_isa(saved);
  }
}

TEST(Nearest, DuplicateTargetsResolveToLowestIndex) {
  // Lattice targets with many duplicates and exact ties.
  num::Tensor t({120, 3});
  for (std::size_t i = 0; i < 120; ++i) {
    t[3 * i] = static_cast<double>(i % 5);
    t[3 * i + 1] = static_cast<double>((i / 5) % 3);
    t[3 * i + 2] = 0.0;
  }
  num::Tensor q = num::Tensor::matrix({{0.5, 0.5, 0}, {2, 1, 0}, {4.5, 2.5, 0}, {1.5, 0, 0}});
  const NeighborResult r = nearest_neighbor(q, t);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    EXPECT_EQ(r.indices[i], testing::brute_nearest(t, &q.data()[3 * i]).index);
  }
}

TEST(Chamfer, IdentityAndHandCase) {
  const PointCloud x = random_cloud(25, 5);
  EXPECT_EQ(chamfer_sum(x, x), 0.0);
  EXPECT_EQ(chamfer_sum(PointCloud({{0, 0, 0}}), PointCloud({{1, 0, 0}})), 2.0);
  EXPECT_THROW(chamfer_sum(x, PointCloud()), DomainError);
}

TEST(Chamfer, MatchesBruteForceAndIsSymmetric) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PointCloud a = random_cloud(30, 200 + seed);
    const PointCloud b = random_cloud(40, 300 + seed);
    const double fast = chamfer_sum(a, b);
    EXPECT_NEAR(fast, testing::brute_chamfer(a.tensor(), b.tensor()), 1e-12);
    EXPECT_EQ(fast, chamfer_sum(b, a));
    EXPECT_GE(fast, 0.0);
    EXPECT_EQ(chamfer_eval(a, b), chamfer_eval(b, a));
  }
}

TEST(Chamfer, EvalFormIsHalvedMeanOfDirections) {
  const PointCloud a({{0, 0, 0}, {1, 0, 0}});
  const PointCloud b({{0, 0, 0}});
  // a->b: 0 + 1 over 2 points; b->a: 0 over 1 point.
  EXPECT_DOUBLE_EQ(chamfer_eval(a, b), 0.25);
}

TEST(Chamfer, TapeValueMatchesOracleRoute) {
  // Two independent routes: KD-tree op vs pairwise distance matrix + row minima.
  num::Tape tape;
  const num::Tensor a = testing::random_tensor({12, 3}, 1);
  const num::Tensor b = testing::random_tensor({9, 3}, 2);
  num::Var va = tape.leaf(a);
  num::Var vb = tape.leaf(b);
  const double fast = chamfer(va, vb).value().item();
  num::Var dist = num::pairwise_distances(va, vb);
  const double oracle = num::reduce_sum(num::min_over_rows(dist).values).value().item() +
                        num::reduce_sum(num::min_over_rows(num::pairwise_distances(vb, va)).values).value().item();
  EXPECT_NEAR(fast, oracle, 1e-12);
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const num::Tensor fixed = testing::random_tensor({7, 3}, 900 + seed);
    const num::Tensor x = testing::random_tensor({5, 3}, 700 + seed);
    auto f = [&](num::Tape& t, num::Var v) { return chamfer(v, t.constant(fixed)); };
    auto g = [&](num::Tape& t, num::Var v) { return chamfer(t.constant(fixed), v); };
    EXPECT_TRUE(num::grad_check(f, x).passed(1e-4)) << seed;
    EXPECT_TRUE(num::grad_check(g, x).passed(1e-4)) << seed;
  }
}

TEST(Voxels, SingleCellAndIdentity) {
  const Box box{{-1, -1, -1}, {1, 1, 1}};
  const VoxelGrid g = voxelize(PointCloud({{0, 0, 0}}), 1, box);
  EXPECT_EQ(g.occupied(), 1u);
  const PointCloud c = random_cloud(100, 7);
  const VoxelGrid a = voxelize(c, 32, box);
  EXPECT_EQ(a.occupancy, voxelize(c, 32, box).occupancy);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_THROW(voxelize(c, 0, box), DomainError);
}

TEST(Voxels, MatchesBruteForceBinning) {
  const Box box{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const PointCloud c = random_cloud(200, 8, 0.49);
  const VoxelGrid g = voxelize(c, 4, box);
  std::vector<std::uint8_t> expected(64, 0);
  for (std::size_t p = 0; p < c.size(); ++p) {
    std::size_t cell[3];
    for (std::size_t a = 0; a < 3; ++a) {
      cell[a] = 0;
      while (cell[a] < 3 && c[p][a] >= box.lo[a] + 0.25 * static_cast<double>(cell[a] + 1)) ++cell[a];
    }
    expected[(cell[0] * 4 + cell[1]) * 4 + cell[2]] = 1;
  }
  EXPECT_EQ(g.occupancy, expected);
}

TEST(Voxels, IouAgainstSetArithmetic) {
  const Box box{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const VoxelGrid a = voxelize(random_cloud(60, 10), 8, box);
  const VoxelGrid b = voxelize(random_cloud(60, 11), 8, box);
  std::set<std::size_t> sa, sb, inter, uni;
  for (std::size_t i = 0; i < a.occupancy.size(); ++i) {
    if (a.occupancy[i]) sa.insert(i);
    if (b.occupancy[i]) sb.insert(i);
  }
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(inter, inter.end()));
  std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(uni, uni.end()));
  EXPECT_DOUBLE_EQ(iou(a, b), static_cast<double>(inter.size()) / static_cast<double>(uni.size()));

  const VoxelGrid left = voxelize(PointCloud({{-0.4, -0.4, -0.4}}), 8, box);
  const VoxelGrid right = voxelize(PointCloud({{0.4, 0.4, 0.4}}), 8, box);
  EXPECT_EQ(iou(left, right), 0.0);
  EXPECT_THROW(iou(a, voxelize(random_cloud(5, 1), 4, box)), ContractError);
  VoxelGrid empty = left;
  std::fill(empty.occupancy.begin(), empty.occupancy.end(), 0);
  EXPECT_THROW(iou(empty, empty), DomainError);
}

TEST(Downsample, IdentityEndpointsAndErrors) {
  const PointCloud c = random_cloud(30, 12);
  EXPECT_EQ(downsample(c, 30, DownsampleMethod::fps), c);
  EXPECT_EQ(downsample(c, 30, DownsampleMethod::random, 3), c);
  const PointCloud line({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}});
  EXPECT_EQ(farthest_point_indices(line, 2), (std::vector<std::size_t>{0, 3}));
  EXPECT_THROW(downsample(c, 31, DownsampleMethod::fps), DomainError);
  EXPECT_THROW(downsample(c, 31, DownsampleMethod::random), DomainError);
}

double min_pairwise(const PointCloud& c) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      double s = 0;
      for (std::size_t a = 0; a < 3; ++a) s += (c[i][a] - c[j][a]) * (c[i][a] - c[j][a]);
      best = std::min(best, std::sqrt(s));
    }
  }
  return best;
}

TEST(Downsample, FpsSpreadsBetterThanRandom) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const PointCloud c = random_cloud(200, 400 + trial);
    const auto idx = farthest_point_indices(c, 20);
    for (std::size_t i : idx) EXPECT_LT(i, c.size());
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    const PointCloud fps = c.subset(idx);
    const PointCloud rnd = downsample(c, 20, DownsampleMethod::random, trial);
    EXPECT_GE(min_pairwise(fps), min_pairwise(rnd)) << trial;
  }
}

}  // namespace
}  // namespace patmod::geom
