#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "patmod/error.hpp"
#include "patmod/grad_check.hpp"
#include "patmod/log.hpp"
#include "patmod/model.hpp"
#include "patmod/neighbors.hpp"
#include "patmod/ops.hpp"
#include "test_support.hpp"

namespace patmod::model {
namespace {

using num::Tape;
using num::Tensor;
using num::Var;

num::Tensor image_for(const ModelConfig& c, std::uint64_t seed) {
  return testing::random_tensor({c.image_channels, c.image_size, c.image_size}, seed, 0.0, 1.0);
}

geom::PointCloud cloud_for(std::size_t n, std::uint64_t seed) {
  return geom::PointCloud(testing::random_tensor({n, 3}, seed, -0.45, 0.45));
}

void expect_open_unit(const Tensor& t) {
  for (double v : t.data()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GT(v, -1.0);
    ASSERT_LT(v, 1.0);
  }
}

std::size_t mlp_count(std::size_t in, const std::vector<std::size_t>& widths, std::size_t out) {
  std::size_t total = 0;
  std::size_t w = in;
  for (std::size_t next : widths) {
    total += w * next + next;
    w = next;
  }
  return total + w * out + out;
}

// The default model is shared: building it draws ~12M random weights.
const Model& default_model() {
  static const Model model(ModelConfig{}, 7);
  return model;
}

TEST(ModelConfig, DefaultsMatchReferenceSettings) {
  const ModelConfig c;
  EXPECT_EQ(c.S, 2048u);
  EXPECT_EQ(c.F, 2048u);
  EXPECT_EQ(c.M, 8u);
  EXPECT_EQ(c.N, 8u);
  EXPECT_EQ(c.P, 256u);
  EXPECT_EQ(c.H, 1024u);
  EXPECT_EQ(c.E, 64u);
  EXPECT_EQ(c.region_capacity(), 2048u);
  EXPECT_NO_THROW(c.validate());
}

TEST(ModelConfig, RejectsInvalidSettings) {
  ModelConfig c;
  c.M = 9;
  EXPECT_THROW(c.validate(), DomainError);
  c = ModelConfig{};
  c.F = 1024;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.ablations.no_local = true;
  c.ablations.no_shift = true;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, EntriesRoundTrip) {
  ModelConfig c = ModelConfig::miniature();
  c.sampling_mode = geom::SamplingMode::plane;
  c.ablations.no_patterns = true;
  ModelConfig back;
  for (const auto& [k, v] : config_entries(c)) ASSERT_TRUE(set_entry(back, k, v)) << k;
  EXPECT_EQ(back, c);
  EXPECT_FALSE(set_entry(back, "bogus", "1"));
  EXPECT_THROW(set_entry(back, "M", "eight"), ConfigError);
}

TEST(Encoder, DefaultOutputShapeAndErrors) {
  const Model& m = default_model();
  Tape tape(false);
  Var f = m.encode_image(tape, image_for(m.config(), 1));
  EXPECT_EQ(f.shape(), (num::Shape{1, 1024}));
  EXPECT_THROW(m.encode_image(tape, Tensor({1, 32, 32})), ContractError);
}

TEST(Encoder, ZeroImageIsFiniteAndDeterministic) {
  const Model m(ModelConfig::miniature(), 3);
  Tape a(false), b(false);
  const Tensor zero({1, 8, 8});
  const Var fa = m.encode_image(a, zero);
  EXPECT_TRUE(num::all_finite(fa.value()));
  EXPECT_EQ(fa.value(), m.encode_image(b, zero).value());
}

TEST(Encoder, ConvKernelGradientsMatchFiniteDifferences) {
  Model m(ModelConfig::miniature(), 4);
  const Tensor image = image_for(m.config(), 5);
  const Tensor head = testing::random_tensor({16, 1}, 6);
  std::vector<std::size_t> conv_params;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (m.params()[i].name.find(".conv") != std::string::npos) conv_params.push_back(i);
  }
  ASSERT_EQ(conv_params.size(), 14u);
  const auto result = num::grad_check_parameters(
      m.params(),
      [&](Tape& t) { return num::reduce_sum(num::matmul(m.encode_image(t, image), t.constant(head))); }, 1e-6,
      1e-6, conv_params);
  EXPECT_TRUE(result.passed(1e-4)) << result.max_rel_error;
}

TEST(Decoder, ShapeRangeAndParameterCount) {
  const Model& m = default_model();
  Tape tape(false);
  Var s = m.decode_shape(tape, m.encode_image(tape, image_for(m.config(), 2)));
  EXPECT_EQ(s.shape(), (num::Shape{2048, 3}));
  expect_open_unit(s.value());
  EXPECT_EQ(m.params().scalar_count("decoder."), 1024u * 6144u + 6144u);
  EXPECT_THROW(m.decode_shape(tape, tape.constant(Tensor({1, 8}))), DimensionError);
}

TEST(PatternLearners, IndependentGroupsAndRanges) {
  const Model& m = default_model();
  std::set<std::string> names;
  for (std::size_t n = 0; n < 8; ++n) {
    for (const auto& p : m.params()) {
      if (p.name.rfind("learner." + std::to_string(n) + ".", 0) == 0) names.insert(p.name);
    }
  }
  EXPECT_EQ(names.size(), 8u * 6u);
  Tape tape(false);
  const auto patterns = m.patterns(tape);
  ASSERT_EQ(patterns.size(), 8u);
  for (const Var& p : patterns) {
    EXPECT_EQ(p.shape(), (num::Shape{256, 3}));
    expect_open_unit(p.value());
  }
}

TEST(PatternLearners, SameWeightsDifferentOffsetsGiveDifferentPatterns) {
  Model m(ModelConfig::miniature(), 8);
  for (auto& p : m.params()) {
    const std::string prefix = "learner.0.";
    if (p.name.rfind(prefix, 0) == 0) {
      m.params()[m.params().index_of("learner.1." + p.name.substr(prefix.size()))].value = p.value;
    }
  }
  EXPECT_NE(m.offsets()[0], m.offsets()[1]);
  Tape tape(false);
  const auto patterns = m.patterns(tape);
  EXPECT_NE(patterns[0].value(), patterns[1].value());
}

TEST(PatternLearners, OffsetsAreDistinctAndBounded) {
  const auto offsets = learner_offsets(8, 0.25);
  std::set<geom::Vec3> unique(offsets.begin(), offsets.end());
  EXPECT_EQ(unique.size(), 8u);
  for (const auto& o : offsets) {
    for (double v : o) EXPECT_LE(std::abs(v), 0.25);
  }
}

TEST(RegionEncoder, ShapePermutationAndPaddingInvariance) {
  const Model& m = default_model();
  Tape tape(false);
  const Tensor pts = testing::random_tensor({20, 3}, 9, -0.2, 0.2);
  const std::vector<std::uint8_t> all(20, 1);
  const Var f = m.encode_region(tape, tape.constant(pts), all);
  EXPECT_EQ(f.shape(), (num::Shape{1, 64}));

  std::vector<std::size_t> perm(20);
  for (std::size_t i = 0; i < 20; ++i) perm[i] = (i * 7) % 20;
  const Var permuted = num::gather_rows(tape.constant(pts), perm);
  EXPECT_EQ(m.encode_region(tape, permuted, all).value(), f.value());

  Tensor padded({30, 3});
  for (std::size_t i = 0; i < 60; ++i) padded[i] = pts[i];
  std::vector<std::uint8_t> mask(30, 0);
  std::fill(mask.begin(), mask.begin() + 20, 1);
  EXPECT_EQ(m.encode_region(tape, tape.constant(padded), mask).value(), f.value());

  const Var empty = m.encode_region(tape, tape.constant(padded), std::vector<std::uint8_t>(30, 0));
  EXPECT_EQ(empty.value(), Tensor({1, 64}));
}

TEST(Modularizer, ShapeAndRange) {
  const Model& m = default_model();
  Tape tape(false);
  const auto patterns = m.patterns(tape);
  const Var r = m.modularize(tape, tape.constant(testing::random_tensor({1, 64}, 10, 0, 1)), patterns);
  EXPECT_EQ(r.shape(), (num::Shape{2048, 3}));
  expect_open_unit(r.value());
}

TEST(Modularizer, BlockStructure) {
  Model m(ModelConfig::miniature(), 11);
  const ModelConfig& c = m.config();
  const Tensor f_r = testing::random_tensor({1, c.E}, 12, 0, 1);
  auto run = [&] {
    Tape tape(false);
    return m.modularize(tape, tape.constant(f_r), m.patterns(tape)).value();
  };
  const Tensor before = run();
  for (std::size_t j = 0; j < c.N; ++j) {
    const std::string prefix = "modularizer." + std::to_string(j) + ".";
    const Tensor saved_params = m.params()[m.params().index_of(prefix + "fc1.weight")].value;
    for (double& v : m.params()[m.params().index_of(prefix + "fc1.weight")].value.data()) v += 0.05;
    const Tensor after = run();
    m.params()[m.params().index_of(prefix + "fc1.weight")].value = saved_params;
    for (std::size_t row = 0; row < c.N * c.P; ++row) {
      const bool in_block = row / c.P == j;
      bool same = true;
      for (std::size_t a = 0; a < 3; ++a) same = same && after[3 * row + a] == before[3 * row + a];
      if (!in_block) {
        EXPECT_TRUE(same) << "row " << row << " changed for learner " << j;
      }
    }
  }
  // Gradient view: rows of block 0 do not reach modularizer 1.
  Tape tape;
  Var r = m.modularize(tape, tape.constant(f_r), m.patterns(tape));
  const auto grads = tape.backward(num::reduce_sum(num::slice_rows(r, 0, c.P)));
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (m.params()[i].name.rfind("modularizer.1.", 0) == 0 || m.params()[i].name.rfind("learner.1.", 0) == 0) {
      EXPECT_EQ(grads[i], Tensor(m.params()[i].value.shape())) << m.params()[i].name;
    }
  }
}

TEST(Customizer, ResidualIdentityWhenFinalLayerIsZero) {
  Model m(ModelConfig::miniature(), 13);
  const auto n = m.config().customizer_widths.size() + 1;
  const std::string last = "customizer.fc" + std::to_string(n);
  m.params()[m.params().index_of(last + ".weight")].value.fill(0.0);
  m.params()[m.params().index_of(last + ".bias")].value.fill(0.0);
  Tape tape(false);
  const Tensor r = testing::random_tensor({16, 3}, 14);
  const auto [t, u] = m.customize(tape, tape.constant(r), tape.constant(testing::random_tensor({1, 16}, 15)));
  EXPECT_EQ(t.value(), Tensor({16, 3}));
  EXPECT_EQ(u.value(), r);
}

TEST(Customizer, ShiftRangeAndRowCount) {
  const Model& m = default_model();
  Tape tape(false);
  const Tensor r = testing::random_tensor({2048, 3}, 16, -0.5, 0.5);
  const auto [t, u] = m.customize(tape, tape.constant(r), m.encode_image(tape, image_for(m.config(), 3)));
  EXPECT_EQ(t.rows(), 2048u);
  expect_open_unit(t.value());
  for (std::size_t i = 0; i < r.size(); ++i) ASSERT_EQ(u.value()[i], r[i] + t.value()[i]);
}

TEST(Customizer, GradientMatchesFiniteDifferences) {
  Model m(ModelConfig::miniature(), 17);
  const Tensor r = testing::random_tensor({16, 3}, 18);
  const Tensor f = testing::random_tensor({1, 16}, 19);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (m.params()[i].name.rfind("customizer.", 0) == 0) idx.push_back(i);
  }
  const auto result = num::grad_check_parameters(
      m.params(),
      [&](Tape& t) {
        Var u = m.customize(t, t.constant(r), t.constant(f)).second;
        return num::reduce_sum(num::mul(u, u));
      },
      1e-6, 1e-6, idx);
  EXPECT_TRUE(result.passed(1e-4)) << result.max_rel_error;
}

TEST(ParamCount, MlpComponentsMatchClosedForm) {
  const Model& m = default_model();
  const ParamCounts counts = m.param_count();
  auto get = [&](const std::string& label) {
    for (const auto& [name, n] : counts.components) {
      if (name == label) return n;
    }
    ADD_FAILURE() << "missing component " << label;
    return std::size_t{0};
  };
  for (std::size_t n = 0; n < 8; ++n) {
    EXPECT_EQ(get("learner." + std::to_string(n)), 3u * 64 + 64 + 64 * 256 + 256 + 256 * 3 + 3);
    EXPECT_EQ(get("modularizer." + std::to_string(n)),
              67u * 512 + 512 + 512 * 256 + 256 + 256 * 128 + 128 + 128 * 3 + 3);
  }
  EXPECT_EQ(get("customizer"), 1027u * 512 + 512 + 512 * 128 + 128 + 128 * 3 + 3);
  EXPECT_EQ(get("region_encoder"), 3u * 64 + 64);
  EXPECT_EQ(get("decoder"), 1024u * 6144 + 6144);
  std::size_t sum = 0;
  for (const auto& [name, n] : counts.components) sum += n;
  EXPECT_EQ(sum, counts.total);
  std::printf("[ info ] total trainable scalars %zu (reference model: 31.51M)\n", counts.total);
  EXPECT_EQ(num::ParameterSet{}.scalar_count(), 0u);
}

TEST(ParamCount, MiniatureMatchesGenericFormula) {
  const Model m(ModelConfig::miniature(), 1);
  const ModelConfig& c = m.config();
  EXPECT_EQ(m.params().scalar_count("learner.0."), mlp_count(3, c.learner_widths, 3));
  EXPECT_EQ(m.params().scalar_count("modularizer.1."), mlp_count(3 + c.E, c.modularizer_widths, 3));
  EXPECT_EQ(m.params().scalar_count("customizer."), mlp_count(3 + c.H, c.customizer_widths, 3));
}

class ForwardTest : public ::testing::Test {
 protected:
  void SetUp() override { log::set_level(log::Level::quiet); }
  void TearDown() override { log::set_level(log::Level::warning); }
};

TEST_F(ForwardTest, DefaultTraceShapes) {
  const Model& m = default_model();
  Tape tape(false);
  const geom::PointCloud gt = cloud_for(2048, 20);
  const ForwardTrace tr = m.forward(tape, image_for(m.config(), 4), gt, true);
  EXPECT_EQ(tr.f_I.shape(), (num::Shape{1, 1024}));
  EXPECT_EQ(tr.S_cloud.shape(), (num::Shape{2048, 3}));
  ASSERT_EQ(tr.regions.count(), 8u);
  ASSERT_EQ(tr.f_R.size(), 8u);
  ASSERT_EQ(tr.patterns.size(), 8u);
  std::size_t real = 0;
  for (std::size_t r = 0; r < 8; ++r) {
    EXPECT_EQ(tr.f_R[r].shape(), (num::Shape{1, 64}));
    EXPECT_EQ(tr.R_prime[r].rows(), 2048u);
    EXPECT_EQ(tr.t[r].rows(), 2048u);
    EXPECT_EQ(tr.U[r].rows(), 2048u);
    expect_open_unit(tr.R_prime[r].value());
    expect_open_unit(tr.t[r].value());
    real += tr.regions.regions[r].real_count();
    for (std::size_t i = 0; i < tr.U[r].value().size(); ++i) {
      ASSERT_EQ(tr.U[r].value()[i], tr.R_prime_global[r].value()[i] + tr.t[r].value()[i]);
    }
  }
  EXPECT_EQ(real, 2048u);
  EXPECT_EQ(tr.F_cloud.shape(), (num::Shape{2048, 3}));
}

TEST_F(ForwardTest, KeptRowsAreExactlyTheMaskedRows) {
  const Model m(ModelConfig::miniature(), 21);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tape tape(false);
    const ForwardTrace tr = m.forward(tape, image_for(m.config(), 30 + seed), cloud_for(32, 40 + seed), true);
    std::vector<double> expected;
    for (std::size_t r = 0; r < tr.regions.count(); ++r) {
      const auto& region = tr.regions.regions[r];
      for (std::size_t row = 0; row < region.mask.size(); ++row) {
        if (!region.mask[row]) continue;
        for (std::size_t a = 0; a < 3; ++a) expected.push_back(tr.U[r].value()[3 * row + a]);
      }
    }
    const auto data = tr.F_cloud.value().data();
    EXPECT_EQ(std::vector<double>(data.begin(), data.end()), expected);
  }
}

TEST_F(ForwardTest, LiveRowPathMatchesFullRows) {
  const Model m(ModelConfig::miniature(), 22);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor image = image_for(m.config(), 50 + seed);
    const geom::PointCloud gt = cloud_for(32, 60 + seed);
    Tape full(false), live(false);
    const ForwardTrace a = m.forward(full, image, gt, true);
    const ForwardTrace b = m.forward(live, image, gt, false);
    EXPECT_EQ(a.F_cloud.value(), b.F_cloud.value());
    for (std::size_t r = 0; r < a.regions.count(); ++r) {
      const std::size_t k = a.regions.regions[r].real_count();
      ASSERT_EQ(b.U[r].rows(), k);
      for (std::size_t i = 0; i < 3 * k; ++i) ASSERT_EQ(a.U[r].value()[i], b.U[r].value()[i]);
    }
  }
}

TEST_F(ForwardTest, InferenceSplitsOverOwnPrediction) {
  const Model m(ModelConfig::miniature(), 23);
  const Tensor image = image_for(m.config(), 70);
  Tape a(false), b(false);
  const ForwardTrace inferred = m.infer(a, image);
  const ForwardTrace guided = m.forward(b, image, geom::PointCloud(inferred.S_cloud.value()));
  EXPECT_EQ(inferred.F_cloud.value(), guided.F_cloud.value());
  Tape c(false);
  EXPECT_EQ(m.infer(c, image).F_cloud.value(), inferred.F_cloud.value());
}

TEST_F(ForwardTest, NoShiftOnlyRemovesTheShift) {
  ModelConfig cfg = ModelConfig::miniature();
  const Model full(cfg, 24);
  cfg.ablations.no_shift = true;
  Model shifted_off(cfg, 24);
  const Tensor image = image_for(cfg, 80);
  const geom::PointCloud gt = cloud_for(32, 81);
  Tape ta(false), tb(false);
  const ForwardTrace a = full.forward(ta, image, gt, true);
  const ForwardTrace b = shifted_off.forward(tb, image, gt, true);
  EXPECT_EQ(a.S_cloud.value(), b.S_cloud.value());
  std::vector<double> expected;
  for (std::size_t r = 0; r < b.regions.count(); ++r) {
    EXPECT_EQ(a.R_prime[r].value(), b.R_prime[r].value());
    EXPECT_EQ(b.t[r].value(), Tensor(b.t[r].shape()));
    EXPECT_EQ(b.U[r].value(), b.R_prime_global[r].value());
    for (std::size_t row = 0; row < b.regions.regions[r].real_count(); ++row) {
      for (std::size_t k = 0; k < 3; ++k) expected.push_back(b.R_prime_global[r].value()[3 * row + k]);
    }
  }
  const auto data = b.F_cloud.value().data();
  EXPECT_EQ(std::vector<double>(data.begin(), data.end()), expected);
}

TEST_F(ForwardTest, NoLocalReturnsInitialPrediction) {
  ModelConfig cfg = ModelConfig::miniature();
  cfg.ablations.no_local = true;
  const Model m(cfg, 25);
  Tape tape(false);
  const ForwardTrace tr = m.infer(tape, image_for(cfg, 90));
  EXPECT_FALSE(tr.local);
  EXPECT_EQ(tr.F_cloud.value(), tr.S_cloud.value());
}

TEST_F(ForwardTest, NoPatternsFeedsRegionPointsToCustomizer) {
  ModelConfig cfg = ModelConfig::miniature();
  cfg.ablations.no_patterns = true;
  const Model m(cfg, 26);
  Tape tape(false);
  const geom::PointCloud gt = cloud_for(32, 91);
  const ForwardTrace tr = m.forward(tape, image_for(cfg, 92), gt, true);
  EXPECT_TRUE(tr.patterns.empty());
  for (std::size_t r = 0; r < tr.regions.count(); ++r) {
    const auto& region = tr.regions.regions[r];
    for (std::size_t row = 0; row < region.real_count(); ++row) {
      for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_NEAR(tr.R_prime_global[r].value()[3 * row + a],
                    tr.S_cloud.value()[3 * region.source_rows[row] + a], 1e-12);
      }
    }
  }
}

TEST_F(ForwardTest, PatternsDoNotDependOnTheSample) {
  const Model m(ModelConfig::miniature(), 27);
  Tape a(false), b(false);
  const ForwardTrace x = m.infer(a, image_for(m.config(), 1));
  const ForwardTrace y = m.infer(b, image_for(m.config(), 2));
  for (std::size_t n = 0; n < x.patterns.size(); ++n) EXPECT_EQ(x.patterns[n].value(), y.patterns[n].value());
}

TEST_F(ForwardTest, EndToEndGradientCheckOnMiniature) {
  Model m(ModelConfig::miniature(), 28);
  const Tensor image = image_for(m.config(), 100);
  const geom::PointCloud gt = cloud_for(32, 101);
  const auto result = num::grad_check_parameters(m.params(), [&](Tape& t) {
    const ForwardTrace tr = m.forward(t, image, gt);
    Var g = t.constant(gt.tensor());
    return num::add(geom::chamfer(tr.F_cloud, g), num::scale(geom::chamfer(tr.S_cloud, g), 0.1));
  }, 1e-6, 1e-4);
  EXPECT_EQ(result.checked, m.params().scalar_count());
  EXPECT_TRUE(result.passed(1e-4)) << result.max_rel_error << " at scalar " << result.worst_index;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelConfig cfg = ModelConfig::miniature();
  cfg.ablations.no_shift = true;
  const Model m(cfg, 29);
  const auto bytes = serialize_checkpoint(m);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PMOD");
  const Model back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.config(), cfg);
  ASSERT_EQ(back.params().size(), m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_EQ(back.params()[i].name, m.params()[i].name);
    EXPECT_EQ(back.params()[i].value, m.params()[i].value);
  }
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  const std::string path = ::testing::TempDir() + "/model_test.pmod";
  save_checkpoint(m, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), bytes);
  std::remove(path.c_str());
}

TEST(Checkpoint, MalformedInputsAreRejected) {
  const Model m(ModelConfig::miniature(), 30);
  auto bytes = serialize_checkpoint(m);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), ParseError);
  EXPECT_THROW(deserialize_checkpoint({bytes.begin(), bytes.begin() + bytes.size() / 2}), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.pmod"), IoError);

  ModelConfig other = ModelConfig::miniature();
  other.E = 4;
  Model different(other, 1);
  const std::string path = ::testing::TempDir() + "/model_test_mismatch.pmod";
  save_checkpoint(m, path);
  try {
    load_parameters_into(different, path);
    ADD_FAILURE() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[3x8]"), std::string::npos) << what;
    EXPECT_NE(what.find("[3x4]"), std::string::npos) << what;
  }
  std::remove(path.c_str());
}

}  // namespace
}  // namespace patmod::model
