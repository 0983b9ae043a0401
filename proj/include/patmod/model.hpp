#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "patmod/geometry.hpp"
#include "patmod/tape.hpp"

namespace patmod::model {

/// Ablation switches. no_local cannot be combined with any other flag.
struct Ablations {
  bool no_local = false;
  bool no_patterns = false;
  bool no_shift = false;
  bool no_l_region = false;
  bool no_l_shape = false;

  void validate() const;
  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct ModelConfig {
  std::size_t S = 2048;
  std::size_t F = 2048;
  std::size_t M = 8;
  std::size_t N = 8;
  std::size_t P = 256;
  std::size_t H = 1024;
  std::size_t E = 64;
  std::size_t image_size = 64;
  std::size_t image_channels = 1;
  geom::SamplingMode sampling_mode = geom::SamplingMode::voxel;
  double pattern_extent = 0.5;
  double offset_extent = 0.25;

  std::vector<std::size_t> conv_channels{16, 32, 32, 64, 64, 128, 128};
  std::vector<std::size_t> conv_strides{2, 1, 2, 1, 2, 1, 2};
  std::size_t encoder_fc = 1024;
  std::vector<std::size_t> learner_widths{64, 256};
  std::vector<std::size_t> modularizer_widths{512, 256, 128};
  std::vector<std::size_t> customizer_widths{512, 128};

  Ablations ablations;

  std::size_t region_capacity() const { return N * P; }
  /// Throws ConfigError (or DomainError for a non-cube M) on invalid settings.
  void validate() const;
  /// Gradient-check sized configuration: S=F=32, M=8, N=2, P=8, H=16, E=8, 8x8 image.
  static ModelConfig miniature();
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Ordered key=value view of a config; the same keys are accepted by set_entry.
std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& config);
/// Returns false for unknown keys; throws ConfigError on malformed values.
bool set_entry(ModelConfig& config, const std::string& key, const std::string& value);

/// Value parsers shared by every key=value config; ConfigError names the key.
std::size_t parse_size(const std::string& key, const std::string& text);
double parse_number(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);
/// 17 significant digits, so parse_number(format_number(v)) == v.
std::string format_number(double v);

std::string format_list(const std::vector<std::size_t>& values);
std::vector<std::size_t> parse_list(const std::string& key, const std::string& text);

/// Fully connected layer stored as an in x out weight and a 1 x out bias.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;
};

enum class Activation { none, relu, tanh };

struct Mlp {
  std::vector<Linear> layers;
  std::vector<Activation> activations;
};

struct ConvLayer {
  std::size_t kernel = 0;
  std::size_t bias = 0;
  std::size_t stride = 1;
};

/// N learner offsets (Halton points scaled to [-extent, extent]^3).
std::vector<geom::Vec3> learner_offsets(std::size_t n, double extent);

struct ForwardTrace {
  num::Var f_I;
  num::Var S_cloud;
  geom::RegionSet regions;
  std::vector<num::Var> patterns;
  /// Per region, 1 x E.
  std::vector<num::Var> f_R;
  /// Per region rows of R'_m (local frame), t_m and U_m. With full_rows these
  /// hold all N*P rows; otherwise only the rows that survive removal.
  std::vector<num::Var> R_prime;
  /// R'_m after decentering into the object frame (customizer input).
  std::vector<num::Var> R_prime_global;
  std::vector<num::Var> t;
  std::vector<num::Var> U;
  num::Var F_cloud;
  bool full_rows = false;
  bool local = true;
};

struct ParamCounts {
  std::vector<std::pair<std::string, std::size_t>> components;
  std::size_t total = 0;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  num::ParameterSet& params() { return params_; }
  const num::ParameterSet& params() const { return params_; }
  const std::vector<geom::Vec3>& offsets() const { return offsets_; }
  const num::Tensor& base_lattice() const { return lattice_; }

  /// image: C x H x W. Returns 1 x H.
  num::Var encode_image(num::Tape& tape, const num::Tensor& image) const;
  /// 1 x H -> S x 3.
  num::Var decode_shape(num::Tape& tape, num::Var f_I) const;
  /// N patterns, each P x 3.
  std::vector<num::Var> patterns(num::Tape& tape) const;
  /// Centered padded region (rows x 3) with its real-row mask -> 1 x E.
  num::Var encode_region(num::Tape& tape, num::Var points, const std::vector<std::uint8_t>& mask) const;
  /// One region: f_R (1 x E) -> R'_m, N*P x 3 in pattern order.
  num::Var modularize(num::Tape& tape, num::Var f_R, const std::vector<num::Var>& patterns) const;
  /// R'_m in the object frame plus f_I -> (t_m, U_m).
  std::pair<num::Var, num::Var> customize(num::Tape& tape, num::Var r_prime, num::Var f_I) const;

  /// Training forward: regions split over the ground-truth box.
  ForwardTrace forward(num::Tape& tape, const num::Tensor& image, const geom::PointCloud& ground_truth,
                       bool full_rows = false) const;
  /// Inference forward: regions split over the model's own initial prediction.
  ForwardTrace infer(num::Tape& tape, const num::Tensor& image, bool full_rows = false) const;
  /// Inference from a given latent code (latent interpolation).
  ForwardTrace infer_from_latent(num::Tape& tape, num::Var f_I, bool full_rows = false) const;

  ParamCounts param_count() const;

 private:
  ForwardTrace run(num::Tape& tape, num::Var f_I, const geom::Box& box, bool full_rows) const;
  num::Var apply(num::Tape& tape, const Mlp& mlp, num::Var x, std::size_t first = 0) const;
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out, double bound);

  ModelConfig config_;
  num::ParameterSet params_;
  std::vector<ConvLayer> conv_;
  Mlp encoder_fc_;
  Mlp decoder_;
  std::vector<Mlp> learners_;
  Linear region_fc_;
  std::vector<Mlp> modularizers_;
  Mlp customizer_;
  std::vector<geom::Vec3> offsets_;
  num::Tensor lattice_;
  std::uint64_t init_seed_ = 0;
};

/// Checkpoint file: "PMOD", u16 version, config block, parameters.
void save_checkpoint(const Model& model, const std::string& path);
/// Throws IoError / ParseError on unreadable files and ConfigError when the
/// stored parameters do not match the stored config.
Model load_checkpoint(const std::string& path);
std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
/// Copies parameter values from a checkpoint into a model built from an
/// external config; ConfigError (naming both shapes) on mismatch.
void load_parameters_into(Model& model, const std::string& path);

}  // namespace patmod::model
