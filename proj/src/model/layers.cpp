#include <cmath>

#include "patmod/error.hpp"
#include "patmod/model.hpp"
#include "patmod/ops.hpp"
#include "patmod/rng.hpp"

namespace patmod::model {
namespace {

double radical_inverse(std::size_t index, std::size_t base) {
  double result = 0.0;
  double f = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= static_cast<double>(base);
  }
  return result;
}

std::size_t conv_out(std::size_t in, std::size_t stride) { return (in + 2 - 3) / stride + 1; }

double relu_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }
// Nonzero biases keep single-point regions (centered exactly at 0) off the ReLU kink.
double bias_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }
double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

num::Tensor uniform_tensor(num::Shape shape, double bound, Rng& rng) {
  num::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

std::vector<geom::Vec3> learner_offsets(std::size_t n, double extent) {
  std::vector<geom::Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = {(2.0 * radical_inverse(i + 1, 2) - 1.0) * extent,
              (2.0 * radical_inverse(i + 1, 3) - 1.0) * extent,
              (2.0 * radical_inverse(i + 1, 5) - 1.0) * extent};
  }
  return out;
}

Linear Model::make_linear(const std::string& name, std::size_t in, std::size_t out, double bound) {
  Rng rng(derive_seed(init_seed_, name, 0));
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = params_.add(name + ".weight", uniform_tensor({in, out}, bound, rng));
  l.bias = params_.add(name + ".bias", uniform_tensor({1, out}, bias_bound(in), rng));
  return l;
}

namespace {

// Hidden layers use ReLU; the last layer uses `last`.
Mlp build_mlp(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
              std::size_t out, Activation last,
              const std::function<Linear(const std::string&, std::size_t, std::size_t, double)>& make) {
  Mlp mlp;
  std::size_t width = in;
  for (std::size_t i = 0; i <= hidden.size(); ++i) {
    const bool final_layer = i == hidden.size();
    const std::size_t next = final_layer ? out : hidden[i];
    const Activation act = final_layer ? last : Activation::relu;
    const double bound = act == Activation::relu ? relu_bound(width) : glorot_bound(width, next);
    mlp.layers.push_back(make(prefix + ".fc" + std::to_string(i + 1), width, next, bound));
    mlp.activations.push_back(act);
    width = next;
  }
  return mlp;
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), init_seed_(seed) {
  config_.validate();
  const ModelConfig& c = config_;
  auto make = [this](const std::string& name, std::size_t in, std::size_t out, double bound) {
    return make_linear(name, in, out, bound);
  };

  std::size_t channels = c.image_channels;
  std::size_t side = c.image_size;
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
    const std::string name = "encoder.conv" + std::to_string(i + 1);
    Rng rng(derive_seed(seed, name, 0));
    const std::size_t out = c.conv_channels[i];
    ConvLayer layer;
    layer.kernel = params_.add(name + ".kernel",
                               uniform_tensor({out, channels, 3, 3}, relu_bound(channels * 9), rng));
    layer.bias = params_.add(name + ".bias", uniform_tensor({out}, bias_bound(channels * 9), rng));
    layer.stride = c.conv_strides[i];
    conv_.push_back(layer);
    channels = out;
    side = conv_out(side, layer.stride);
  }
  encoder_fc_ = build_mlp("encoder", channels * side * side, {c.encoder_fc}, c.H, Activation::none, make);
  decoder_ = build_mlp("decoder", c.H, {}, 3 * c.S, Activation::tanh, make);
  for (std::size_t n = 0; n < c.N; ++n) {
    learners_.push_back(
        build_mlp("learner." + std::to_string(n), 3, c.learner_widths, 3, Activation::tanh, make));
  }
  region_fc_ = make_linear("region_encoder.fc1", 3, c.E, relu_bound(3));
  for (std::size_t n = 0; n < c.N; ++n) {
    modularizers_.push_back(build_mlp("modularizer." + std::to_string(n), 3 + c.E,
                                      c.modularizer_widths, 3, Activation::tanh, make));
  }
  customizer_ = build_mlp("customizer", 3 + c.H, c.customizer_widths, 3, Activation::tanh, make);

  offsets_ = learner_offsets(c.N, c.offset_extent);
  lattice_ = geom::grid_lattice(c.P, c.pattern_extent, c.sampling_mode);
}

num::Var Model::apply(num::Tape& tape, const Mlp& mlp, num::Var x, std::size_t first) const {
  for (std::size_t i = first; i < mlp.layers.size(); ++i) {
    const Linear& l = mlp.layers[i];
    x = num::linear(x, tape.parameter(params_, l.weight), tape.parameter(params_, l.bias));
    switch (mlp.activations[i]) {
      case Activation::relu: x = num::relu(x); break;
      case Activation::tanh: x = num::tanh(x); break;
      case Activation::none: break;
    }
  }
  return x;
}

num::Var Model::encode_image(num::Tape& tape, const num::Tensor& image) const {
  const ModelConfig& c = config_;
  const num::Shape expected{c.image_channels, c.image_size, c.image_size};
  if (image.shape() != expected) {
    throw ContractError("encode_image: expected image " + num::shape_str(expected) + ", got " +
                        num::shape_str(image.shape()));
  }
  num::Var x = tape.constant(image);
  for (const ConvLayer& layer : conv_) {
    x = num::relu(num::conv2d(x, tape.parameter(params_, layer.kernel), tape.parameter(params_, layer.bias),
                              layer.stride, 1));
  }
  x = num::reshape(x, {1, num::shape_size(x.shape())});
  return apply(tape, encoder_fc_, x);
}

num::Var Model::decode_shape(num::Tape& tape, num::Var f_I) const {
  if (f_I.shape() != num::Shape{1, config_.H}) {
    throw DimensionError("decode_shape: expected f_I [1x" + std::to_string(config_.H) + "], got " +
                         num::shape_str(f_I.shape()));
  }
  return num::reshape(apply(tape, decoder_, f_I), {config_.S, 3});
}

std::vector<num::Var> Model::patterns(num::Tape& tape) const {
  std::vector<num::Var> out;
  out.reserve(config_.N);
  for (std::size_t n = 0; n < config_.N; ++n) {
    num::Tensor input = lattice_;
    for (std::size_t i = 0; i < config_.P; ++i) {
      for (std::size_t a = 0; a < 3; ++a) input[3 * i + a] += offsets_[n][a];
    }
    out.push_back(apply(tape, learners_[n], tape.constant(std::move(input))));
  }
  return out;
}

num::Var Model::encode_region(num::Tape& tape, num::Var points, const std::vector<std::uint8_t>& mask) const {
  if (points.shape().size() != 2 || points.cols() != 3 || mask.size() != points.rows()) {
    throw DimensionError("encode_region: expected nx3 points with a length-n mask, got " +
                         num::shape_str(points.shape()) + " and mask of " + std::to_string(mask.size()));
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) rows.push_back(i);
  }
  if (rows.empty()) return tape.constant(num::Tensor({1, config_.E}));
  num::Var h = num::linear(num::gather_rows(points, rows), tape.parameter(params_, region_fc_.weight),
                           tape.parameter(params_, region_fc_.bias));
  return num::max_pool_rows(num::relu(h)).values;
}

num::Var Model::modularize(num::Tape& tape, num::Var f_R, const std::vector<num::Var>& patterns) const {
  const ModelConfig& c = config_;
  if (patterns.size() != c.N || f_R.shape() != num::Shape{1, c.E}) {
    throw DimensionError("modularize: expected " + std::to_string(c.N) + " patterns and f_R [1x" +
                         std::to_string(c.E) + "], got " + std::to_string(patterns.size()) + " and " +
                         num::shape_str(f_R.shape()));
  }
  std::vector<num::Var> blocks;
  for (std::size_t n = 0; n < c.N; ++n) {
    const Linear& first = modularizers_[n].layers[0];
    num::Var w = tape.parameter(params_, first.weight);
    num::Var pw = num::matmul(patterns[n], num::slice_rows(w, 0, 3));
    num::Var fw = num::matmul(f_R, num::slice_rows(w, 3, 3 + c.E));
    num::Var x = num::add(num::add(pw, num::repeat_rows(fw, c.P)), tape.parameter(params_, first.bias));
    blocks.push_back(apply(tape, modularizers_[n], num::relu(x), 1));
  }
  return num::concat(blocks, 0);
}

std::pair<num::Var, num::Var> Model::customize(num::Tape& tape, num::Var r_prime, num::Var f_I) const {
  const Linear& first = customizer_.layers[0];
  num::Var w = tape.parameter(params_, first.weight);
  num::Var row = num::add(num::matmul(f_I, num::slice_rows(w, 3, 3 + config_.H)),
                          tape.parameter(params_, first.bias));
  num::Var x = num::add(num::matmul(r_prime, num::slice_rows(w, 0, 3)), row);
  num::Var t = apply(tape, customizer_, num::relu(x), 1);
  return {t, num::add(r_prime, t)};
}

ParamCounts Model::param_count() const {
  ParamCounts counts;
  auto add = [&](const std::string& label, const std::string& prefix) {
    counts.components.emplace_back(label, params_.scalar_count(prefix));
  };
  add("encoder", "encoder.");
  add("decoder", "decoder.");
  for (std::size_t n = 0; n < config_.N; ++n) add("learner." + std::to_string(n), "learner." + std::to_string(n) + ".");
  add("region_encoder", "region_encoder.");
  for (std::size_t n = 0; n < config_.N; ++n) {
    add("modularizer." + std::to_string(n), "modularizer." + std::to_string(n) + ".");
  }
  add("customizer", "customizer.");
  counts.total = params_.scalar_count();
  return counts;
}

}  // namespace patmod::model
