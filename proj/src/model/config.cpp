#include <charconv>
#include <cmath>
#include <sstream>

#include "patmod/error.hpp"
#include "patmod/model.hpp"

namespace patmod::model {

std::size_t parse_size(const std::string& key, const std::string& text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

double parse_number(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(value)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

namespace {

const char* bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

void Ablations::validate() const {
  if (no_local && (no_patterns || no_shift || no_l_region || no_l_shape)) {
    throw ConfigError("ablation no_local cannot be combined with other ablation flags");
  }
}

void ModelConfig::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  need(S > 0 && F > 0, "S and F must be positive");
  need(S == F, "S must equal F");
  need(N > 0 && P > 0 && H > 0 && E > 0, "N, P, H and E must be positive");
  geom::cube_root(M);
  need(image_size > 0 && image_channels > 0, "image size and channels must be positive");
  need(!conv_channels.empty() && conv_channels.size() == conv_strides.size(),
       "conv_channels and conv_strides must be nonempty and of equal length");
  for (std::size_t s : conv_strides) need(s > 0, "conv strides must be positive");
  for (std::size_t c : conv_channels) need(c > 0, "conv channels must be positive");
  need(encoder_fc > 0, "encoder_fc must be positive");
  for (const auto* widths : {&learner_widths, &modularizer_widths, &customizer_widths}) {
    for (std::size_t w : *widths) need(w > 0, "hidden widths must be positive");
  }
  need(pattern_extent > 0.0, "pattern_extent must be positive");
  need(offset_extent >= 0.0, "offset_extent must be non-negative");
  ablations.validate();
}

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.S = c.F = 32;
  c.M = 8;
  c.N = 2;
  c.P = 8;
  c.H = 16;
  c.E = 8;
  c.image_size = 8;
  c.conv_channels = {8, 8, 8, 8, 8, 8, 8};
  c.encoder_fc = 8;
  c.learner_widths = {6, 8};
  c.modularizer_widths = {8, 6, 4};
  c.customizer_widths = {8, 4};
  return c;
}

std::string format_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t stop = comma == std::string::npos ? text.size() : comma;
    out.push_back(parse_size(key, text.substr(start, stop - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c) {
  return {
      {"S", std::to_string(c.S)},
      {"F", std::to_string(c.F)},
      {"M", std::to_string(c.M)},
      {"N", std::to_string(c.N)},
      {"P", std::to_string(c.P)},
      {"H", std::to_string(c.H)},
      {"E", std::to_string(c.E)},
      {"image_size", std::to_string(c.image_size)},
      {"image_channels", std::to_string(c.image_channels)},
      {"sampling_mode", c.sampling_mode == geom::SamplingMode::voxel ? "voxel" : "plane"},
      {"pattern_extent", format_number(c.pattern_extent)},
      {"offset_extent", format_number(c.offset_extent)},
      {"conv_channels", format_list(c.conv_channels)},
      {"conv_strides", format_list(c.conv_strides)},
      {"encoder_fc", std::to_string(c.encoder_fc)},
      {"learner_widths", format_list(c.learner_widths)},
      {"modularizer_widths", format_list(c.modularizer_widths)},
      {"customizer_widths", format_list(c.customizer_widths)},
      {"no_local", bool_str(c.ablations.no_local)},
      {"no_patterns", bool_str(c.ablations.no_patterns)},
      {"no_shift", bool_str(c.ablations.no_shift)},
      {"no_l_region", bool_str(c.ablations.no_l_region)},
      {"no_l_shape", bool_str(c.ablations.no_l_shape)},
  };
}

bool set_entry(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "S") c.S = parse_size(key, value);
  else if (key == "F") c.F = parse_size(key, value);
  else if (key == "M") c.M = parse_size(key, value);
  else if (key == "N") c.N = parse_size(key, value);
  else if (key == "P") c.P = parse_size(key, value);
  else if (key == "H") c.H = parse_size(key, value);
  else if (key == "E") c.E = parse_size(key, value);
  else if (key == "image_size") c.image_size = parse_size(key, value);
  else if (key == "image_channels") c.image_channels = parse_size(key, value);
  else if (key == "sampling_mode") {
    if (value == "voxel") c.sampling_mode = geom::SamplingMode::voxel;
    else if (value == "plane") c.sampling_mode = geom::SamplingMode::plane;
    else throw ConfigError("config key 'sampling_mode': expected voxel or plane, got '" + value + "'");
  } else if (key == "pattern_extent") c.pattern_extent = parse_number(key, value);
  else if (key == "offset_extent") c.offset_extent = parse_number(key, value);
  else if (key == "conv_channels") c.conv_channels = parse_list(key, value);
  else if (key == "conv_strides") c.conv_strides = parse_list(key, value);
  else if (key == "encoder_fc") c.encoder_fc = parse_size(key, value);
  else if (key == "learner_widths") c.learner_widths = parse_list(key, value);
  else if (key == "modularizer_widths") c.modularizer_widths = parse_list(key, value);
  else if (key == "customizer_widths") c.customizer_widths = parse_list(key, value);
  else if (key == "no_local") c.ablations.no_local = parse_bool(key, value);
  else if (key == "no_patterns") c.ablations.no_patterns = parse_bool(key, value);
  else if (key == "no_shift") c.ablations.no_shift = parse_bool(key, value);
  else if (key == "no_l_region") c.ablations.no_l_region = parse_bool(key, value);
  else if (key == "no_l_shape") c.ablations.no_l_shape = parse_bool(key, value);
  else return false;
  return true;
}

}  // namespace patmod::model
