#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "patmod/error.hpp"
#include "patmod/model.hpp"

namespace patmod::model {
namespace {

constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& data) : data_(data) {}
  const std::uint8_t* take(std::size_t n) {
    if (n > data_.size() - pos_) {
      throw ParseError("checkpoint truncated at byte " + std::to_string(pos_) + " (needed " +
                       std::to_string(n) + " more bytes)");
    }
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T uint() {
    const std::uint8_t* p = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t pos_ = 0;
};

struct StoredParam {
  std::string name;
  num::Tensor value;
};

std::string config_text(const ModelConfig& config) {
  std::string text;
  for (const auto& [k, v] : config_entries(config)) text += k + "=" + v + "\n";
  return text;
}

ModelConfig parse_config_text(const std::string& text) {
  ModelConfig config;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || !set_entry(config, line.substr(0, eq), line.substr(eq + 1))) {
      throw ParseError("checkpoint config block: bad entry '" + line + "'");
    }
  }
  return config;
}

std::pair<ModelConfig, std::vector<StoredParam>> parse(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, "PMOD", 4) != 0) throw ParseError("checkpoint: bad magic at byte 0");
  const auto version = r.uint<std::uint16_t>();
  if (version != kVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version) + " at byte 4");
  }
  ModelConfig config = parse_config_text(r.str());
  const auto count = r.uint<std::uint32_t>();
  std::vector<StoredParam> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredParam p;
    p.name = r.str();
    const auto rank = r.uint<std::uint32_t>();
    if (rank > 8) throw ParseError("checkpoint: implausible rank at byte " + std::to_string(r.pos()));
    num::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.uint<std::uint64_t>());
    p.value = num::Tensor(shape);
    for (double& v : p.value.data()) v = r.f64();
    params.push_back(std::move(p));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes at " + std::to_string(r.pos()));
  return {std::move(config), std::move(params)};
}

void copy_into(Model& model, const std::vector<StoredParam>& stored) {
  num::ParameterSet& params = model.params();
  if (stored.size() != params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(stored.size()) + " parameters, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < stored.size(); ++i) {
    if (stored[i].name != params[i].name || stored[i].value.shape() != params[i].value.shape()) {
      throw ConfigError("checkpoint parameter '" + stored[i].name + "' " +
                        num::shape_str(stored[i].value.shape()) + " does not match model parameter '" +
                        params[i].name + "' " + num::shape_str(params[i].value.shape()));
    }
    params[i].value = stored[i].value;
  }
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  Writer w;
  w.bytes("PMOD", 4);
  w.uint(kVersion);
  w.str(config_text(model.config()));
  const num::ParameterSet& params = model.params();
  w.uint(static_cast<std::uint32_t>(params.size()));
  for (const num::Parameter& p : params) {
    w.str(p.name);
    w.uint(static_cast<std::uint32_t>(p.value.shape().size()));
    for (std::size_t d : p.value.shape()) w.uint(static_cast<std::uint64_t>(d));
    for (double v : p.value.data()) w.f64(v);
  }
  return std::move(w.out);
}

Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  auto [config, stored] = parse(bytes);
  Model model(config, 0);
  copy_into(model, stored);
  return model;
}

void save_checkpoint(const Model& model, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

void load_parameters_into(Model& model, const std::string& path) {
  copy_into(model, parse(read_file(path)).second);
}

}  // namespace patmod::model
