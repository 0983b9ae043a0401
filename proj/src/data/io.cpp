#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "json.hpp"
#include "patmod/data.hpp"
#include "patmod/error.hpp"

namespace patmod::data {
namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

namespace {

std::string read_text(const std::string& path) {
  const auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

bool parse_double(std::string_view token, double& out) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

void check_writable(const geom::PointCloud& cloud, const char* what) {
  if (cloud.empty()) throw DomainError(std::string(what) + ": empty cloud");
}

}  // namespace

void write_xyz(const geom::PointCloud& cloud, const std::string& path) {
  check_writable(cloud, "write_xyz");
  std::string text;
  text.reserve(cloud.size() * 72);
  char line[96];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud[i];
    const int n = std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    text.append(line, static_cast<std::size_t>(n));
  }
  write_text(path, text);
}

geom::PointCloud read_xyz(const std::string& path) {
  const std::string text = read_text(path);
  std::vector<geom::Vec3> points;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string_view line(text.data() + start, end - start);
    start = end + 1;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    geom::Vec3 p;
    if (tokens.size() != 3 || !parse_double(tokens[0], p[0]) || !parse_double(tokens[1], p[1]) ||
        !parse_double(tokens[2], p[2])) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected three numbers, got '" +
                       std::string(line) + "'");
    }
    points.push_back(p);
  }
  if (points.empty()) throw ParseError(path + ": no points");
  return geom::PointCloud(points);
}

void write_ply(const geom::PointCloud& cloud, const std::string& path) {
  check_writable(cloud, "write_ply");
  const std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                             std::to_string(cloud.size()) +
                             "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(header.size() + 12 * cloud.size());
  for (double v : cloud.flat()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
  }
  write_bytes(path, bytes);
}

geom::PointCloud read_ply(const std::string& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string {
    const auto it = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), '\n');
    if (it == bytes.end()) throw ParseError(path + ": header ends at byte " + std::to_string(pos));
    std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(pos), it);
    pos = static_cast<std::size_t>(it - bytes.begin()) + 1;
    ++line_no;
    return line;
  };
  auto fail = [&](const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
  };

  if (next_line() != "ply") fail("missing 'ply' magic");
  if (next_line() != "format binary_little_endian 1.0") fail("only binary_little_endian 1.0 is supported");
  std::size_t count = 0;
  bool have_count = false;
  std::vector<std::string> properties;
  for (;;) {
    const std::string line = next_line();
    if (line == "end_header") break;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0] == "comment") continue;
    if (tokens[0] == "element") {
      if (tokens.size() != 3 || tokens[1] != "vertex" || have_count) fail("expected a single vertex element");
      auto [ptr, ec] = std::from_chars(tokens[2].data(), tokens[2].data() + tokens[2].size(), count);
      if (ec != std::errc() || ptr != tokens[2].data() + tokens[2].size()) fail("bad vertex count");
      have_count = true;
    } else if (tokens[0] == "property") {
      if (tokens.size() != 3 || tokens[1] != "float") fail("only float properties are supported");
      properties.emplace_back(tokens[2]);
    } else {
      fail("unexpected header line '" + line + "'");
    }
  }
  if (!have_count || properties != std::vector<std::string>{"x", "y", "z"}) {
    fail("expected vertex element with float x, y, z");
  }
  if (bytes.size() - pos != 12 * count) {
    throw ParseError(path + ": payload at byte " + std::to_string(pos) + " holds " +
                     std::to_string(bytes.size() - pos) + " bytes, expected " + std::to_string(12 * count));
  }
  geom::PointCloud cloud(count);
  auto& t = cloud.tensor();
  for (std::size_t i = 0; i < 3 * count; ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[pos + 4 * i + k]) << (8 * k);
    t[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return cloud;
}

std::vector<std::uint8_t> encode_pgm(const num::Tensor& image) {
  std::size_t h = 0, w = 0;
  if (image.rank() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else {
    throw DimensionError("encode_pgm: expected 1xHxW or HxW image, got " + num::shape_str(image.shape()));
  }
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("encode_pgm: pixel value outside [0, 1]");
    out.push_back(static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)));
  }
  return out;
}

num::Tensor decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError("pgm: " + what + " at byte " + std::to_string(pos));
  };
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip();
    const std::size_t begin = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == begin || pos - begin > 9) fail("expected a number");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail("missing P5 magic");
  pos = 2;
  const std::size_t w = number();
  const std::size_t h = number();
  const std::size_t maxval = number();
  if (w == 0 || h == 0) fail("zero image size");
  if (maxval == 0 || maxval > 255) fail("unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("expected whitespace after header");
  ++pos;
  if (bytes.size() - pos != w * h) {
    fail("payload holds " + std::to_string(bytes.size() - pos) + " bytes, expected " + std::to_string(w * h));
  }
  num::Tensor image({1, h, w});
  for (std::size_t i = 0; i < w * h; ++i) {
    image[i] = static_cast<double>(bytes[pos + i]) / static_cast<double>(maxval);
  }
  return image;
}

void write_pgm(const num::Tensor& image, const std::string& path) { write_bytes(path, encode_pgm(image)); }

num::Tensor read_pgm(const std::string& path) {
  try {
    return decode_pgm(read_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

namespace {

std::string sample_stem(const Sample& s, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", index);
  return s.split + "_" + s.class_name + "_" + buf;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "clouds", ec);
  if (!ec) fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir + "': " + ec.message());

  std::string manifest;
  for (const auto* split : {&dataset.train, &dataset.test_seen, &dataset.test_unseen}) {
    std::map<std::string, std::size_t> per_class;
    for (const Sample& s : *split) {
      const std::string stem = sample_stem(s, per_class[s.class_name]++);
      const std::string cloud_rel = "clouds/" + stem + ".xyz";
      const std::string image_rel = "images/" + stem + ".pgm";
      write_xyz(s.cloud, (fs::path(dir) / cloud_rel).string());
      write_pgm(s.image, (fs::path(dir) / image_rel).string());
      nlohmann::ordered_json record;
      record["class"] = s.class_name;
      record["seed"] = s.seed;
      record["cloud_path"] = cloud_rel;
      record["image_path"] = image_rel;
      record["split"] = s.split;
      manifest += record.dump() + "\n";
    }
  }
  write_text((fs::path(dir) / kManifestName).string(), manifest);
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
  const std::string text = read_text(path);
  std::vector<ManifestRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_ws(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.class_name = j.at("class").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.cloud_path = j.at("cloud_path").get<std::string>();
      r.image_path = j.at("image_path").get<std::string>();
      r.split = j.at("split").get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Dataset read_dataset(const std::string& dir, const std::string& only_split) {
  const fs::path root(dir);
  Dataset dataset;
  for (const ManifestRecord& r : read_manifest((root / kManifestName).string())) {
    if (!only_split.empty() && r.split != only_split) continue;
    Sample s;
    s.class_name = r.class_name;
    s.seed = r.seed;
    s.split = r.split;
    s.cloud = read_xyz((root / r.cloud_path).string());
    s.image = read_pgm((root / r.image_path).string());
    if (r.split == "train") {
      dataset.train.push_back(std::move(s));
    } else if (r.split == "test_seen") {
      dataset.test_seen.push_back(std::move(s));
    } else if (r.split == "test_unseen") {
      dataset.test_unseen.push_back(std::move(s));
    } else {
      throw ParseError((root / kManifestName).string() + ": unknown split '" + r.split + "'");
    }
  }
  return dataset;
}

}  // namespace patmod::data
