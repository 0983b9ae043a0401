#include <set>

#include "patmod/cli.hpp"
#include "patmod/error.hpp"

namespace patmod::cli {
namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t stop = comma == std::string::npos ? text.size() : comma;
    if (stop > start) out.push_back(text.substr(start, stop - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> out = model::config_entries(c.model);
  for (auto& e : train::config_entries(c.train)) out.push_back(std::move(e));
  out.emplace_back("seen_classes", join(c.dataset.seen));
  out.emplace_back("unseen_classes", join(c.dataset.unseen));
  out.emplace_back("train_per_class", std::to_string(c.dataset.train_per_class));
  out.emplace_back("test_per_class", std::to_string(c.dataset.test_per_class));
  out.emplace_back("data_seed", std::to_string(c.dataset.seed));
  out.emplace_back("points", std::to_string(c.dataset.points));
  out.emplace_back("data_dir", c.data_dir);
  out.emplace_back("out_dir", c.out_dir);
  return out;
}

void set_entry(RunConfig& c, const std::string& key, const std::string& value) {
  if (model::set_entry(c.model, key, value)) {
    if (key == "image_size") c.dataset.image_size = c.model.image_size;
    return;
  }
  if (train::set_entry(c.train, key, value)) return;
  if (key == "seen_classes") c.dataset.seen = split_names(value);
  else if (key == "unseen_classes") c.dataset.unseen = split_names(value);
  else if (key == "train_per_class") c.dataset.train_per_class = model::parse_size(key, value);
  else if (key == "test_per_class") c.dataset.test_per_class = model::parse_size(key, value);
  else if (key == "data_seed") c.dataset.seed = model::parse_size(key, value);
  else if (key == "points") c.dataset.points = model::parse_size(key, value);
  else if (key == "data_dir") c.data_dir = value;
  else if (key == "out_dir") c.out_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string line = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      set_entry(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  const auto bytes = data::read_bytes(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()), path);
}

std::string format_run_config(const RunConfig& config) {
  std::string text = "# resolved configuration\n";
  for (const auto& [k, v] : config_entries(config)) text += k + "=" + v + "\n";
  return text;
}

void validate(const RunConfig& c) {
  c.model.validate();
  c.train.validate();
  c.dataset.validate();
  if (c.dataset.image_size != c.model.image_size) {
    throw ConfigError("dataset image size " + std::to_string(c.dataset.image_size) +
                      " differs from model image_size " + std::to_string(c.model.image_size));
  }
  if (c.model.image_channels != 1) throw ConfigError("rendered images are grayscale; image_channels must be 1");
}

}  // namespace patmod::cli
