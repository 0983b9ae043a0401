#include <algorithm>
#include <set>

#include "patmod/data.hpp"
#include "patmod/error.hpp"
#include "patmod/rng.hpp"

namespace patmod::data {

void DatasetConfig::validate() const {
  if (seen.empty()) throw ConfigError("dataset: at least one seen class is required");
  std::set<std::string> names;
  for (const auto* list : {&seen, &unseen}) {
    for (const std::string& name : *list) {
      parse_kind(name);
      if (!names.insert(name).second) {
        throw ConfigError("dataset: class '" + name + "' listed twice (seen and unseen must be disjoint)");
      }
    }
  }
  if (train_per_class == 0 || test_per_class == 0) throw ConfigError("dataset: sample counts must be >= 1");
  if (points == 0) throw ConfigError("dataset: points must be >= 1");
  if (image_size == 0) throw ConfigError("dataset: image_size must be >= 1");
}

const std::vector<Sample>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "test_seen" || name == "seen") return test_seen;
  if (name == "test_unseen" || name == "unseen") return test_unseen;
  throw ConfigError("unknown split '" + name + "' (expected train, seen or unseen)");
}

std::uint64_t sample_seed(std::uint64_t master, const std::string& class_name, const std::string& split,
                          std::size_t index) {
  return derive_seed(master, class_name + "/" + split, index);
}

Sample make_sample(const std::string& class_name, std::uint64_t seed, const std::string& split,
                   std::size_t points, std::size_t image_size) {
  Sample s;
  s.class_name = class_name;
  s.seed = seed;
  s.split = split;
  s.cloud = generate_shape(parse_kind(class_name), seed, points);
  RenderView view;
  view.size = image_size;
  // Stored images live on the 8-bit file grid so disk and memory agree.
  s.image = quantize(render_image(s.cloud, view));
  return s;
}

Dataset make_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset out;
  auto fill = [&](std::vector<Sample>& dst, const std::vector<std::string>& classes, const std::string& split,
                  std::size_t per_class) {
    for (const std::string& name : classes) {
      for (std::size_t i = 0; i < per_class; ++i) {
        dst.push_back(make_sample(name, sample_seed(config.seed, name, split, i), split, config.points,
                                  config.image_size));
      }
    }
  };
  fill(out.train, config.seen, "train", config.train_per_class);
  fill(out.test_seen, config.seen, "test_seen", config.test_per_class);
  fill(out.test_unseen, config.unseen, "test_unseen", config.test_per_class);
  return out;
}

}  // namespace patmod::data
