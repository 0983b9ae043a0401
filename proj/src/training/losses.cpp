#include <cmath>

#include "patmod/error.hpp"
#include "patmod/neighbors.hpp"
#include "patmod/ops.hpp"
#include "patmod/training.hpp"

namespace patmod::train {

void TrainConfig::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid train config: " + what);
  };
  need(std::isfinite(alpha) && alpha >= 0.0, "alpha must be finite and non-negative");
  need(std::isfinite(lr) && lr >= 0.0, "lr must be finite and non-negative");
  need(batch_size > 0, "batch_size must be positive");
  need(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  need(decay_every_epochs > 0, "decay_every_epochs must be positive");
  need(epochs > 0, "epochs must be positive");
  need(threads > 0, "threads must be positive");
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& c) {
  return {
      {"alpha", model::format_number(c.alpha)},
      {"lr", model::format_number(c.lr)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr_decay", model::format_number(c.lr_decay)},
      {"decay_every_epochs", std::to_string(c.decay_every_epochs)},
      {"epochs", std::to_string(c.epochs)},
      {"seed", std::to_string(c.seed)},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
      {"eval_every", std::to_string(c.eval_every)},
      {"max_steps", std::to_string(c.max_steps)},
      {"eval_points", std::to_string(c.eval_points)},
      {"record_time", c.record_time ? "true" : "false"},
  };
}

bool set_entry(TrainConfig& c, const std::string& key, const std::string& value) {
  using model::parse_number;
  using model::parse_size;
  if (key == "alpha") c.alpha = parse_number(key, value);
  else if (key == "lr") c.lr = parse_number(key, value);
  else if (key == "batch_size") c.batch_size = parse_size(key, value);
  else if (key == "lr_decay") c.lr_decay = parse_number(key, value);
  else if (key == "decay_every_epochs") c.decay_every_epochs = parse_size(key, value);
  else if (key == "epochs") c.epochs = parse_size(key, value);
  else if (key == "seed") c.seed = parse_size(key, value);
  else if (key == "checkpoint_every") c.checkpoint_every = parse_size(key, value);
  else if (key == "eval_every") c.eval_every = parse_size(key, value);
  else if (key == "max_steps") c.max_steps = parse_size(key, value);
  else if (key == "eval_points") c.eval_points = parse_size(key, value);
  else if (key == "record_time") c.record_time = model::parse_bool(key, value);
  else return false;
  return true;
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  return config.lr * std::pow(config.lr_decay, static_cast<double>(epoch / config.decay_every_epochs));
}

num::Var loss_shape(num::Var s_cloud, num::Var ground_truth) { return geom::chamfer(s_cloud, ground_truth); }

num::Var loss_region(num::Tape& tape, const std::vector<num::Var>& u_real,
                     const std::vector<geom::PointCloud>& g_regions) {
  if (u_real.size() != g_regions.size()) {
    throw DimensionError("loss_region: " + std::to_string(u_real.size()) + " predicted regions vs " +
                         std::to_string(g_regions.size()) + " ground-truth regions");
  }
  num::Var sum;
  std::size_t pairs = 0;
  for (std::size_t m = 0; m < u_real.size(); ++m) {
    if (u_real[m].rows() == 0 || g_regions[m].empty()) continue;
    num::Var term = geom::chamfer(u_real[m], tape.constant(g_regions[m].tensor()));
    sum = pairs == 0 ? term : num::add(sum, term);
    ++pairs;
  }
  if (pairs == 0) throw DomainError("loss_region: no region holds both predicted and ground-truth points");
  return num::scale(sum, 1.0 / static_cast<double>(pairs));
}

num::Var loss_region(num::Tape& tape, const model::ForwardTrace& trace, const geom::PointCloud& ground_truth) {
  if (!trace.local) throw ContractError("loss_region: trace has no local stage");
  const auto& regions = trace.regions.regions;
  std::vector<num::Var> real;
  real.reserve(regions.size());
  for (std::size_t m = 0; m < regions.size(); ++m) {
    const num::Var u = trace.U[m];
    real.push_back(trace.full_rows ? num::slice_rows(u, 0, regions[m].real_count()) : u);
  }
  return loss_region(tape, real, geom::partition(ground_truth, trace.regions.box, regions.size()));
}

LossParts total_loss(num::Tape& tape, const model::ForwardTrace& trace, const geom::PointCloud& ground_truth,
                     const model::Ablations& ablations, double alpha) {
  ablations.validate();
  const num::Var g = tape.constant(ground_truth.tensor());
  const num::Var shape = loss_shape(trace.S_cloud, g);
  LossParts parts;
  parts.shape = shape.value().item();
  if (ablations.no_local) {
    parts.total = shape;
    return parts;
  }
  const num::Var region =
      ablations.no_l_region ? geom::chamfer(trace.F_cloud, g) : loss_region(tape, trace, ground_truth);
  parts.region = region.value().item();
  parts.total = ablations.no_l_shape ? region : num::add(region, num::scale(shape, alpha));
  return parts;
}

}  // namespace patmod::train
