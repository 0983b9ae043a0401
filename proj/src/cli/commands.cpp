#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>

#include "CLI11.hpp"
#include "patmod/cli.hpp"
#include "patmod/error.hpp"
#include "patmod/log.hpp"

namespace patmod::cli {
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kIo;
  }
  if (dynamic_cast<const Error*>(&e)) return kConfig;
  return 1;
}

namespace {

struct Options {
  std::string config;
  std::vector<std::string> set;
  std::string data_dir;
  std::string out;
  bool force = false;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  bool no_local = false, no_patterns = false, no_shift = false, no_l_region = false, no_l_shape = false;
  bool verbose = false, quiet = false;

  std::string checkpoint;
  std::string split = "all";
  std::size_t points = 0;
  std::string image, image_a, image_b;
  bool dump_trace = false;
  std::size_t steps = 5;
  std::string parameter;
  std::vector<std::string> values;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* points_opt = nullptr;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "flat key=value configuration file");
  cmd->add_option("--set", o.set, "override one config entry (key=value); repeatable");
  cmd->add_option("--data-dir", o.data_dir, "dataset directory (overrides data_dir)");
  cmd->add_flag("-v,--verbose", o.verbose, "info logging");
  cmd->add_flag("-q,--quiet", o.quiet, "errors only");
}

void add_ablations(CLI::App* cmd, Options& o) {
  cmd->add_flag("--no-local", o.no_local, "train encoder and decoder only");
  cmd->add_flag("--no-patterns", o.no_patterns, "customizer consumes region points directly");
  cmd->add_flag("--no-shift", o.no_shift, "modularization shift fixed to zero");
  cmd->add_flag("--no-l-region", o.no_l_region, "replace the region loss by a whole-shape Chamfer on F");
  cmd->add_flag("--no-l-shape", o.no_l_shape, "drop the initial-shape loss");
}

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  for (const std::string& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_entry(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.data_dir.empty()) c.data_dir = o.data_dir;
  if (o.seed_opt && o.seed_opt->count()) c.train.seed = o.seed;
  if (o.epochs_opt && o.epochs_opt->count()) c.train.epochs = o.epochs;
  if (o.points_opt && o.points_opt->count()) c.train.eval_points = o.points;
  auto& a = c.model.ablations;
  a.no_local = a.no_local || o.no_local;
  a.no_patterns = a.no_patterns || o.no_patterns;
  a.no_shift = a.no_shift || o.no_shift;
  a.no_l_region = a.no_l_region || o.no_l_region;
  a.no_l_shape = a.no_l_shape || o.no_l_shape;
  if (const char* env = std::getenv("PATMOD_THREADS"); env && *env) {
    c.train.threads = model::parse_size("PATMOD_THREADS", env);
    if (c.train.threads == 0) throw ConfigError("PATMOD_THREADS must be >= 1");
  }
  validate(c);
  return c;
}

// Refuses to reuse a nonempty directory unless forced, in which case it is cleared.
void prepare_dir(const std::string& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw IoError("'" + dir + "' already exists and is not empty (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

data::Dataset load_dataset(const std::string& dir, const std::string& only_split = "") {
  if (!fs::exists(path_in(dir, data::kManifestName))) {
    throw IoError("no dataset manifest in '" + dir + "' (run gen-data first)");
  }
  return data::read_dataset(dir, only_split);
}

std::vector<std::string> eval_splits(const data::Dataset& d) {
  std::vector<std::string> out;
  if (!d.test_seen.empty()) out.push_back("seen");
  if (!d.test_unseen.empty()) out.push_back("unseen");
  return out;
}

int cmd_gen_data(const Options& o) {
  const RunConfig c = resolve(o);
  prepare_dir(c.data_dir, o.force);
  const data::Dataset d = data::make_dataset(c.dataset);
  data::write_dataset(d, c.data_dir);
  data::write_text(path_in(c.data_dir, "config.txt"), format_run_config(c));
  if (o.quiet) return kOk;
  for (const auto& [name, split] : {std::pair<const char*, const std::vector<data::Sample>*>{"train", &d.train},
                                    {"test_seen", &d.test_seen},
                                    {"test_unseen", &d.test_unseen}}) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : *split) ++counts[s.class_name];
    std::printf("%s: %zu samples", name, split->size());
    for (const auto& [cls, n] : counts) std::printf(" %s=%zu", cls.c_str(), n);
    std::printf("\n");
  }
  std::printf("total: %zu samples in %s\n", d.size(), c.data_dir.c_str());
  return kOk;
}

int cmd_train(const Options& o) {
  RunConfig c = resolve(o);
  if (!o.out.empty()) c.out_dir = o.out;
  const data::Dataset d = load_dataset(c.data_dir);
  if (d.train.empty()) throw ConfigError("dataset in '" + c.data_dir + "' has no training samples");
  prepare_dir(c.out_dir, o.force);
  const std::string resolved = format_run_config(c);
  data::write_text(path_in(c.out_dir, "config.txt"), resolved);
  if (!o.quiet) std::fputs(resolved.c_str(), stdout);

  model::Model m(c.model, c.train.seed);
  train::TrainOptions opt;
  opt.out_dir = c.out_dir;
  opt.eval_data = &d;
  opt.eval_splits = eval_splits(d);
  const train::TrainResult r = train::train(m, d.train, c.train, opt);
  train::write_metrics_csv(path_in(c.out_dir, "metrics.csv"), r.history);
  if (!o.quiet) {
    std::printf("trained %zu epochs, %zu steps\n", r.epochs_run, r.steps);
    for (const auto& row : r.history) {
      if (row.epoch == r.epochs_run && (row.class_name == "mean" || row.split == "train")) {
        std::printf("%s %s cd_eval=%.6g iou=%.4f loss_total=%.6g\n", row.split.c_str(), row.class_name.c_str(),
                    row.cd_eval, row.iou, row.loss_total);
      }
    }
  }
  return kOk;
}

model::Model load_model(const Options& o, const RunConfig& c) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (o.config.empty() && o.set.empty()) return model::load_checkpoint(o.checkpoint);
  // An explicit config must agree with the stored parameter shapes.
  model::Model m(c.model, c.train.seed);
  model::load_parameters_into(m, o.checkpoint);
  return m;
}

int cmd_eval(const Options& o) {
  const RunConfig c = resolve(o);
  const model::Model m = load_model(o, c);
  std::vector<std::string> splits;
  if (o.split == "all") {
    splits = {"seen", "unseen"};
  } else if (o.split == "train" || o.split == "seen" || o.split == "unseen") {
    splits = {o.split};
  } else {
    throw ConfigError("--split must be train, seen, unseen or all, got '" + o.split + "'");
  }
  const std::string only = o.split == "all" ? "" : (o.split == "train" ? "train" : "test_" + o.split);
  const data::Dataset d = load_dataset(c.data_dir, only);
  std::vector<train::MetricsRecord> rows;
  for (const auto& split : splits) {
    const auto& samples = d.split(split);
    if (samples.empty()) continue;
    auto part = train::evaluate(m, samples, 0, split, c.train.alpha, c.train.eval_points, c.train.threads);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (!o.out.empty()) {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    train::write_metrics_csv(o.out, rows);
  }
  if (!o.quiet || o.out.empty()) {
    std::fputs(train::metrics_header().c_str(), stdout);
    for (const auto& r : rows) std::fputs(train::format_record(r).c_str(), stdout);
  }
  return kOk;
}

num::Tensor load_image(const std::string& path, const model::ModelConfig& c) {
  num::Tensor img = data::read_pgm(path);
  const num::Shape expected{c.image_channels, c.image_size, c.image_size};
  if (img.shape() != expected) {
    throw ContractError("image '" + path + "' is " + num::shape_str(img.shape()) + ", model expects " +
                        num::shape_str(expected));
  }
  return img;
}

void write_cloud(const num::Tensor& points, const std::string& path) {
  data::write_xyz(geom::PointCloud(points), path);
}

int cmd_reconstruct(const Options& o) {
  const RunConfig c = resolve(o);
  const model::Model m = load_model(o, c);
  if (o.image.empty()) throw ConfigError("--image is required");
  const num::Tensor image = load_image(o.image, m.config());
  const std::string out = o.out.empty() ? "." : o.out;
  fs::create_directories(out);
  num::Tape tape(false);
  const model::ForwardTrace t = m.infer(tape, image, o.dump_trace);
  const geom::PointCloud f(t.F_cloud.value());
  data::write_xyz(f, path_in(out, "F.xyz"));
  data::write_ply(f, path_in(out, "F.ply"));
  std::size_t files = 2;
  if (o.dump_trace) {
    write_cloud(t.S_cloud.value(), path_in(out, "S.xyz"));
    ++files;
    char name[64];
    for (std::size_t n = 0; n < t.patterns.size(); ++n) {
      std::snprintf(name, sizeof name, "pattern_%02zu.xyz", n);
      write_cloud(t.patterns[n].value(), path_in(out, name));
      ++files;
    }
    for (std::size_t r = 0; r < t.R_prime.size(); ++r) {
      const std::size_t real = t.regions.regions[r].real_count();
      if (real == 0) {
        log::info("region " + std::to_string(r) + " is empty; no R'/U files");
        continue;
      }
      std::snprintf(name, sizeof name, "region_%02zu_rprime.xyz", r);
      write_cloud(t.R_prime[r].value(), path_in(out, name));
      std::snprintf(name, sizeof name, "region_%02zu_u.xyz", r);
      num::Tensor u = t.U[r].value();
      u = num::Tensor({real, 3}, std::vector<double>(u.data().begin(), u.data().begin() + 3 * real));
      write_cloud(u, path_in(out, name));
      files += 2;
    }
  }
  if (!o.quiet) std::printf("wrote %zu files (F: %zu points) to %s\n", files, f.size(), out.c_str());
  return kOk;
}

int cmd_sweep(const Options& o) {
  RunConfig c = resolve(o);
  if (o.parameter.empty() || o.values.empty()) throw ConfigError("--parameter and --values are required");
  const data::Dataset d = load_dataset(c.data_dir);
  const auto rows = train::sweep(o.parameter, o.values, c.model, c.train, d);
  std::string text = train::sweep_header();
  for (const auto& r : rows) text += train::format_sweep_row(r);
  const std::string out = o.out.empty() ? path_in(c.out_dir, "sweep_" + o.parameter + ".csv") : o.out;
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  data::write_text(out, text);
  if (!o.quiet) std::fputs(text.c_str(), stdout);
  return kOk;
}

int cmd_interpolate(const Options& o) {
  const RunConfig c = resolve(o);
  const model::Model m = load_model(o, c);
  if (o.image_a.empty() || o.image_b.empty()) throw ConfigError("--image-a and --image-b are required");
  const num::Tensor a = load_image(o.image_a, m.config());
  const num::Tensor b = load_image(o.image_b, m.config());
  const std::string out = o.out.empty() ? "." : o.out;
  fs::create_directories(out);
  const auto frames = train::interpolate_latent(m, a, b, o.steps);
  char name[64];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof name, "interp_%02zu_lambda_%.4f.xyz", i, frames[i].lambda);
    data::write_xyz(frames[i].cloud, path_in(out, name));
  }
  if (!o.quiet) std::printf("wrote %zu frames to %s\n", frames.size(), out.c_str());
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"patmod: single-image point cloud reconstruction by local pattern modularization"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen, o);
  gen->add_flag("--force", o.force, "overwrite an existing dataset directory");

  auto* tr = app.add_subcommand("train", "train a model and write checkpoint plus metrics");
  add_common(tr, o);
  add_ablations(tr, o);
  tr->add_option("--out", o.out, "run directory (overrides out_dir)");
  tr->add_flag("--force", o.force, "overwrite an existing run directory");
  o.seed_opt = tr->add_option("--seed", o.seed, "training seed");
  o.epochs_opt = tr->add_option("--epochs", o.epochs, "number of epochs");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  add_common(ev, o);
  ev->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  ev->add_option("--split", o.split, "train, seen, unseen or all");
  o.points_opt = ev->add_option("--points", o.points, "compare at this many points (FPS)");
  ev->add_option("--out", o.out, "metrics CSV path");

  auto* rec = app.add_subcommand("reconstruct", "reconstruct a point cloud from one image");
  add_common(rec, o);
  rec->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  rec->add_option("--image", o.image, "PGM input image")->required();
  rec->add_option("--out", o.out, "output directory");
  rec->add_flag("--dump-trace", o.dump_trace, "also write S, patterns, R'_m and U_m");

  auto* sw = app.add_subcommand("sweep", "train and evaluate one run per parameter value");
  add_common(sw, o);
  add_ablations(sw, o);
  sw->add_option("--parameter", o.parameter, "alpha, M, N or sampling_mode")->required();
  sw->add_option("--values", o.values, "comma separated values")->required()->delimiter(',');
  sw->add_option("--out", o.out, "sweep CSV path");
  auto* sweep_seed = sw->add_option("--seed", o.seed, "training seed");
  auto* sweep_epochs = sw->add_option("--epochs", o.epochs, "number of epochs");

  auto* in = app.add_subcommand("interpolate", "reconstruct along a latent interpolation");
  add_common(in, o);
  in->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  in->add_option("--image-a", o.image_a, "first PGM image")->required();
  in->add_option("--image-b", o.image_b, "second PGM image")->required();
  in->add_option("--steps", o.steps, "number of frames (>= 2)");
  in->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  if (sw->parsed()) {
    o.seed_opt = sweep_seed;
    o.epochs_opt = sweep_epochs;
  }
  log::set_level(o.quiet ? log::Level::quiet : (o.verbose ? log::Level::info : log::Level::warning));

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (rec->parsed()) return cmd_reconstruct(o);
    if (sw->parsed()) return cmd_sweep(o);
    if (in->parsed()) return cmd_interpolate(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "patmod: error: %s\n", e.what());
    return exit_code_for(e);
  }
  return kOk;
}

}  // namespace patmod::cli
