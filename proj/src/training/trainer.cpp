#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "patmod/error.hpp"
#include "patmod/log.hpp"
#include "patmod/rng.hpp"
#include "patmod/training.hpp"

namespace patmod::train {
namespace {

struct MemberResult {
  num::GradientList grads;
  double total = 0.0;
  double shape = 0.0;
  double region = 0.0;
  PairMetrics metrics;
};

MemberResult run_member(const model::Model& model, const data::Sample& s, double alpha) {
  num::Tape tape;
  const model::ForwardTrace trace = model.forward(tape, s.image, s.cloud);
  const LossParts parts = total_loss(tape, trace, s.cloud, model.config().ablations, alpha);
  MemberResult r;
  r.total = parts.total.value().item();
  r.shape = parts.shape;
  r.region = parts.region;
  if (!std::isfinite(r.total)) {
    throw NumericalError("non-finite loss " + std::to_string(r.total) + " on sample " + s.class_name + "/" +
                         std::to_string(s.seed));
  }
  const geom::PointCloud f(trace.F_cloud.value());
  r.metrics = compare_clouds(f, s.cloud);
  r.grads = tape.backward(parts.total);
  return r;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "shuffle", epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

TrainResult train(model::Model& model, const std::vector<data::Sample>& train_set, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw DomainError("train: empty training set");
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);
  if (!options.eval_splits.empty() && options.eval_data == nullptr) {
    throw ContractError("train: eval splits requested without evaluation data");
  }

  Adam adam(model.params());
  TrainResult result;
  const double alpha = config.alpha;
  bool stop = false;

  for (std::size_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = shuffled(train_set.size(), config.seed, epoch);
    const double lr = lr_at(epoch, config);
    MetricsRecord row;
    row.epoch = epoch + 1;
    row.split = "train";
    row.class_name = "all";
    std::size_t seen = 0;

    for (std::size_t b = 0; b < order.size() && !stop; b += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - b);
      std::vector<MemberResult> members(count);
      try {
        parallel_for(count, config.threads,
                     [&](std::size_t k) { members[k] = run_member(model, train_set[order[b + k]], alpha); });
        // Fixed-order reduction keeps threaded and sequential runs identical.
        num::GradientList grads = std::move(members[0].grads);
        for (std::size_t k = 1; k < count; ++k) {
          for (std::size_t p = 0; p < grads.size(); ++p) {
            auto dst = grads[p].data();
            auto src = members[k].grads[p].data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
        const double inv = 1.0 / static_cast<double>(count);
        for (auto& g : grads) {
          for (double& x : g.data()) x *= inv;
        }
        adam.step(model.params(), grads, lr);
      } catch (const NumericalError& e) {
        if (!options.out_dir.empty()) model::save_checkpoint(model, join(options.out_dir, "last_good.pmod"));
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(result.steps + 1) + ")");
      }
      ++result.steps;

      double batch_loss = 0.0;
      for (const MemberResult& m : members) {
        batch_loss += m.total;
        row.cd_eval += m.metrics.cd_eval;
        row.iou += m.metrics.iou;
        row.loss_shape += m.shape;
        row.loss_region += m.region;
        row.loss_total += m.total;
      }
      seen += count;
      if (options.on_step &&
          !options.on_step(StepInfo{result.steps, epoch + 1, batch_loss / static_cast<double>(count)})) {
        stop = true;
      }
      if (config.max_steps != 0 && result.steps >= config.max_steps) stop = true;
    }

    const double n = static_cast<double>(seen);
    row.cd_eval /= n;
    row.iou /= n;
    row.loss_shape /= n;
    row.loss_region /= n;
    row.loss_total /= n;
    if (config.record_time) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    result.history.push_back(row);
    result.epochs_run = epoch + 1;
    log::info("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(row.loss_total));

    const bool last = stop || epoch + 1 == config.epochs;
    if (!options.out_dir.empty() && config.checkpoint_every != 0 && (epoch + 1) % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.pmod", epoch + 1);
      model::save_checkpoint(model, join(options.out_dir, name));
    }
    const bool eval_now = last || (config.eval_every != 0 && (epoch + 1) % config.eval_every == 0);
    if (eval_now) {
      for (const std::string& split : options.eval_splits) {
        const auto t0 = std::chrono::steady_clock::now();
        auto rows = evaluate(model, options.eval_data->split(split), epoch + 1, split, alpha, config.eval_points,
                             config.threads);
        if (config.record_time) {
          const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
          for (auto& r : rows) r.wall_ms = ms;
        }
        result.history.insert(result.history.end(), rows.begin(), rows.end());
      }
    }
  }
  if (!options.out_dir.empty()) model::save_checkpoint(model, join(options.out_dir, "model.pmod"));
  return result;
}

double mean_loss(const model::Model& model, const std::vector<data::Sample>& samples, double alpha,
                 std::size_t threads) {
  if (samples.empty()) throw DomainError("mean_loss: no samples");
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    num::Tape tape(false);
    const model::ForwardTrace trace = model.forward(tape, samples[i].image, samples[i].cloud);
    losses[i] = total_loss(tape, trace, samples[i].cloud, model.config().ablations, alpha).total.value().item();
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(samples.size());
}

}  // namespace patmod::train
