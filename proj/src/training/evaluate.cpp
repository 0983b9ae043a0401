#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <sstream>
#include <thread>

#include "patmod/error.hpp"
#include "patmod/log.hpp"
#include "patmod/neighbors.hpp"
#include "patmod/training.hpp"

namespace patmod::train {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t count = std::min(threads, n);
  for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  // Lowest index first, as the sequential loop would report it.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PairMetrics compare_clouds(const geom::PointCloud& prediction, const geom::PointCloud& ground_truth,
                           std::size_t points, std::size_t resolution) {
  const std::size_t k = points == 0 ? std::min(prediction.size(), ground_truth.size()) : points;
  auto fit = [k](const geom::PointCloud& c) {
    return c.size() > k ? c.subset(geom::farthest_point_indices(c, k)) : c;
  };
  PairMetrics out;
  out.cd_eval = geom::chamfer_eval(fit(prediction), fit(ground_truth));
  const geom::Box box = geom::union_box(prediction, ground_truth);
  out.iou = geom::iou(geom::voxelize(prediction, resolution, box), geom::voxelize(ground_truth, resolution, box));
  return out;
}

std::vector<SampleResult> evaluate_samples(const model::Model& model, const std::vector<data::Sample>& samples,
                                           double alpha, std::size_t points, std::size_t threads) {
  std::vector<SampleResult> results(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const data::Sample& s = samples[i];
    num::Tape tape(false);
    const model::ForwardTrace trace = model.infer(tape, s.image);
    SampleResult r;
    r.class_name = s.class_name;
    r.metrics = compare_clouds(geom::PointCloud(trace.F_cloud.value()), s.cloud, points);
    try {
      const LossParts parts = total_loss(tape, trace, s.cloud, model.config().ablations, alpha);
      r.loss_shape = parts.shape;
      r.loss_region = parts.region;
      r.loss_total = parts.total.value().item();
    } catch (const DomainError& e) {
      // The inference split can miss every ground-truth region; report the shape term only.
      log::warn(std::string("evaluate: ") + e.what());
      r.loss_shape = geom::chamfer_sum(geom::PointCloud(trace.S_cloud.value()), s.cloud);
      r.loss_total = alpha * r.loss_shape;
    }
    results[i] = std::move(r);
  });
  return results;
}

std::vector<MetricsRecord> aggregate(const std::vector<SampleResult>& results, std::size_t epoch,
                                     const std::string& split) {
  std::vector<MetricsRecord> rows;
  std::vector<std::size_t> counts;
  for (const SampleResult& r : results) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const MetricsRecord& m) { return m.class_name == r.class_name; });
    if (it == rows.end()) {
      MetricsRecord m;
      m.epoch = epoch;
      m.split = split;
      m.class_name = r.class_name;
      rows.push_back(m);
      counts.push_back(0);
      it = rows.end() - 1;
    }
    const std::size_t k = static_cast<std::size_t>(it - rows.begin());
    it->cd_eval += r.metrics.cd_eval;
    it->iou += r.metrics.iou;
    it->loss_shape += r.loss_shape;
    it->loss_region += r.loss_region;
    it->loss_total += r.loss_total;
    ++counts[k];
  }
  if (rows.empty()) return rows;
  MetricsRecord mean;
  mean.epoch = epoch;
  mean.split = split;
  mean.class_name = "mean";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double n = static_cast<double>(counts[k]);
    MetricsRecord& m = rows[k];
    m.cd_eval /= n;
    m.iou /= n;
    m.loss_shape /= n;
    m.loss_region /= n;
    m.loss_total /= n;
    mean.cd_eval += m.cd_eval;
    mean.iou += m.iou;
    mean.loss_shape += m.loss_shape;
    mean.loss_region += m.loss_region;
    mean.loss_total += m.loss_total;
  }
  const double c = static_cast<double>(rows.size());
  mean.cd_eval /= c;
  mean.iou /= c;
  mean.loss_shape /= c;
  mean.loss_region /= c;
  mean.loss_total /= c;
  rows.push_back(mean);
  return rows;
}

std::vector<MetricsRecord> evaluate(const model::Model& model, const std::vector<data::Sample>& samples,
                                    std::size_t epoch, const std::string& split, double alpha, std::size_t points,
                                    std::size_t threads) {
  return aggregate(evaluate_samples(model, samples, alpha, points, threads), epoch, split);
}

std::string metrics_header() {
  return "# cd_eval = 0.5*(mean nearest distance pred->gt + mean gt->pred) at matched cardinality; "
         "loss_* are raw nearest-distance sums; iou on 32^3 occupancy over the union box\n"
         "epoch,split,class,cd_eval,iou,loss_shape,loss_region,loss_total,wall_ms\n";
}

std::string format_record(const MetricsRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.6g\n", r.epoch, r.split.c_str(),
                r.class_name.c_str(), r.cd_eval, r.iou, r.loss_shape, r.loss_region, r.loss_total, r.wall_ms);
  return buf;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::string text = metrics_header();
  for (const auto& r : records) text += format_record(r);
  data::write_text(path, text);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  const auto bytes = data::read_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "epoch,split,class,cd_eval,iou,loss_shape,loss_region,loss_total,wall_ms") {
        throw ParseError(path + ":" + std::to_string(line_no) + ": unexpected header");
      }
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw ParseError(path + ":" + std::to_string(line_no) + ": expected 9 fields");
    try {
      MetricsRecord r;
      r.epoch = model::parse_size("epoch", f[0]);
      r.split = f[1];
      r.class_name = f[2];
      r.cd_eval = model::parse_number("cd_eval", f[3]);
      r.iou = model::parse_number("iou", f[4]);
      r.loss_shape = model::parse_number("loss_shape", f[5]);
      r.loss_region = model::parse_number("loss_region", f[6]);
      r.loss_total = model::parse_number("loss_total", f[7]);
      r.wall_ms = model::parse_number("wall_ms", f[8]);
      out.push_back(r);
    } catch (const ConfigError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw ParseError(path + ": missing header");
  return out;
}

}  // namespace patmod::train
