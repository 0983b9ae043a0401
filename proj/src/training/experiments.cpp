#include <cstdio>

#include "patmod/error.hpp"
#include "patmod/log.hpp"
#include "patmod/training.hpp"

namespace patmod::train {

std::vector<InterpolationFrame> interpolate_latent(const model::Model& model, const num::Tensor& image_a,
                                                   const num::Tensor& image_b, std::size_t steps) {
  if (steps < 2) throw ContractError("interpolate_latent: steps must be >= 2");
  num::Tape encode(false);
  const num::Tensor fa = model.encode_image(encode, image_a).value();
  const num::Tensor fb = model.encode_image(encode, image_b).value();
  std::vector<InterpolationFrame> frames;
  for (std::size_t i = 0; i < steps; ++i) {
    const double lambda = static_cast<double>(i) / static_cast<double>(steps - 1);
    num::Tensor code = fa;
    if (i + 1 == steps) {
      code = fb;
    } else if (i > 0) {
      for (std::size_t k = 0; k < code.size(); ++k) code[k] = (1.0 - lambda) * fa[k] + lambda * fb[k];
    }
    num::Tape tape(false);
    const model::ForwardTrace trace = model.infer_from_latent(tape, tape.constant(std::move(code)));
    frames.push_back({lambda, geom::PointCloud(trace.F_cloud.value())});
  }
  return frames;
}

std::string sweep_header() { return "parameter,value,cd_seen,cd_unseen,iou_seen,iou_unseen\n"; }

std::string format_sweep_row(const SweepRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g\n", r.parameter.c_str(), r.value.c_str(), r.cd_seen,
                r.cd_unseen, r.iou_seen, r.iou_unseen);
  return buf;
}

namespace {

double mean_row(const std::vector<MetricsRecord>& rows, double MetricsRecord::*field) {
  for (const auto& r : rows) {
    if (r.class_name == "mean") return r.*field;
  }
  return 0.0;
}

}  // namespace

std::vector<SweepRow> sweep(const std::string& parameter, const std::vector<std::string>& values,
                            const model::ModelConfig& base_model, const TrainConfig& base_train,
                            const data::Dataset& dataset) {
  if (parameter != "alpha" && parameter != "M" && parameter != "N" && parameter != "sampling_mode") {
    throw ConfigError("sweep: unsupported parameter '" + parameter + "' (expected alpha, M, N or sampling_mode)");
  }
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<SweepRow> rows;
  for (const std::string& value : values) {
    model::ModelConfig mc = base_model;
    TrainConfig tc = base_train;
    try {
      if (parameter == "alpha") {
        set_entry(tc, "alpha", value);
      } else {
        model::set_entry(mc, parameter, value);
      }
      mc.validate();
      tc.validate();
    } catch (const Error& e) {
      log::warn("sweep: skipping " + parameter + "=" + value + ": " + e.what());
      continue;
    }
    model::Model model(mc, tc.seed);
    train(model, dataset.train, tc);
    SweepRow row;
    row.parameter = parameter;
    row.value = value;
    if (!dataset.test_seen.empty()) {
      const auto seen = evaluate(model, dataset.test_seen, tc.epochs, "seen", tc.alpha, tc.eval_points, tc.threads);
      row.cd_seen = mean_row(seen, &MetricsRecord::cd_eval);
      row.iou_seen = mean_row(seen, &MetricsRecord::iou);
    }
    if (!dataset.test_unseen.empty()) {
      const auto unseen =
          evaluate(model, dataset.test_unseen, tc.epochs, "unseen", tc.alpha, tc.eval_points, tc.threads);
      row.cd_unseen = mean_row(unseen, &MetricsRecord::cd_eval);
      row.iou_unseen = mean_row(unseen, &MetricsRecord::iou);
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw ConfigError("sweep: every value of " + parameter + " was invalid");
  return rows;
}

}  // namespace patmod::train
