#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "patmod/data.hpp"
#include "patmod/model.hpp"

namespace patmod::train {

struct TrainConfig {
  double alpha = 0.1;
  double lr = 1e-4;
  std::size_t batch_size = 4;
  double lr_decay = 0.95;
  std::size_t decay_every_epochs = 70;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  /// 0 disables periodic checkpoints (the final one is always written).
  std::size_t checkpoint_every = 0;
  /// 0 evaluates the test splits after the last epoch only.
  std::size_t eval_every = 0;
  /// 0 means no limit.
  std::size_t max_steps = 0;
  /// Batch members evaluated concurrently; 1 is the sequential reference.
  std::size_t threads = 1;
  /// Evaluation comparison cardinality; 0 matches the smaller cloud.
  std::size_t eval_points = 0;
  bool record_time = false;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& config);
bool set_entry(TrainConfig& config, const std::string& key, const std::string& value);

double lr_at(std::size_t epoch, const TrainConfig& config);

/// Raw-sum Chamfer between the initial prediction and the full ground truth.
num::Var loss_shape(num::Var s_cloud, num::Var ground_truth);
/// Mean Chamfer over region pairs where both sides hold points. u_real[m]
/// holds only real rows. DomainError when no pair qualifies.
num::Var loss_region(num::Tape& tape, const std::vector<num::Var>& u_real,
                     const std::vector<geom::PointCloud>& g_regions);
/// Ground truth partitioned over the trace's split box; padded rows dropped.
num::Var loss_region(num::Tape& tape, const model::ForwardTrace& trace, const geom::PointCloud& ground_truth);

struct LossParts {
  num::Var total;
  double shape = 0.0;
  /// The region term as trained: L_Region, or the whole-shape Chamfer on F
  /// under no_l_region, or 0 without a local stage.
  double region = 0.0;
};

LossParts total_loss(num::Tape& tape, const model::ForwardTrace& trace, const geom::PointCloud& ground_truth,
                     const model::Ablations& ablations, double alpha);

class Adam {
 public:
  explicit Adam(const num::ParameterSet& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// NumericalError (naming the parameter) on a non-finite gradient; nothing
  /// is updated in that case.
  void step(num::ParameterSet& params, const num::GradientList& grads, double lr);
  std::size_t steps() const { return t_; }
  const std::vector<num::Tensor>& first_moment() const { return m_; }
  const std::vector<num::Tensor>& second_moment() const { return v_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<num::Tensor> m_;
  std::vector<num::Tensor> v_;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;       // train, seen, unseen
  std::string class_name;  // class label, "all" for train rows, "mean" for class means
  double cd_eval = 0.0;
  double iou = 0.0;
  double loss_shape = 0.0;
  double loss_region = 0.0;
  double loss_total = 0.0;
  double wall_ms = 0.0;
};

std::string metrics_header();
std::string format_record(const MetricsRecord& record);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

struct PairMetrics {
  double cd_eval = 0.0;
  double iou = 0.0;
};

/// Evaluation Chamfer at matched cardinality (points == 0: FPS the larger
/// cloud down to the smaller; otherwise FPS both to at most `points`) and IoU
/// of 32^3 occupancy over the union box of the full clouds.
PairMetrics compare_clouds(const geom::PointCloud& prediction, const geom::PointCloud& ground_truth,
                           std::size_t points = 0, std::size_t resolution = 32);

struct SampleResult {
  std::string class_name;
  PairMetrics metrics;
  double loss_shape = 0.0;
  double loss_region = 0.0;
  double loss_total = 0.0;
};

/// Inference on every sample (split from the model's own prediction).
std::vector<SampleResult> evaluate_samples(const model::Model& model, const std::vector<data::Sample>& samples,
                                           double alpha, std::size_t points = 0, std::size_t threads = 1);
/// Per-class rows in first-appearance order followed by a "mean" row that
/// averages the per-class means.
std::vector<MetricsRecord> aggregate(const std::vector<SampleResult>& results, std::size_t epoch,
                                     const std::string& split);
std::vector<MetricsRecord> evaluate(const model::Model& model, const std::vector<data::Sample>& samples,
                                    std::size_t epoch, const std::string& split, double alpha,
                                    std::size_t points = 0, std::size_t threads = 1);

struct StepInfo {
  std::size_t step = 0;  // 1-based optimizer step
  std::size_t epoch = 0; // 1-based
  double loss = 0.0;     // batch mean total loss before the update
};

struct TrainOptions {
  /// Checkpoints (model.pmod, epoch_NNNN.pmod, last_good.pmod) go here; empty disables files.
  std::string out_dir;
  /// Splits evaluated on eval epochs, e.g. {"seen", "unseen"}.
  const data::Dataset* eval_data = nullptr;
  std::vector<std::string> eval_splits;
  /// Return false to stop after this step.
  std::function<bool(const StepInfo&)> on_step;
};

struct TrainResult {
  std::vector<MetricsRecord> history;
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
};

/// NumericalError on a non-finite loss or gradient after writing
/// last_good.pmod (the parameters before the failing step).
TrainResult train(model::Model& model, const std::vector<data::Sample>& train_set, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Mean total loss of the training-mode forward over samples (no update).
double mean_loss(const model::Model& model, const std::vector<data::Sample>& samples, double alpha,
                 std::size_t threads = 1);

struct InterpolationFrame {
  double lambda = 0.0;
  geom::PointCloud cloud;
};

/// Reconstructions from uniformly interpolated latent codes, lambda = i/(steps-1).
std::vector<InterpolationFrame> interpolate_latent(const model::Model& model, const num::Tensor& image_a,
                                                   const num::Tensor& image_b, std::size_t steps);

struct SweepRow {
  std::string parameter;
  std::string value;
  double cd_seen = 0.0;
  double cd_unseen = 0.0;
  double iou_seen = 0.0;
  double iou_unseen = 0.0;
};

std::string sweep_header();
std::string format_sweep_row(const SweepRow& row);

/// One training run per value (alpha, M, N or sampling_mode); invalid values
/// are logged and skipped, ConfigError when none is valid.
std::vector<SweepRow> sweep(const std::string& parameter, const std::vector<std::string>& values,
                            const model::ModelConfig& base_model, const TrainConfig& base_train,
                            const data::Dataset& dataset);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace patmod::train
