#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sremtl/data.hpp"
#include "sremtl/heads.hpp"
#include "sremtl/losses.hpp"
#include "sremtl/optim.hpp"
#include "sremtl/sre.hpp"

namespace sremtl {

enum class TrainMode { pretrain, single_task, multi_task };
enum class Ablation { normal, random_sre, frozen_sre };

std::string_view train_mode_name(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);
std::string_view ablation_name(Ablation ablation);
Ablation parse_ablation(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::multi_task;
  Ablation ablation = Ablation::normal;
  std::size_t max_iterations = 2000;
  std::size_t freeze_iters = 1000;
  double lr_head = 1e-4;
  double lr_sre = 1e-5;
  AdamConfig adam;
  std::size_t kws_batch = 8;
  std::size_t sv_batch = 8;
  std::size_t pretrain_steps = 1000;
  double pretrain_lr = 5e-4;
  std::size_t pretrain_batch = 8;

  void validate() const;
  std::size_t batch_size(Task task) const;
};

/// Task criterion: cross-entropy over class scores (KWS) or A-Softmax over
/// embeddings with its own class-weight matrix (SV).
class TaskCriterion {
 public:
  static TaskCriterion cross_entropy();
  static TaskCriterion angular(const AngularSoftmaxConfig& config,
                               std::size_t classes, std::size_t dim, Rng& rng);

  bool is_angular() const { return weight_.has_value(); }
  Tensor loss(const Tensor& outputs, std::span<const int> labels) const;
  // Counts optimizer updates of this criterion; drives the lambda schedule.
  void advance() { ++step_; }
  std::size_t step() const { return step_; }
  double lambda() const { return config_.lambda(step_); }

  // Class weights [classes, dim] for A-Softmax; empty for cross-entropy.
  ParameterList parameters(std::string_view task) const;

 private:
  AngularSoftmaxConfig config_;
  std::optional<Tensor> weight_;
  std::size_t step_ = 0;
};

struct TaskBinding {
  Task task = Task::kws;
  TaskHead* head = nullptr;
  TaskCriterion* criterion = nullptr;
  BatchLoader* loader = nullptr;
};

struct MetricRecord {
  std::size_t iteration = 0;
  std::string task;
  double loss = 0.0;
  double wall_ms = 0.0;
};

/// Per-iteration training records, written one per line as
/// "iter,task,loss,wall_ms".
class MetricsLog {
 public:
  void add(MetricRecord record) { records_.push_back(std::move(record)); }
  const std::vector<MetricRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  // Without timing the text is a pure function of the run.
  std::string to_text(bool include_wall_ms = true) const;
  void write(const std::string& path) const;

  // Mean loss over records [begin, end) of one task.
  double mean_loss(std::string_view task, std::size_t begin_iter,
                   std::size_t end_iter) const;

 private:
  std::vector<MetricRecord> records_;
};

// Called after each optimizer update with the outer iteration, the task and
// whether the SRE backbone was part of the update.
using UpdateObserver =
    std::function<void(std::size_t iteration, Task task, bool sre_updated)>;

/// Round-robin multi-task fine-tuning: for every outer iteration and every
/// task in order, one batch is pushed through the shared SRE and the task's
/// head and criterion, followed by an immediate Adam update. The SRE backbone
/// joins the update only once iteration >= freeze_iters (never for the
/// frozen ablation). A non-finite loss raises NumericError.
MetricsLog multitask_train(const TrainConfig& config, SREModel& model,
                           std::span<const TaskBinding> tasks,
                           const UpdateObserver& observer = {});

struct PretrainResult {
  MetricsLog log;
  // Mean codebook perplexity of every step.
  std::vector<double> perplexity;
};

/// Self-supervised pretraining with masking and Gumbel temperature annealing.
PretrainResult pretrain(const TrainConfig& config, SREModel& model,
                        BatchLoader& loader, Rng rng);

}  // namespace sremtl
