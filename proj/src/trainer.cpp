#include "sremtl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sremtl/ops.hpp"

namespace sremtl {

std::string_view train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::pretrain: return "pretrain";
    case TrainMode::single_task: return "single_task";
    case TrainMode::multi_task: return "multi_task";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "pretrain") return TrainMode::pretrain;
  if (name == "single_task") return TrainMode::single_task;
  if (name == "multi_task") return TrainMode::multi_task;
  throw ParameterError("train.mode must be pretrain, single_task or multi_task, got '" +
                       std::string(name) + "'");
}

std::string_view ablation_name(Ablation ablation) {
  switch (ablation) {
    case Ablation::normal: return "normal";
    case Ablation::random_sre: return "random_sre";
    case Ablation::frozen_sre: return "frozen_sre";
  }
  return "?";
}

Ablation parse_ablation(std::string_view name) {
  if (name == "normal") return Ablation::normal;
  if (name == "random_sre") return Ablation::random_sre;
  if (name == "frozen_sre") return Ablation::frozen_sre;
  throw ParameterError("train.ablation must be normal, random_sre or frozen_sre, got '" +
                       std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(lr_head > 0.0) || !(lr_sre > 0.0) || !(pretrain_lr > 0.0)) {
    throw ParameterError("train learning rates must be positive");
  }
  if (!(lr_sre < lr_head)) {
    throw ParameterError("train.lr_sre must be smaller than train.lr_head");
  }
  if (kws_batch == 0 || sv_batch == 0 || pretrain_batch == 0) {
    throw ParameterError("train batch sizes must be positive");
  }
  Adam check(adam);
  (void)check;
}

std::size_t TrainConfig::batch_size(Task task) const {
  return task == Task::kws ? kws_batch : sv_batch;
}

TaskCriterion TaskCriterion::cross_entropy() { return TaskCriterion{}; }

TaskCriterion TaskCriterion::angular(const AngularSoftmaxConfig& config,
                                     std::size_t classes, std::size_t dim,
                                     Rng& rng) {
  config.validate();
  if (classes < 2 || dim == 0) {
    throw ParameterError("angular criterion needs >= 2 classes and dim > 0");
  }
  TaskCriterion c;
  c.config_ = config;
  c.weight_ = normal_param({classes, dim}, 1.0, rng);
  return c;
}

Tensor TaskCriterion::loss(const Tensor& outputs,
                           std::span<const int> labels) const {
  if (!weight_) return sremtl::cross_entropy(outputs, labels);
  return angular_softmax_loss(outputs, labels, *weight_, config_.margin, lambda());
}

ParameterList TaskCriterion::parameters(std::string_view task) const {
  if (!weight_) return {};
  return {{"criterion." + std::string(task) + ".weight", *weight_, false}};
}

std::string MetricsLog::to_text(bool include_wall_ms) const {
  std::string out = include_wall_ms ? "iter,task,loss,wall_ms\n" : "iter,task,loss\n";
  char buf[96];
  for (const auto& r : records_) {
    if (include_wall_ms) {
      std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.3f\n", r.iteration,
                    r.task.c_str(), r.loss, r.wall_ms);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%s,%.17g\n", r.iteration,
                    r.task.c_str(), r.loss);
    }
    out += buf;
  }
  return out;
}

void MetricsLog::write(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write metrics log '" + path + "'");
  f << to_text();
  if (!f) throw IoError("failed writing metrics log '" + path + "'");
}

double MetricsLog::mean_loss(std::string_view task, std::size_t begin_iter,
                             std::size_t end_iter) const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : records_) {
    if (r.task == task && r.iteration >= begin_iter && r.iteration < end_iter) {
      total += r.loss;
      ++n;
    }
  }
  if (n == 0) throw ContractError("mean_loss: no records in range");
  return total / static_cast<double>(n);
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_finite(double loss, std::size_t iteration, std::string_view task) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss " + std::to_string(loss) +
                       " at iteration " + std::to_string(iteration) +
                       ", task " + std::string(task));
  }
}

std::string head_group(Task task) { return "head." + std::string(task_name(task)); }

}  // namespace

MetricsLog multitask_train(const TrainConfig& config, SREModel& model,
                           std::span<const TaskBinding> tasks,
                           const UpdateObserver& observer) {
  config.validate();
  if (tasks.empty()) throw ContractError("multitask_train: no tasks");
  for (const auto& t : tasks) {
    if (!t.head || !t.criterion || !t.loader) {
      throw ContractError("multitask_train: incomplete binding for task " +
                          std::string(task_name(t.task)));
    }
    if (t.head->in_dim() != model.config().d_model) {
      throw ShapeError("multitask_train: head input width does not match d_model");
    }
  }

  const ParameterList backbone = model.backbone_parameters();
  set_trainable(model.parameters(), false);

  Adam adam(config.adam);
  adam.add_group("sre", backbone, config.lr_sre);
  for (const auto& t : tasks) {
    ParameterList params = t.head->parameters();
    ParameterList crit = t.criterion->parameters(task_name(t.task));
    params.insert(params.end(), crit.begin(), crit.end());
    set_trainable(params, true);
    adam.add_group(head_group(t.task), std::move(params), config.lr_head);
  }

  MetricsLog log;
  bool sre_trainable = false;
  std::vector<Tensor> contexts;
  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    const bool frozen =
        config.ablation == Ablation::frozen_sre || iter < config.freeze_iters;
    if (frozen == sre_trainable) {
      set_trainable(backbone, !frozen);
      sre_trainable = !frozen;
    }
    for (const auto& t : tasks) {
      const auto start = Clock::now();
      Batch batch = t.loader->next(config.batch_size(t.task));
      contexts.clear();
      for (std::size_t b = 0; b < batch.size(); ++b)
        contexts.push_back(model.represent(batch.wave(b)).frames);
      Tensor outputs = t.head->forward(contexts, true);
      Tensor loss = t.criterion->loss(outputs, batch.labels);
      const double value = loss.item();
      check_finite(value, iter, task_name(t.task));
      backward(loss);
      std::vector<std::string> groups{head_group(t.task)};
      if (!frozen) groups.push_back("sre");
      adam.step(groups);
      t.criterion->advance();
      log.add({iter, std::string(task_name(t.task)), value, elapsed_ms(start)});
      if (observer) observer(iter, t.task, !frozen);
    }
  }
  set_trainable(model.parameters(), false);
  for (const auto& t : tasks) {
    set_trainable(t.head->parameters(), false);
    set_trainable(t.criterion->parameters(task_name(t.task)), false);
  }
  return log;
}

PretrainResult pretrain(const TrainConfig& config, SREModel& model,
                        BatchLoader& loader, Rng rng) {
  config.validate();
  const ParameterList params = model.parameters();
  set_trainable(params, true);
  Adam adam(config.adam);
  adam.add_group("sre", params, config.pretrain_lr);

  PretrainResult result;
  for (std::size_t step = 0; step < config.pretrain_steps; ++step) {
    const auto start = Clock::now();
    Batch batch = loader.next(config.pretrain_batch);
    PretrainLoss loss = pretrain_loss(model, batch.inputs,
                                      model.config().gumbel_temperature(step), rng);
    const double value = loss.total.item();
    check_finite(value, step, "pretrain");
    backward(loss.total);
    adam.step_all();
    result.log.add({step, "pretrain", value, elapsed_ms(start)});
    result.perplexity.push_back(
        std::accumulate(loss.perplexity.begin(), loss.perplexity.end(), 0.0) /
        static_cast<double>(loss.perplexity.size()));
  }
  set_trainable(params, false);
  return result;
}

}  // namespace sremtl
