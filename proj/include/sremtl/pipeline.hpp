#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "sremtl/checkpoint.hpp"
#include "sremtl/config.hpp"
#include "sremtl/eval.hpp"
#include "sremtl/trainer.hpp"

namespace sremtl {

struct Corpus {
  std::shared_ptr<const UtteranceSet> kws_train;
  std::shared_ptr<const UtteranceSet> kws_test;
  std::shared_ptr<const UtteranceSet> sv_train;
  TrialSet trials;
  std::size_t kws_classes = 0;
  std::size_t sv_speakers = 0;
};

// Synthetic corpus unless the data section points at directories.
Corpus load_corpus(const DataConfig& data);
Corpus corpus_from_synth(SynthCorpus synth);

struct TaskModel {
  HeadConfig config;
  std::unique_ptr<TaskHead> head;
  std::unique_ptr<TaskCriterion> criterion;
};

struct TrainedSystem {
  std::unique_ptr<SREModel> sre;
  std::vector<TaskModel> tasks;
  MetricsLog log;

  TaskModel* find(Task task);
};

// Fresh SRE drawn from the run seed; also the starting point of pretraining.
std::unique_ptr<SREModel> make_sre(const RunConfig& config);

/// Pretrains `model` on one-second slices of every training clip.
PretrainResult run_pretrain(const RunConfig& config, const Corpus& corpus,
                            SREModel& model);

/// Builds heads and criteria for config.heads and runs round-robin
/// fine-tuning from `sre`.
TrainedSystem run_finetune(const RunConfig& config, const Corpus& corpus,
                           std::unique_ptr<SREModel> sre,
                           const UpdateObserver& observer = {});

double evaluate_kws(TrainedSystem& system, const Corpus& corpus);
double evaluate_sv(TrainedSystem& system, const Corpus& corpus,
                   std::vector<ScoredTrial>* scores = nullptr);

Checkpoint pretrain_checkpoint(const SREModel& model);
Checkpoint system_checkpoint(const TrainedSystem& system, const Corpus& corpus,
                             const AngularSoftmaxConfig& angular);

/// SRE stored in a checkpoint, shaped by `expected` (the run config).
/// Dimension mismatches are reported tensor by tensor.
std::unique_ptr<SREModel> sre_from_checkpoint(const Checkpoint& checkpoint,
                                              const SREConfig& expected);
// Rebuilds everything from the checkpoint's own metadata.
TrainedSystem system_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace sremtl
