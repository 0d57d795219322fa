#include "sremtl/pipeline.hpp"

namespace sremtl {

using nlohmann::json;

Corpus corpus_from_synth(SynthCorpus synth) {
  Corpus c;
  c.kws_classes = synth.keyword_names.size();
  c.sv_speakers = synth.sv_train_speakers;
  c.kws_train = std::make_shared<const UtteranceSet>(std::move(synth.kws_train));
  c.kws_test = std::make_shared<const UtteranceSet>(std::move(synth.kws_test));
  c.sv_train = std::make_shared<const UtteranceSet>(std::move(synth.sv_train));
  c.trials = std::move(synth.trials);
  return c;
}

Corpus load_corpus(const DataConfig& data) {
  if (!data.uses_disk()) return corpus_from_synth(synth_dataset(data.synthetic));
  Corpus c;
  if (!data.kws_dir.empty()) {
    if (data.kws_keywords.empty()) {
      throw ParameterError("data.kws_keywords must list the target words");
    }
    c.kws_train = std::make_shared<const UtteranceSet>(
        load_keyword_folders(data.kws_dir, data.kws_keywords));
    const std::string test_dir =
        data.kws_test_dir.empty() ? data.kws_dir : data.kws_test_dir;
    c.kws_test = std::make_shared<const UtteranceSet>(
        load_keyword_folders(test_dir, data.kws_keywords));
    c.kws_classes = data.kws_keywords.size() + 2;
  }
  if (!data.sv_dir.empty()) {
    std::vector<std::string> names;
    c.sv_train = std::make_shared<const UtteranceSet>(load_speaker_tree(data.sv_dir, &names));
    c.sv_speakers = names.size();
  }
  if (!data.trials.empty()) {
    c.trials = read_trial_list(data.trials,
                               data.trials_root.empty() ? data.sv_dir : data.trials_root);
  }
  return c;
}

TaskModel* TrainedSystem::find(Task task) {
  for (auto& t : tasks)
    if (t.config.task == task) return &t;
  return nullptr;
}

std::unique_ptr<SREModel> make_sre(const RunConfig& config) {
  Rng rng = Rng(config.seed).split("sre.init");
  return std::make_unique<SREModel>(config.sre, rng);
}

PretrainResult run_pretrain(const RunConfig& config, const Corpus& corpus,
                            SREModel& model) {
  auto pool = std::make_shared<UtteranceSet>();
  if (corpus.kws_train) pool->insert(pool->end(), corpus.kws_train->begin(), corpus.kws_train->end());
  if (corpus.sv_train) pool->insert(pool->end(), corpus.sv_train->begin(), corpus.sv_train->end());
  const Rng root(config.seed);
  BatchLoader loader(pool, Task::kws, kKwsSamples, root.split("loader.pretrain"));
  return pretrain(config.train, model, loader, root.split("pretrain"));
}

namespace {

std::shared_ptr<const UtteranceSet> training_set(const Corpus& corpus, Task task) {
  auto set = task == Task::kws ? corpus.kws_train : corpus.sv_train;
  if (!set || set->empty()) {
    throw ParameterError("no training data for task " + std::string(task_name(task)));
  }
  return set;
}

TaskModel build_task(const HeadConfig& head, std::size_t d_model,
                     const AngularSoftmaxConfig& angular, std::size_t speakers,
                     const Rng& root) {
  TaskModel t;
  t.config = head;
  const std::string name(task_name(head.task));
  Rng head_rng = root.split("head." + name);
  t.head = std::make_unique<TaskHead>(head, d_model, head_rng);
  if (head.task == Task::kws) {
    t.criterion = std::make_unique<TaskCriterion>(TaskCriterion::cross_entropy());
  } else {
    Rng crit_rng = root.split("criterion." + name);
    t.criterion = std::make_unique<TaskCriterion>(
        TaskCriterion::angular(angular, speakers, head.out_dim, crit_rng));
  }
  return t;
}

}  // namespace

TrainedSystem run_finetune(const RunConfig& config, const Corpus& corpus,
                           std::unique_ptr<SREModel> sre,
                           const UpdateObserver& observer) {
  if (!sre) throw ContractError("run_finetune: no SRE");
  const Rng root(config.seed);
  TrainedSystem system;
  system.sre = std::move(sre);
  std::vector<BatchLoader> loaders;
  loaders.reserve(config.heads.size());
  for (const auto& spec : config.heads) {
    const HeadConfig head = spec.resolve(corpus.kws_classes);
    system.tasks.push_back(build_task(head, system.sre->config().d_model,
                                      config.angular, corpus.sv_speakers, root));
    loaders.emplace_back(training_set(corpus, spec.task), spec.task,
                         task_clip_samples(spec.task),
                         root.split("loader." + std::string(task_name(spec.task))));
  }
  std::vector<TaskBinding> bindings;
  for (std::size_t i = 0; i < system.tasks.size(); ++i) {
    bindings.push_back({system.tasks[i].config.task, system.tasks[i].head.get(),
                        system.tasks[i].criterion.get(), &loaders[i]});
  }
  system.log = multitask_train(config.train, *system.sre, bindings, observer);
  return system;
}

double evaluate_kws(TrainedSystem& system, const Corpus& corpus) {
  TaskModel* t = system.find(Task::kws);
  if (!t) throw ParameterError("model has no kws head");
  if (!corpus.kws_test || corpus.kws_test->empty()) {
    throw ParameterError("no keyword test data");
  }
  return evaluate_kws(*system.sre, *t->head, *corpus.kws_test);
}

double evaluate_sv(TrainedSystem& system, const Corpus& corpus,
                   std::vector<ScoredTrial>* scores) {
  TaskModel* t = system.find(Task::sv);
  if (!t) throw ParameterError("model has no sv head");
  if (corpus.trials.pairs.empty()) throw ParameterError("no trial pairs");
  auto scored = score_trial_pairs(*system.sre, *t->head, corpus.trials);
  const double eer = compute_eer(scored);
  if (scores) *scores = std::move(scored);
  return eer;
}

Checkpoint pretrain_checkpoint(const SREModel& model) {
  Checkpoint c;
  c.config_hash = sre_config_hash(model.config());
  c.metadata = json{{"kind", "pretrain"}, {"sre", sre_config_to_json(model.config())}}.dump();
  export_parameters(c, model.parameters());
  return c;
}

Checkpoint system_checkpoint(const TrainedSystem& system, const Corpus& corpus,
                             const AngularSoftmaxConfig& angular) {
  Checkpoint c;
  c.config_hash = sre_config_hash(system.sre->config());
  json heads = json::array();
  for (const auto& t : system.tasks) heads.push_back(head_config_to_json(t.config));
  c.metadata = json{{"kind", "finetune"},
                    {"sre", sre_config_to_json(system.sre->config())},
                    {"heads", heads},
                    {"classes", {{"kws", corpus.kws_classes}, {"sv", corpus.sv_speakers}}},
                    {"angular",
                     {{"margin", angular.margin},
                      {"lambda0", angular.lambda0},
                      {"gamma", angular.gamma},
                      {"lambda_min", angular.lambda_min}}}}
                   .dump();
  export_parameters(c, system.sre->parameters());
  for (const auto& t : system.tasks) {
    export_parameters(c, t.head->parameters());
    export_parameters(c, t.head->buffers());
    export_parameters(c, t.criterion->parameters(task_name(t.config.task)));
  }
  return c;
}

namespace {

json parse_metadata(const Checkpoint& checkpoint) {
  try {
    return json::parse(checkpoint.metadata);
  } catch (const json::parse_error&) {
    throw FormatError("checkpoint metadata is not valid JSON");
  }
}

}  // namespace

std::unique_ptr<SREModel> sre_from_checkpoint(const Checkpoint& checkpoint,
                                              const SREConfig& expected) {
  Rng rng(0);
  auto model = std::make_unique<SREModel>(expected, rng);
  import_parameters(checkpoint, model->parameters());
  return model;
}

TrainedSystem system_from_checkpoint(const Checkpoint& checkpoint) {
  const json meta = parse_metadata(checkpoint);
  if (!meta.contains("sre")) throw FormatError("checkpoint metadata lacks the sre config");
  TrainedSystem system;
  system.sre = sre_from_checkpoint(checkpoint, sre_config_from_json(meta["sre"]));
  if (!meta.contains("heads")) return system;
  AngularSoftmaxConfig angular;
  try {
    const json& a = meta.at("angular");
    angular.margin = a.at("margin").get<int>();
    angular.lambda0 = a.at("lambda0").get<double>();
    angular.gamma = a.at("gamma").get<double>();
    angular.lambda_min = a.at("lambda_min").get<double>();
  } catch (const json::exception&) {
    throw FormatError("checkpoint metadata has a malformed angular section");
  }
  const std::size_t speakers = meta.value("/classes/sv"_json_pointer, std::size_t{0});
  Rng rng(0);
  for (const json& h : meta["heads"]) {
    TaskModel t = build_task(head_config_from_json(h), system.sre->config().d_model,
                             angular, std::max<std::size_t>(speakers, 2), rng);
    import_parameters(checkpoint, t.head->parameters());
    import_parameters(checkpoint, t.head->buffers());
    import_parameters(checkpoint, t.criterion->parameters(task_name(t.config.task)));
    system.tasks.push_back(std::move(t));
  }
  return system;
}

}  // namespace sremtl
