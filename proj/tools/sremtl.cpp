// Command-line driver: pretrain, finetune, evaluate, synth-data.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "sremtl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sremtl;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kIo = 2, kNumeric = 3 };

RunConfig read_config(const std::string& path) {
  RunConfig config = path.empty() ? RunConfig{} : load_run_config(path);
  apply_env_overrides(config);
  return config;
}

void write_log(const MetricsLog& log, const std::string& path) {
  if (!path.empty()) log.write(path);
}

std::string default_log(const std::string& out) { return out + ".metrics.csv"; }

int cmd_pretrain(const std::string& config_path, const std::string& out,
                 std::string log_path) {
  const RunConfig config = read_config(config_path);
  const Corpus corpus = load_corpus(config.data);
  auto model = make_sre(config);
  const PretrainResult result = run_pretrain(config, corpus, *model);
  save_checkpoint(out, pretrain_checkpoint(*model));
  write_log(result.log, log_path.empty() ? default_log(out) : log_path);
  const auto& r = result.log.records();
  std::printf("pretrain_steps=%zu\n", r.size());
  if (!r.empty()) std::printf("final_loss=%.6f\n", r.back().loss);
  if (!result.perplexity.empty()) {
    std::printf("final_perplexity=%.4f\n", result.perplexity.back());
  }
  std::printf("config_hash=%016llx\n",
              static_cast<unsigned long long>(config.sre_hash()));
  return kOk;
}

int cmd_finetune(const std::string& config_path, const std::string& sre_path,
                 bool random_init, bool freeze, const std::string& out,
                 std::string log_path) {
  RunConfig config = read_config(config_path);
  if (random_init) config.train.ablation = Ablation::random_sre;
  if (freeze) config.train.ablation = Ablation::frozen_sre;
  const Corpus corpus = load_corpus(config.data);
  std::unique_ptr<SREModel> sre;
  if (config.train.ablation == Ablation::random_sre) {
    sre = make_sre(config);
  } else {
    if (sre_path.empty()) {
      throw ParameterError("finetune needs --sre <checkpoint> unless --random-init is given");
    }
    sre = sre_from_checkpoint(load_checkpoint(sre_path), config.sre);
  }
  TrainedSystem system = run_finetune(config, corpus, std::move(sre));
  save_checkpoint(out, system_checkpoint(system, corpus, config.angular));
  write_log(system.log, log_path.empty() ? default_log(out) : log_path);
  std::printf("updates=%zu\n", system.log.size());
  for (const auto& t : system.tasks) {
    const std::string name(task_name(t.config.task));
    const std::size_t last = config.train.max_iterations;
    const std::size_t from = last > 50 ? last - 50 : 0;
    if (last > 0) {
      std::printf("%s_final_loss=%.6f\n", name.c_str(),
                  system.log.mean_loss(name, from, last));
    }
  }
  return kOk;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint,
                 const std::string& task_text, const std::string& results,
                 const std::string& scores_path) {
  const RunConfig config = read_config(config_path);
  const Task task = parse_task(task_text);
  TrainedSystem system = system_from_checkpoint(load_checkpoint(checkpoint));
  if (!system.find(task)) {
    throw ParameterError("checkpoint '" + checkpoint + "' has no " + task_text + " head");
  }
  const Corpus corpus = load_corpus(config.data);
  std::vector<std::pair<std::string, double>> metrics;
  if (task == Task::kws) {
    const double acc = evaluate_kws(system, corpus);
    std::printf("kws_top1=%.6f\n", acc);
    metrics.emplace_back("kws_top1", acc);
  } else {
    std::vector<ScoredTrial> scored;
    const double eer = evaluate_sv(system, corpus, &scored);
    std::printf("sv_eer=%.6f\n", eer);
    metrics.emplace_back("sv_eer", eer);
    metrics.emplace_back("sv_trials", static_cast<double>(scored.size()));
    if (!scores_path.empty()) write_score_dump(scores_path, scored);
  }
  if (!results.empty()) write_results(results, metrics);
  return kOk;
}

void write_clip(const fs::path& root, const std::string& rel, const WavClip& clip) {
  const fs::path path = root / rel;
  fs::create_directories(path.parent_path());
  write_wav(path, clip);
}

int cmd_synth(const std::string& config_path, const std::string& out) {
  const RunConfig config = read_config(config_path);
  const SynthCorpus corpus = synth_dataset(config.data.synthetic);
  const fs::path root(out);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create output directory '" + out + "'");

  std::map<std::string, std::size_t> counter;
  auto kws_dump = [&](const UtteranceSet& set, const std::string& split) {
    for (const auto& u : set) {
      const std::string& word = corpus.keyword_names[static_cast<std::size_t>(u.label)];
      const std::string key = split + "/" + word;
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.wav", counter[key]++);
      write_clip(root, "kws/" + key + "/" + name, u.clip);
    }
  };
  kws_dump(corpus.kws_train, "train");
  kws_dump(corpus.kws_test, "test");

  for (const auto& u : corpus.sv_train) {
    const std::string key = "sv/train/spk" + std::to_string(u.label);
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.wav", counter[key]++);
    write_clip(root, key + "/s0/" + name, u.clip);
  }
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < corpus.trials.clips.size(); ++i) {
    const std::string key = "spk" + std::to_string(corpus.trials.speakers[i]);
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.wav", counter["test/" + key]++);
    paths.push_back(key + "/s0/" + name);
    write_clip(root / "sv" / "test", paths.back(), corpus.trials.clips[i]);
  }
  write_trial_list(root / "trials.txt", paths, corpus.trials);

  std::vector<std::string> keywords(corpus.keyword_names.begin(),
                                    corpus.keyword_names.end() - 2);
  RunConfig data_config = config;
  data_config.data.kws_dir = (root / "kws" / "train").string();
  data_config.data.kws_test_dir = (root / "kws" / "test").string();
  data_config.data.kws_keywords = keywords;
  data_config.data.sv_dir = (root / "sv" / "train").string();
  data_config.data.trials = (root / "trials.txt").string();
  data_config.data.trials_root = (root / "sv" / "test").string();
  std::ofstream manifest(root / "config.json");
  manifest << data_config.to_json().dump(2) << '\n';
  if (!manifest) throw IoError("cannot write " + (root / "config.json").string());

  std::printf("kws_train=%zu\nkws_test=%zu\nsv_train=%zu\ntrial_clips=%zu\ntrial_pairs=%zu\n",
              corpus.kws_train.size(), corpus.kws_test.size(), corpus.sv_train.size(),
              corpus.trials.clips.size(), corpus.trials.pairs.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech representation pretraining and multi-task fine-tuning"};
  app.require_subcommand(1);

  std::string config_path, out, log_path, sre_path, checkpoint, task = "kws",
      results, scores;
  bool random_init = false, freeze = false;

  auto* pre = app.add_subcommand("pretrain", "Self-supervised SRE pretraining");
  pre->add_option("-c,--config", config_path, "Run configuration (JSON)");
  pre->add_option("-o,--out", out, "Output checkpoint")->required();
  pre->add_option("--log", log_path, "Metrics log (default <out>.metrics.csv)");

  auto* fin = app.add_subcommand("finetune", "Round-robin fine-tuning of the task heads");
  fin->add_option("-c,--config", config_path, "Run configuration (JSON)");
  fin->add_option("--sre", sre_path, "Pretrained SRE checkpoint");
  fin->add_flag("--random-init", random_init, "Start from a randomly initialized SRE");
  fin->add_flag("--freeze-sre", freeze, "Keep the SRE fixed for the whole run");
  fin->add_option("-o,--out", out, "Output checkpoint")->required();
  fin->add_option("--log", log_path, "Metrics log (default <out>.metrics.csv)");

  auto* ev = app.add_subcommand("evaluate", "Top-1 accuracy (kws) or EER (sv)");
  ev->add_option("-c,--config", config_path, "Run configuration (data section)");
  ev->add_option("--checkpoint", checkpoint, "Fine-tuned checkpoint")->required();
  ev->add_option("--task", task, "kws or sv")->check(CLI::IsMember({"kws", "sv"}));
  ev->add_option("--results", results, "Write metric=value lines here");
  ev->add_option("--scores", scores, "Write per-trial 'score label' lines here");

  auto* syn = app.add_subcommand("synth-data", "Write the synthetic corpus as WAV files");
  syn->add_option("-c,--config", config_path, "Run configuration (data.synthetic)");
  syn->add_option("-o,--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*pre) return cmd_pretrain(config_path, out, log_path);
    if (*fin) {
      if (random_init && freeze) {
        throw ParameterError("--random-init and --freeze-sre are exclusive");
      }
      return cmd_finetune(config_path, sre_path, random_init, freeze, out, log_path);
    }
    if (*ev) return cmd_evaluate(config_path, checkpoint, task, results, scores);
    if (*syn) return cmd_synth(config_path, out);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}
