#include "sremtl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace sremtl {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::string_view section,
                    std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    throw FormatError("config section '" + std::string(section) +
                      "' must be an object");
  }
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!keys.count(item.key())) {
      throw FormatError("unknown key '" + item.key() + "' in config section '" +
                        std::string(section) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, std::string_view section, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw FormatError("");
    } else if constexpr (std::is_same_v<T, int>) {
      if (!it->is_number_integer()) throw FormatError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw FormatError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw FormatError("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw FormatError("config key '" + std::string(section) + "." + key +
                      "' has the wrong type (" + it->type_name() + ")");
  }
}

std::string read_string(const json& obj, std::string_view section, const char* key,
                        std::string fallback) {
  read(obj, section, key, fallback);
  return fallback;
}

}  // namespace

HeadConfig HeadSpec::resolve(std::size_t kws_classes) const {
  HeadConfig c;
  c.task = task;
  c.kind = kind;
  c.output = task == Task::kws ? OutputKind::class_scores : OutputKind::embedding;
  c.out_dim = task == Task::kws ? kws_classes : embedding_dim;
  c.lstm_hidden = lstm_hidden;
  c.all_endpoints = all_endpoints;
  c.cnn_filters = cnn_filters;
  c.cnn_kernel = cnn_kernel;
  c.input_seconds = task == Task::kws ? 1 : 2;
  c.bn_momentum = bn_momentum;
  return c;
}

json sre_config_to_json(const SREConfig& c) {
  return json{{"conv_channels", c.conv_channels},
              {"d_model", c.d_model},
              {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},
              {"ffn_dim", c.ffn_dim},
              {"codebooks", c.codebooks},
              {"entries_per_codebook", c.entries_per_codebook},
              {"code_dim", c.code_dim},
              {"mask_prob", c.mask_prob},
              {"mask_span", c.mask_span},
              {"distractors", c.distractors},
              {"contrastive_temperature", c.contrastive_temperature},
              {"gumbel_start", c.gumbel_start},
              {"gumbel_end", c.gumbel_end},
              {"gumbel_decay", c.gumbel_decay},
              {"diversity_weight", c.diversity_weight},
              {"weight_decay", c.weight_decay},
              {"hard_quantizer", c.hard_quantizer},
              {"positional_encoding", c.positional_encoding},
              {"normalize_waveform", c.normalize_waveform},
              {"first_layer_norm", c.first_layer_norm}};
}

SREConfig sre_config_from_json(const json& j) {
  reject_unknown(j, "sre",
                 {"conv_channels", "d_model", "n_layers", "n_heads", "ffn_dim",
                  "codebooks", "entries_per_codebook", "code_dim", "mask_prob",
                  "mask_span", "distractors", "contrastive_temperature",
                  "gumbel_start", "gumbel_end", "gumbel_decay", "diversity_weight",
                  "weight_decay", "hard_quantizer", "positional_encoding",
                  "normalize_waveform", "first_layer_norm"});
  SREConfig c;
  read(j, "sre", "conv_channels", c.conv_channels);
  read(j, "sre", "d_model", c.d_model);
  read(j, "sre", "n_layers", c.n_layers);
  read(j, "sre", "n_heads", c.n_heads);
  read(j, "sre", "ffn_dim", c.ffn_dim);
  read(j, "sre", "codebooks", c.codebooks);
  read(j, "sre", "entries_per_codebook", c.entries_per_codebook);
  read(j, "sre", "code_dim", c.code_dim);
  read(j, "sre", "mask_prob", c.mask_prob);
  read(j, "sre", "mask_span", c.mask_span);
  read(j, "sre", "distractors", c.distractors);
  read(j, "sre", "contrastive_temperature", c.contrastive_temperature);
  read(j, "sre", "gumbel_start", c.gumbel_start);
  read(j, "sre", "gumbel_end", c.gumbel_end);
  read(j, "sre", "gumbel_decay", c.gumbel_decay);
  read(j, "sre", "diversity_weight", c.diversity_weight);
  read(j, "sre", "weight_decay", c.weight_decay);
  read(j, "sre", "hard_quantizer", c.hard_quantizer);
  read(j, "sre", "positional_encoding", c.positional_encoding);
  read(j, "sre", "normalize_waveform", c.normalize_waveform);
  read(j, "sre", "first_layer_norm", c.first_layer_norm);
  c.validate();
  return c;
}

std::uint64_t sre_config_hash(const SREConfig& config) {
  return fnv1a64(sre_config_to_json(config).dump());
}

json head_config_to_json(const HeadConfig& c) {
  return json{{"task", task_name(c.task)},
              {"kind", head_kind_name(c.kind)},
              {"output", c.output == OutputKind::embedding ? "embedding" : "class_scores"},
              {"out_dim", c.out_dim},
              {"lstm_hidden", c.lstm_hidden},
              {"all_endpoints", c.all_endpoints},
              {"cnn_filters", c.cnn_filters},
              {"cnn_kernel", c.cnn_kernel},
              {"input_seconds", c.input_seconds},
              {"bn_momentum", c.bn_momentum},
              {"bn_eps", c.bn_eps}};
}

HeadConfig head_config_from_json(const json& j) {
  reject_unknown(j, "head",
                 {"task", "kind", "output", "out_dim", "lstm_hidden", "all_endpoints",
                  "cnn_filters", "cnn_kernel", "input_seconds", "bn_momentum",
                  "bn_eps"});
  HeadConfig c;
  c.task = parse_task(read_string(j, "head", "task", "kws"));
  c.kind = parse_head_kind(read_string(j, "head", "kind", "linear"));
  const std::string output = read_string(j, "head", "output", "class_scores");
  if (output != "class_scores" && output != "embedding") {
    throw FormatError("head output must be class_scores or embedding");
  }
  c.output = output == "embedding" ? OutputKind::embedding : OutputKind::class_scores;
  read(j, "head", "out_dim", c.out_dim);
  read(j, "head", "lstm_hidden", c.lstm_hidden);
  read(j, "head", "all_endpoints", c.all_endpoints);
  read(j, "head", "cnn_filters", c.cnn_filters);
  read(j, "head", "cnn_kernel", c.cnn_kernel);
  read(j, "head", "input_seconds", c.input_seconds);
  read(j, "head", "bn_momentum", c.bn_momentum);
  read(j, "head", "bn_eps", c.bn_eps);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  sre.validate();
  train.validate();
  angular.validate();
  if (heads.empty()) throw ParameterError("config needs at least one head");
  std::set<Task> seen;
  for (const auto& h : heads) {
    if (!seen.insert(h.task).second) {
      throw ParameterError("config declares two heads for task " +
                           std::string(task_name(h.task)));
    }
    h.resolve(2).validate();
  }
  if (train.mode == TrainMode::single_task && heads.size() != 1) {
    throw ParameterError("train.mode single_task needs exactly one head");
  }
}

std::uint64_t RunConfig::sre_hash() const { return sre_config_hash(sre); }

const HeadSpec* RunConfig::head_for(Task task) const {
  for (const auto& h : heads)
    if (h.task == task) return &h;
  return nullptr;
}

json RunConfig::to_json() const {
  json heads_j = json::array();
  for (const auto& h : heads) {
    heads_j.push_back({{"task", task_name(h.task)},
                       {"kind", head_kind_name(h.kind)},
                       {"embedding_dim", h.embedding_dim},
                       {"lstm_hidden", h.lstm_hidden},
                       {"all_endpoints", h.all_endpoints},
                       {"cnn_filters", h.cnn_filters},
                       {"cnn_kernel", h.cnn_kernel},
                       {"bn_momentum", h.bn_momentum}});
  }
  const auto& s = data.synthetic;
  return json{
      {"seed", seed},
      {"sre", sre_config_to_json(sre)},
      {"heads", heads_j},
      {"losses",
       {{"angular",
         {{"margin", angular.margin},
          {"lambda0", angular.lambda0},
          {"gamma", angular.gamma},
          {"lambda_min", angular.lambda_min}}}}},
      {"train",
       {{"mode", train_mode_name(train.mode)},
        {"ablation", ablation_name(train.ablation)},
        {"max_iterations", train.max_iterations},
        {"freeze_iters", train.freeze_iters},
        {"lr_head", train.lr_head},
        {"lr_sre", train.lr_sre},
        {"beta1", train.adam.beta1},
        {"beta2", train.adam.beta2},
        {"eps", train.adam.eps},
        {"kws_batch", train.kws_batch},
        {"sv_batch", train.sv_batch},
        {"pretrain_steps", train.pretrain_steps},
        {"pretrain_lr", train.pretrain_lr},
        {"pretrain_batch", train.pretrain_batch}}},
      {"data",
       {{"synthetic",
         {{"n_keywords", s.n_keywords},
          {"n_speakers", s.n_speakers},
          {"clips_per_class", s.clips_per_class},
          {"kws_test_clips_per_class", s.kws_test_clips_per_class},
          {"held_out_speakers", s.held_out_speakers},
          {"trial_pairs", s.trial_pairs},
          {"unknown_templates", s.unknown_templates},
          {"seed", s.seed}}},
        {"kws_dir", data.kws_dir},
        {"kws_test_dir", data.kws_test_dir},
        {"kws_keywords", data.kws_keywords},
        {"sv_dir", data.sv_dir},
        {"trials", data.trials},
        {"trials_root", data.trials_root}}}};
}

RunConfig parse_run_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(root, "<root>", {"seed", "sre", "heads", "losses", "train", "data"});
  RunConfig c;
  read(root, "<root>", "seed", c.seed);
  if (root.contains("sre")) c.sre = sre_config_from_json(root["sre"]);

  if (root.contains("heads")) {
    const json& hs = root["heads"];
    if (!hs.is_array()) throw FormatError("config key 'heads' must be a list");
    c.heads.clear();
    for (const json& h : hs) {
      reject_unknown(h, "heads[]",
                     {"task", "kind", "embedding_dim", "lstm_hidden", "all_endpoints",
                      "cnn_filters", "cnn_kernel", "bn_momentum"});
      if (!h.contains("task")) throw FormatError("every head needs a 'task'");
      HeadSpec spec;
      spec.task = parse_task(read_string(h, "heads[]", "task", ""));
      spec.kind = parse_head_kind(read_string(h, "heads[]", "kind", "linear"));
      read(h, "heads[]", "embedding_dim", spec.embedding_dim);
      read(h, "heads[]", "lstm_hidden", spec.lstm_hidden);
      read(h, "heads[]", "all_endpoints", spec.all_endpoints);
      read(h, "heads[]", "cnn_filters", spec.cnn_filters);
      read(h, "heads[]", "cnn_kernel", spec.cnn_kernel);
      read(h, "heads[]", "bn_momentum", spec.bn_momentum);
      c.heads.push_back(spec);
    }
  }

  if (root.contains("losses")) {
    const json& l = root["losses"];
    reject_unknown(l, "losses", {"angular"});
    if (l.contains("angular")) {
      const json& a = l["angular"];
      reject_unknown(a, "losses.angular", {"margin", "lambda0", "gamma", "lambda_min"});
      read(a, "losses.angular", "margin", c.angular.margin);
      read(a, "losses.angular", "lambda0", c.angular.lambda0);
      read(a, "losses.angular", "gamma", c.angular.gamma);
      read(a, "losses.angular", "lambda_min", c.angular.lambda_min);
    }
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    reject_unknown(t, "train",
                   {"mode", "ablation", "max_iterations", "freeze_iters", "lr_head",
                    "lr_sre", "beta1", "beta2", "eps", "kws_batch", "sv_batch",
                    "pretrain_steps", "pretrain_lr", "pretrain_batch"});
    auto& tr = c.train;
    tr.mode = parse_train_mode(read_string(t, "train", "mode", "multi_task"));
    tr.ablation = parse_ablation(read_string(t, "train", "ablation", "normal"));
    read(t, "train", "max_iterations", tr.max_iterations);
    read(t, "train", "freeze_iters", tr.freeze_iters);
    read(t, "train", "lr_head", tr.lr_head);
    read(t, "train", "lr_sre", tr.lr_sre);
    read(t, "train", "beta1", tr.adam.beta1);
    read(t, "train", "beta2", tr.adam.beta2);
    read(t, "train", "eps", tr.adam.eps);
    read(t, "train", "kws_batch", tr.kws_batch);
    read(t, "train", "sv_batch", tr.sv_batch);
    read(t, "train", "pretrain_steps", tr.pretrain_steps);
    read(t, "train", "pretrain_lr", tr.pretrain_lr);
    read(t, "train", "pretrain_batch", tr.pretrain_batch);
  }

  if (root.contains("data")) {
    const json& d = root["data"];
    reject_unknown(d, "data",
                   {"synthetic", "kws_dir", "kws_test_dir", "kws_keywords", "sv_dir",
                    "trials", "trials_root"});
    if (d.contains("synthetic")) {
      const json& s = d["synthetic"];
      reject_unknown(s, "data.synthetic",
                     {"n_keywords", "n_speakers", "clips_per_class",
                      "kws_test_clips_per_class", "held_out_speakers", "trial_pairs",
                      "unknown_templates", "seed"});
      auto& sp = c.data.synthetic;
      read(s, "data.synthetic", "n_keywords", sp.n_keywords);
      read(s, "data.synthetic", "n_speakers", sp.n_speakers);
      read(s, "data.synthetic", "clips_per_class", sp.clips_per_class);
      read(s, "data.synthetic", "kws_test_clips_per_class", sp.kws_test_clips_per_class);
      read(s, "data.synthetic", "held_out_speakers", sp.held_out_speakers);
      read(s, "data.synthetic", "trial_pairs", sp.trial_pairs);
      read(s, "data.synthetic", "unknown_templates", sp.unknown_templates);
      read(s, "data.synthetic", "seed", sp.seed);
    }
    c.data.kws_dir = read_string(d, "data", "kws_dir", "");
    c.data.kws_test_dir = read_string(d, "data", "kws_test_dir", "");
    c.data.sv_dir = read_string(d, "data", "sv_dir", "");
    c.data.trials = read_string(d, "data", "trials", "");
    c.data.trials_root = read_string(d, "data", "trials_root", "");
    if (d.contains("kws_keywords")) {
      const json& k = d["kws_keywords"];
      if (!k.is_array()) throw FormatError("data.kws_keywords must be a list");
      for (const json& w : k) {
        if (!w.is_string()) throw FormatError("data.kws_keywords entries must be strings");
        c.data.kws_keywords.push_back(w.get<std::string>());
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

void apply_env_overrides(RunConfig& config) {
  const char* v = std::getenv("MTL_SEED");
  if (!v || !*v) return;
  try {
    std::size_t used = 0;
    const unsigned long long seed = std::stoull(v, &used);
    if (used != std::string_view(v).size()) throw std::invalid_argument("");
    config.seed = seed;
  } catch (const std::exception&) {
    throw ParameterError(std::string("MTL_SEED must be an unsigned integer, got '") +
                         v + "'");
  }
}

}  // namespace sremtl
