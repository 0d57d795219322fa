#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sremtl/data.hpp"
#include "sremtl/heads.hpp"
#include "sremtl/losses.hpp"
#include "sremtl/sre.hpp"
#include "sremtl/trainer.hpp"

namespace sremtl {

struct HeadSpec {
  Task task = Task::kws;
  HeadKind kind = HeadKind::linear;
  std::size_t embedding_dim = 256;  // SV heads only
  std::size_t lstm_hidden = 256;
  bool all_endpoints = false;
  std::size_t cnn_filters = 128;
  std::size_t cnn_kernel = 25;
  double bn_momentum = 0.9;

  // KWS heads score `kws_classes` classes; SV heads emit embedding_dim values.
  HeadConfig resolve(std::size_t kws_classes) const;
};

struct DataConfig {
  // Used unless kws_dir / sv_dir point at real corpora.
  SynthSpec synthetic;
  std::string kws_dir;
  std::string kws_test_dir;
  std::vector<std::string> kws_keywords;
  std::string sv_dir;
  std::string trials;
  std::string trials_root;

  bool uses_disk() const { return !kws_dir.empty() || !sv_dir.empty(); }
};

struct RunConfig {
  std::uint64_t seed = 7;
  SREConfig sre;
  std::vector<HeadSpec> heads{HeadSpec{Task::kws}, HeadSpec{Task::sv}};
  AngularSoftmaxConfig angular;
  TrainConfig train;
  DataConfig data;

  void validate() const;
  // Hash of the canonical "sre" section; recorded in checkpoints.
  std::uint64_t sre_hash() const;
  nlohmann::json to_json() const;
  const HeadSpec* head_for(Task task) const;
};

/// Parses a JSON run configuration. Missing keys take their defaults; unknown
/// keys and mistyped values are FormatError, out-of-range values
/// ParameterError.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
// MTL_SEED, when set, replaces the seed.
void apply_env_overrides(RunConfig& config);

nlohmann::json sre_config_to_json(const SREConfig& config);
SREConfig sre_config_from_json(const nlohmann::json& j);
std::uint64_t sre_config_hash(const SREConfig& config);

nlohmann::json head_config_to_json(const HeadConfig& config);
HeadConfig head_config_from_json(const nlohmann::json& j);

}  // namespace sremtl
