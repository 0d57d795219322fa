#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "sremtl/data.hpp"

namespace sremtl {

namespace fs = std::filesystem;

Tensor Batch::wave(std::size_t b) const {
  const std::size_t len = inputs.dim(1);
  const auto row = inputs.data().subspan(b * len, len);
  return Tensor({len}, std::vector<double>(row.begin(), row.end()));
}

BatchLoader::BatchLoader(std::shared_ptr<const UtteranceSet> data, Task task,
                         std::size_t clip_samples, Rng rng)
    : data_(std::move(data)),
      task_(task),
      clip_samples_(clip_samples),
      rng_(std::move(rng)) {
  if (!data_ || data_->empty()) {
    throw ContractError("BatchLoader: dataset is empty");
  }
  if (clip_samples_ == 0) throw ParameterError("BatchLoader: zero clip length");
  order_.resize(data_->size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchLoader::reshuffle() {
  rng_.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

Batch BatchLoader::next(std::size_t batch_size) {
  if (batch_size == 0) throw ParameterError("BatchLoader: batch size is zero");
  if (cursor_ == order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t take = std::min(batch_size, order_.size() - cursor_);
  Batch batch;
  batch.task = task_;
  std::vector<double> values;
  values.reserve(take * clip_samples_);
  for (std::size_t i = 0; i < take; ++i) {
    const LabeledUtterance& u = (*data_)[order_[cursor_ + i]];
    const WavClip cut = slice_utterance(u.clip, clip_samples_, rng_);
    values.insert(values.end(), cut.samples.begin(), cut.samples.end());
    batch.labels.push_back(u.label);
  }
  cursor_ += take;
  batch.inputs = Tensor({take, clip_samples_}, std::move(values));
  return batch;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory()
                    : (e.is_regular_file() && e.path().extension() == ".wav"))
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> sorted_wavs_recursive(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav")
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

UtteranceSet load_keyword_folders(const fs::path& root,
                                  const std::vector<std::string>& keywords) {
  const int unknown = static_cast<int>(keywords.size());
  const int silence = unknown + 1;
  UtteranceSet out;
  for (const auto& dir : sorted_entries(root, true)) {
    const std::string name = dir.filename().string();
    int label = unknown;
    if (name == "_silence_" || name == "_background_noise_") {
      label = silence;
    } else if (auto it = std::find(keywords.begin(), keywords.end(), name);
               it != keywords.end()) {
      label = static_cast<int>(it - keywords.begin());
    }
    for (const auto& file : sorted_entries(dir, false)) {
      out.push_back({read_wav(file), Task::kws, label});
    }
  }
  return out;
}

UtteranceSet load_speaker_tree(const fs::path& root,
                               std::vector<std::string>* speaker_names) {
  UtteranceSet out;
  int id = 0;
  for (const auto& dir : sorted_entries(root, true)) {
    const auto files = sorted_wavs_recursive(dir);
    if (files.empty()) continue;
    if (speaker_names) speaker_names->push_back(dir.filename().string());
    for (const auto& file : files) out.push_back({read_wav(file), Task::sv, id});
    ++id;
  }
  return out;
}

TrialSet read_trial_list(const fs::path& list, const fs::path& root) {
  std::ifstream in(list);
  if (!in) throw IoError("cannot open trial list " + list.string());
  TrialSet trials;
  std::map<std::string, std::size_t> clip_index;
  std::map<std::string, int> speaker_index;
  auto intern = [&](const std::string& rel) {
    auto it = clip_index.find(rel);
    if (it != clip_index.end()) return it->second;
    const std::string speaker = fs::path(rel).begin()->string();
    auto [sp, inserted] = speaker_index.emplace(
        speaker, static_cast<int>(speaker_index.size()));
    trials.clips.push_back(read_wav(root / rel));
    trials.speakers.push_back(sp->second);
    clip_index.emplace(rel, trials.clips.size() - 1);
    return trials.clips.size() - 1;
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string label, a, b, extra;
    if (!(fields >> label >> a >> b) || (fields >> extra) ||
        (label != "0" && label != "1")) {
      throw FormatError(list.string() + ":" + std::to_string(line_no) +
                        ": expected '<0|1> <path_a> <path_b>'");
    }
    const std::size_t ia = intern(a);
    const std::size_t ib = intern(b);
    trials.pairs.push_back({ia, ib, label == "1"});
  }
  return trials;
}

void write_trial_list(const fs::path& list,
                      const std::vector<std::string>& clip_paths,
                      const TrialSet& trials) {
  std::ofstream out(list, std::ios::trunc);
  if (!out) throw IoError("cannot write trial list " + list.string());
  for (const auto& p : trials.pairs) {
    out << (p.same_speaker ? '1' : '0') << ' ' << clip_paths.at(p.clip_a) << ' '
        << clip_paths.at(p.clip_b) << '\n';
  }
  if (!out) throw IoError("short write to " + list.string());
}

}  // namespace sremtl
