#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sremtl/rng.hpp"
#include "sremtl/tensor.hpp"

namespace sremtl {

inline constexpr int kSampleRate = 16000;
// One second keyword clips, two second speaker slices.
inline constexpr std::size_t kKwsSamples = 16000;
inline constexpr std::size_t kSvSamples = 32000;

enum class Task { kws, sv };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);
std::size_t task_clip_samples(Task task);

struct WavClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::string source_id;
};

struct LabeledUtterance {
  WavClip clip;
  Task task = Task::kws;
  int label = 0;
};

using UtteranceSet = std::vector<LabeledUtterance>;

struct TrialPair {
  std::size_t clip_a = 0;  // indices into TrialSet::clips
  std::size_t clip_b = 0;
  bool same_speaker = false;
};

struct TrialSet {
  std::vector<WavClip> clips;
  std::vector<int> speakers;  // speaker id per clip (held-out ids)
  std::vector<TrialPair> pairs;
};

struct Batch {
  Tensor inputs;  // [B, L]
  std::vector<int> labels;
  Task task = Task::kws;

  std::size_t size() const { return labels.size(); }
  // Row b as a [L] waveform.
  Tensor wave(std::size_t b) const;
};

// ---- WAV (RIFF, PCM16, mono, 16 kHz) ----

WavClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WavClip& clip);
std::vector<std::uint8_t> encode_wav(const WavClip& clip);
WavClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id);

/// Random contiguous window of `length_samples`, or the clip right-padded with
/// zeros when it is shorter.
WavClip slice_utterance(const WavClip& clip, std::size_t length_samples,
                        Rng& rng);

// ---- Synthetic corpus ----

struct SynthSpec {
  std::size_t n_keywords = 12;  // includes "unknown" and "silence"
  std::size_t n_speakers = 20;  // includes the held-out trial speakers
  std::size_t clips_per_class = 40;
  std::size_t kws_test_clips_per_class = 10;
  std::size_t held_out_speakers = 4;
  std::size_t trial_pairs = 200;
  std::size_t unknown_templates = 8;
  std::uint64_t seed = 7;
};

struct SynthCorpus {
  UtteranceSet kws_train;
  UtteranceSet kws_test;
  UtteranceSet sv_train;
  TrialSet trials;
  std::vector<std::string> keyword_names;
  std::size_t sv_train_speakers = 0;
};

SynthCorpus synth_dataset(const SynthSpec& spec);

// ---- On-disk corpora ----

/// Keyword corpus in folder-per-word layout. Folders named in `keywords` map
/// to classes 0..n-1; "_silence_" / "_background_noise_" map to the silence
/// class and every other folder to "unknown" (classes n and n+1).
UtteranceSet load_keyword_folders(const std::filesystem::path& root,
                                  const std::vector<std::string>& keywords);

/// Speaker corpus in <speaker>/<session>/<clip>.wav layout; speakers are
/// numbered in sorted directory order.
UtteranceSet load_speaker_tree(const std::filesystem::path& root,
                               std::vector<std::string>* speaker_names = nullptr);

/// Trial list lines "<0|1> <relative_path_a> <relative_path_b>".
TrialSet read_trial_list(const std::filesystem::path& list,
                         const std::filesystem::path& root);
void write_trial_list(const std::filesystem::path& list,
                      const std::vector<std::string>& clip_paths,
                      const TrialSet& trials);

// ---- Batching ----

/// Endless shuffled mini-batch stream over a fixed dataset.
///
/// Each epoch visits every utterance once in a fresh permutation drawn from
/// the loader's own PRNG; the final batch of an epoch may be short. Clips are
/// cut (or padded) to `clip_samples` with a random window on every fetch.
class BatchLoader {
 public:
  BatchLoader(std::shared_ptr<const UtteranceSet> data, Task task,
              std::size_t clip_samples, Rng rng);

  Batch next(std::size_t batch_size);

  std::size_t dataset_size() const { return data_->size(); }
  std::size_t epoch() const { return epoch_; }
  Task task() const { return task_; }

 private:
  void reshuffle();

  std::shared_ptr<const UtteranceSet> data_;
  Task task_;
  std::size_t clip_samples_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace sremtl
