#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sremtl/data.hpp"
#include "sremtl/heads.hpp"
#include "sremtl/sre.hpp"

namespace sremtl {

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double top1_accuracy(const Tensor& logits, std::span<const int> labels);

struct ScoredTrial {
  double score = 0.0;
  bool same_speaker = false;
};

/// Equal error rate. Trials are accepted when score >= threshold; FPR and FNR
/// are evaluated at every distinct score (plus +inf) and the crossing of
/// FPR - FNR is interpolated linearly between adjacent thresholds.
double compute_eer(std::span<const ScoredTrial> trials);

// Samples [offset, offset + length) of the clip, zero-padded past its end.
Tensor clip_window(const WavClip& clip, std::size_t offset, std::size_t length);

/// Embedding of a clip: one 2 s window for clips up to 2 s (zero-padded),
/// otherwise the mean over the non-overlapping full 2 s windows.
std::vector<double> embed_clip(const SREModel& model, TaskHead& head,
                               const WavClip& clip);

std::vector<ScoredTrial> score_trial_pairs(const SREModel& model, TaskHead& head,
                                           const TrialSet& trials);

// Class scores [N, n] for every utterance (first second of each clip).
Tensor classify_utterances(const SREModel& model, TaskHead& head,
                           const UtteranceSet& data, std::size_t batch = 16);

double evaluate_kws(const SREModel& model, TaskHead& head,
                    const UtteranceSet& test);

void write_results(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, double>>& metrics);
void write_score_dump(const std::filesystem::path& path,
                      std::span<const ScoredTrial> trials);

}  // namespace sremtl
