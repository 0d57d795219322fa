#include "sremtl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "sremtl/losses.hpp"

namespace sremtl {

double top1_accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw ShapeError("top1_accuracy: logits must be [N, n] with N = #labels >= 1");
  }
  const std::size_t n = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.data().subspan(i * n, n);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double compute_eer(std::span<const ScoredTrial> trials) {
  std::vector<double> pos, neg;
  for (const auto& t : trials) {
    if (!std::isfinite(t.score)) throw ContractError("compute_eer: non-finite score");
    (t.same_speaker ? pos : neg).push_back(t.score);
  }
  if (pos.empty() || neg.empty()) {
    throw ContractError("compute_eer: need at least one positive and one negative trial");
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds(pos);
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  double prev_fpr = 1.0, prev_fnr = 0.0;
  for (double t : thresholds) {
    const auto neg_below = std::lower_bound(neg.begin(), neg.end(), t) - neg.begin();
    const auto pos_below = std::lower_bound(pos.begin(), pos.end(), t) - pos.begin();
    const double fpr = (nn - static_cast<double>(neg_below)) / nn;
    const double fnr = static_cast<double>(pos_below) / np;
    const double d = fpr - fnr;
    if (d <= 0.0) {
      if (d == 0.0) return fpr;
      const double prev_d = prev_fpr - prev_fnr;
      const double alpha = prev_d / (prev_d - d);
      return prev_fpr + alpha * (fpr - prev_fpr);
    }
    prev_fpr = fpr;
    prev_fnr = fnr;
  }
  return 0.5;  // unreachable: +inf gives FPR 0, FNR 1
}

Tensor clip_window(const WavClip& clip, std::size_t offset, std::size_t length) {
  std::vector<double> v(length, 0.0);
  for (std::size_t i = 0; i < length && offset + i < clip.samples.size(); ++i)
    v[i] = clip.samples[offset + i];
  return Tensor({length}, std::move(v));
}

std::vector<double> embed_clip(const SREModel& model, TaskHead& head,
                               const WavClip& clip) {
  const std::size_t len = kSvSamples;
  const std::size_t windows = std::max<std::size_t>(1, clip.samples.size() / len);
  std::vector<double> mean;
  for (std::size_t w = 0; w < windows; ++w) {
    Tensor c = model.represent(clip_window(clip, w * len, len)).frames;
    Tensor e = head.forward(c, false);
    if (mean.empty()) mean.assign(e.numel(), 0.0);
    for (std::size_t i = 0; i < e.numel(); ++i) mean[i] += e[i];
  }
  for (double& x : mean) x /= static_cast<double>(windows);
  return mean;
}

std::vector<ScoredTrial> score_trial_pairs(const SREModel& model, TaskHead& head,
                                           const TrialSet& trials) {
  std::vector<std::vector<double>> cache(trials.clips.size());
  auto embedding = [&](std::size_t i) -> const std::vector<double>& {
    if (i >= trials.clips.size()) throw ContractError("trial references a missing clip");
    if (cache[i].empty()) cache[i] = embed_clip(model, head, trials.clips[i]);
    return cache[i];
  };
  std::vector<ScoredTrial> out;
  out.reserve(trials.pairs.size());
  for (const auto& p : trials.pairs) {
    const auto& a = embedding(p.clip_a);
    const auto& b = embedding(p.clip_b);
    out.push_back({cosine_similarity(a, b), p.same_speaker});
  }
  return out;
}

Tensor classify_utterances(const SREModel& model, TaskHead& head,
                           const UtteranceSet& data, std::size_t batch) {
  if (data.empty()) throw ContractError("classify_utterances: empty set");
  const std::size_t len = head.config().input_seconds * kSampleRate;
  std::vector<double> scores;
  std::size_t width = 0;
  std::vector<Tensor> contexts;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    contexts.clear();
    const std::size_t end = std::min(data.size(), start + batch);
    for (std::size_t i = start; i < end; ++i)
      contexts.push_back(model.represent(clip_window(data[i].clip, 0, len)).frames);
    Tensor out = head.forward(contexts, false);
    width = out.dim(1);
    scores.insert(scores.end(), out.data().begin(), out.data().end());
  }
  return Tensor({data.size(), width}, std::move(scores));
}

double evaluate_kws(const SREModel& model, TaskHead& head,
                    const UtteranceSet& test) {
  std::vector<int> labels;
  labels.reserve(test.size());
  for (const auto& u : test) labels.push_back(u.label);
  return top1_accuracy(classify_utterances(model, head, test), labels);
}

void write_results(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, double>>& metrics) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write results file '" + path.string() + "'");
  char buf[64];
  for (const auto& [name, value] : metrics) {
    std::snprintf(buf, sizeof buf, "%.17g", value);
    f << name << '=' << buf << '\n';
  }
  if (!f) throw IoError("failed writing results file '" + path.string() + "'");
}

void write_score_dump(const std::filesystem::path& path,
                      std::span<const ScoredTrial> trials) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write score dump '" + path.string() + "'");
  char buf[64];
  for (const auto& t : trials) {
    std::snprintf(buf, sizeof buf, "%.17g", t.score);
    f << buf << ' ' << (t.same_speaker ? 1 : 0) << '\n';
  }
  if (!f) throw IoError("failed writing score dump '" + path.string() + "'");
}

}  // namespace sremtl
