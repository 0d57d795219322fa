// Desk-scale stand-in for the keyword and speaker corpora.
//
// Keywords are fixed sequences of voiced syllables (pitch + formant
// pattern); each clip jitters timing, pitch, and level and adds noise.
// Speakers own a pitch, vocal-tract scale, and spectral tilt, and speak random
// vowel sequences through them.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "sremtl/data.hpp"

namespace sremtl {
namespace {

constexpr double kFs = kSampleRate;
constexpr double kMaxHarmonicHz = 4000.0;
constexpr std::size_t kMaxHarmonics = 40;

struct Formant {
  double freq;
  double bandwidth;
};

struct Syllable {
  double f0;
  std::array<Formant, 3> formants;
  double seconds;
  double gap_seconds;
};

double spectral_gain(double f, const std::array<Formant, 3>& formants,
                     double tilt) {
  double g = 0.03;
  for (const auto& fm : formants) {
    const double x = (f - fm.freq) / fm.bandwidth;
    g += 1.0 / (1.0 + x * x);
  }
  return g * std::pow(f / 100.0, -0.5 * tilt);
}

// Adds a stationary voiced segment with raised-cosine ramps.
void add_voiced(std::vector<double>& out, std::size_t start, std::size_t len,
                double f0, const std::array<Formant, 3>& formants, double tilt,
                double amplitude, Rng& rng) {
  if (start >= out.size() || len == 0) return;
  len = std::min(len, out.size() - start);
  std::vector<double> amp;
  for (std::size_t h = 1; h <= kMaxHarmonics && h * f0 < kMaxHarmonicHz; ++h)
    amp.push_back(spectral_gain(static_cast<double>(h) * f0, formants, tilt));
  double energy = 0.0;
  for (double a : amp) energy += a * a;
  const double norm = amplitude / std::sqrt(std::max(energy, 1e-12));

  const std::size_t ramp = std::min<std::size_t>(240, len / 2);
  std::vector<double> env(len, 1.0);
  for (std::size_t i = 0; i < ramp; ++i) {
    const double w =
        0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(ramp));
    env[i] *= w;
    env[len - 1 - i] *= w;
  }
  for (std::size_t h = 0; h < amp.size(); ++h) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(h + 1) * f0 / kFs;
    const double cw = std::cos(w), sw = std::sin(w);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double c = std::cos(phase), s = std::sin(phase);
    const double a = amp[h] * norm;
    for (std::size_t i = 0; i < len; ++i) {
      out[start + i] += a * env[i] * s;
      const double nc = c * cw - s * sw;
      s = s * cw + c * sw;
      c = nc;
    }
  }
}

void add_noise(std::vector<double>& out, double sigma, Rng& rng) {
  for (double& v : out) v += rng.normal(0.0, sigma);
}

WavClip to_clip(const std::vector<double>& buf, std::string id) {
  WavClip clip;
  clip.source_id = std::move(id);
  clip.samples.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    clip.samples[i] = static_cast<float>(std::clamp(buf[i], -1.0, 1.0));
  return clip;
}

std::vector<Syllable> make_word(Rng rng) {
  std::vector<Syllable> word(2 + rng.index(2));
  for (auto& syl : word) {
    syl.f0 = rng.uniform(110.0, 260.0);
    syl.formants = {Formant{rng.uniform(300.0, 900.0), 80.0},
                    Formant{rng.uniform(900.0, 2600.0), 120.0},
                    Formant{rng.uniform(2400.0, 3400.0), 160.0}};
    syl.seconds = rng.uniform(0.10, 0.22);
    syl.gap_seconds = rng.uniform(0.02, 0.06);
  }
  return word;
}

WavClip render_word(const std::vector<Syllable>& word, Rng rng, std::string id) {
  std::vector<double> buf(kKwsSamples, 0.0);
  const double pitch = rng.uniform(0.93, 1.07);
  const double formant_scale = rng.uniform(0.96, 1.04);
  const double tempo = rng.uniform(0.85, 1.15);
  const double level = rng.uniform(0.15, 0.5);
  double t = rng.uniform(0.02, 0.2);
  for (const auto& syl : word) {
    auto fm = syl.formants;
    for (auto& f : fm) f.freq *= formant_scale;
    const auto start = static_cast<std::size_t>(t * kFs);
    const auto len = static_cast<std::size_t>(syl.seconds * tempo * kFs);
    add_voiced(buf, start, len, syl.f0 * pitch, fm, 1.0, level, rng);
    t += (syl.seconds + syl.gap_seconds) * tempo;
  }
  add_noise(buf, rng.uniform(0.002, 0.008), rng);
  return to_clip(buf, std::move(id));
}

WavClip render_silence(Rng rng, std::string id) {
  std::vector<double> buf(kKwsSamples, 0.0);
  add_noise(buf, rng.uniform(0.001, 0.01), rng);
  return to_clip(buf, std::move(id));
}

struct SpeakerVoice {
  double f0;
  double tract_scale;
  double tilt;
  double breath;
};

constexpr std::array<std::array<double, 3>, 6> kVowels{{
    {730, 1090, 2440},
    {270, 2290, 3010},
    {300, 870, 2240},
    {530, 1840, 2480},
    {570, 840, 2410},
    {660, 1720, 2410},
}};

SpeakerVoice make_speaker(Rng rng) {
  return {rng.uniform(85.0, 255.0), rng.uniform(0.82, 1.22),
          rng.uniform(0.6, 1.6), rng.uniform(0.001, 0.006)};
}

WavClip render_phrase(const SpeakerVoice& voice, Rng rng, std::string id) {
  const auto length =
      static_cast<std::size_t>(rng.uniform(2.0, 3.0) * kFs);
  std::vector<double> buf(length, 0.0);
  double t = rng.uniform(0.0, 0.1);
  while (t * kFs < static_cast<double>(length)) {
    const auto& vowel = kVowels[rng.index(kVowels.size())];
    const double jitter = rng.uniform(0.97, 1.03);
    std::array<Formant, 3> fm{};
    for (std::size_t i = 0; i < 3; ++i) {
      fm[i] = {vowel[i] * voice.tract_scale * jitter, 70.0 + 50.0 * i};
    }
    const double seconds = rng.uniform(0.12, 0.3);
    add_voiced(buf, static_cast<std::size_t>(t * kFs),
               static_cast<std::size_t>(seconds * kFs),
               voice.f0 * rng.uniform(0.92, 1.08), fm, voice.tilt,
               rng.uniform(0.2, 0.45), rng);
    t += seconds + rng.uniform(0.03, 0.12);
  }
  add_noise(buf, voice.breath, rng);
  return to_clip(buf, std::move(id));
}

}  // namespace

SynthCorpus synth_dataset(const SynthSpec& spec) {
  if (spec.n_keywords < 2) {
    throw ParameterError("synth: n_keywords must be at least 2");
  }
  if (spec.n_speakers < 4) {
    throw ParameterError("synth: n_speakers must be at least 4");
  }
  if (spec.held_out_speakers < 2 ||
      spec.n_speakers < spec.held_out_speakers + 2) {
    throw ParameterError(
        "synth: " + std::to_string(spec.n_speakers) +
        " speakers cannot hold out " + std::to_string(spec.held_out_speakers) +
        " trial speakers and keep at least 2 for training");
  }
  if (spec.clips_per_class < 2) {
    throw ParameterError("synth: clips_per_class must be at least 2");
  }
  if (spec.trial_pairs < 2) {
    throw ParameterError("synth: need at least 2 trial pairs");
  }
  if (spec.unknown_templates < 1) {
    throw ParameterError("synth: unknown_templates must be at least 1");
  }

  const Rng root(spec.seed);
  SynthCorpus corpus;
  const std::size_t n_words = spec.n_keywords - 2;
  const int unknown = static_cast<int>(n_words);
  const int silence = unknown + 1;

  std::vector<std::vector<Syllable>> words;
  const Rng word_rng = root.split("kws-word");
  for (std::size_t k = 0; k < n_words + spec.unknown_templates; ++k)
    words.push_back(make_word(word_rng.split(k)));
  for (std::size_t k = 0; k < n_words; ++k) {
    corpus.keyword_names.push_back("word" + std::to_string(k / 10) +
                                   std::to_string(k % 10));
  }
  corpus.keyword_names.push_back("_unknown_");
  corpus.keyword_names.push_back("_silence_");

  auto make_kws = [&](std::string_view split, std::size_t per_class) {
    UtteranceSet set;
    const Rng rng = root.split(split);
    for (std::size_t c = 0; c < spec.n_keywords; ++c) {
      for (std::size_t i = 0; i < per_class; ++i) {
        Rng clip_rng = rng.split(c * 1'000'003 + i);
        const std::string id = std::string(split) + "/" +
                               corpus.keyword_names[c] + "/" + std::to_string(i);
        const int label = static_cast<int>(c);
        WavClip clip;
        if (label == silence) {
          clip = render_silence(clip_rng, id);
        } else if (label == unknown) {
          const std::size_t pick = n_words + clip_rng.index(spec.unknown_templates);
          clip = render_word(words[pick], clip_rng.split("render"), id);
        } else {
          clip = render_word(words[c], clip_rng, id);
        }
        set.push_back({std::move(clip), Task::kws, label});
      }
    }
    return set;
  };
  corpus.kws_train = make_kws("kws-train", spec.clips_per_class);
  corpus.kws_test = make_kws("kws-test", spec.kws_test_clips_per_class);

  const Rng speaker_rng = root.split("speaker");
  const Rng phrase_rng = root.split("phrase");
  const std::size_t n_train = spec.n_speakers - spec.held_out_speakers;
  corpus.sv_train_speakers = n_train;
  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    const SpeakerVoice voice = make_speaker(speaker_rng.split(s));
    for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
      const std::string id = "spk" + std::to_string(s) + "/" + std::to_string(i);
      WavClip clip =
          render_phrase(voice, phrase_rng.split(s * 1'000'003 + i), id);
      if (s < n_train) {
        corpus.sv_train.push_back({std::move(clip), Task::sv, static_cast<int>(s)});
      } else {
        corpus.trials.clips.push_back(std::move(clip));
        corpus.trials.speakers.push_back(static_cast<int>(s));
      }
    }
  }

  // Balanced same/different pairs over the held-out speakers.
  Rng pair_rng = root.split("trials");
  const std::size_t per = spec.clips_per_class;
  const std::size_t held = spec.held_out_speakers;
  const std::size_t n_same = spec.trial_pairs / 2;
  for (std::size_t p = 0; p < spec.trial_pairs; ++p) {
    const bool same = p < n_same;
    const std::size_t sa = pair_rng.index(held);
    std::size_t sb = sa;
    if (!same) sb = (sa + 1 + pair_rng.index(held - 1)) % held;
    const std::size_t ca = pair_rng.index(per);
    std::size_t cb = pair_rng.index(per);
    if (same && cb == ca) cb = (ca + 1 + pair_rng.index(per - 1)) % per;
    corpus.trials.pairs.push_back({sa * per + ca, sb * per + cb, same});
  }
  // Interleave so that any prefix stays roughly balanced.
  std::vector<TrialPair> mixed;
  for (std::size_t i = 0; i < n_same || n_same + i < spec.trial_pairs; ++i) {
    if (i < n_same) mixed.push_back(corpus.trials.pairs[i]);
    if (n_same + i < spec.trial_pairs)
      mixed.push_back(corpus.trials.pairs[n_same + i]);
  }
  corpus.trials.pairs = std::move(mixed);
  return corpus;
}

}  // namespace sremtl
