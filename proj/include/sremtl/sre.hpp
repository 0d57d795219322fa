#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sremtl/params.hpp"
#include "sremtl/rng.hpp"
#include "sremtl/tensor.hpp"

namespace sremtl {

struct SREConfig {
  // Encoder geometry is fixed: 20 ms hop (320 samples), 25 ms receptive field.
  static constexpr std::array<std::size_t, 7> kStrides{5, 2, 2, 2, 2, 2, 2};
  static constexpr std::array<std::size_t, 7> kKernels{10, 3, 3, 3, 3, 2, 2};

  std::size_t conv_channels = 64;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t codebooks = 2;
  std::size_t entries_per_codebook = 64;
  std::size_t code_dim = 64;
  double mask_prob = 0.065;
  std::size_t mask_span = 4;
  std::size_t distractors = 32;
  double contrastive_temperature = 0.1;
  double gumbel_start = 2.0;
  double gumbel_end = 0.5;
  double gumbel_decay = 0.9995;
  double diversity_weight = 0.1;
  double weight_decay = 1e-4;
  bool hard_quantizer = true;
  bool positional_encoding = true;
  // Zero-mean, unit-variance waveform per utterance before the encoder.
  bool normalize_waveform = true;
  // Per-channel normalization over time after the first conv layer.
  bool first_layer_norm = true;

  void validate() const;
  std::size_t receptive_field() const;  // 400 samples
  std::size_t hop() const;              // 320 samples
  // Frame count T produced by the encoder for `samples` input samples.
  std::size_t frames_for(std::size_t samples) const;
  double gumbel_temperature(std::size_t step) const;
};

// Z: encoder output, one row per 20 ms frame.
struct FrameEncoding {
  Tensor frames;  // [T, conv_channels]
  std::size_t steps() const { return frames.dim(0); }
};

// C: transformer output.
struct ContextualRepresentation {
  Tensor frames;  // [T, d_model]
};

// Q: quantized targets.
struct QuantizedTargets {
  Tensor frames;      // [T, code_dim]
  Tensor code_probs;  // [T, G, V] selection actually used (one-hot when hard)
  Tensor soft_probs;  // [T, G, V] noise-free softmax of the selection logits
};

struct MaskSpec {
  std::vector<bool> masked;
  std::size_t count() const;
};

/// Span masking: every frame starts a span with probability p; spans cover
/// min(M, T - start) frames and are unioned. If no span starts, one span of M
/// frames is forced at a uniformly drawn position.
MaskSpec sample_mask(std::size_t steps, double p, std::size_t span, Rng& rng);

/// Speech representation extractor: conv encoder, transformer, quantizer.
class SREModel {
 public:
  SREModel(const SREConfig& config, Rng& rng);

  const SREConfig& config() const { return config_; }

  FrameEncoding encode_frames(const Tensor& wave) const;
  ContextualRepresentation contextualize(const FrameEncoding& z,
                                         const MaskSpec* mask = nullptr) const;
  QuantizedTargets quantize(const FrameEncoding& z, double temperature,
                            Rng& rng) const;
  // Maps C into the quantized-target space for the contrastive task.
  Tensor project_context(const ContextualRepresentation& c) const;

  // Waveform [L] to C without masking.
  ContextualRepresentation represent(const Tensor& wave) const;

  // Every parameter, in a fixed order with stable names.
  ParameterList parameters() const;
  // Encoder + transformer: what downstream fine-tuning trains.
  ParameterList backbone_parameters() const;

 private:
  struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
    Tensor operator()(const Tensor& x) const;
  };
  struct Norm {
    Tensor gamma;
    Tensor beta;
    Tensor operator()(const Tensor& x) const;
  };
  struct Block {
    Norm attn_norm;
    Linear wq, wk, wv, wo;
    Norm ffn_norm;
    Linear ffn_in, ffn_out;
  };

  static Linear make_linear(std::size_t in, std::size_t out, Rng& rng);
  static Norm make_norm(std::size_t d);
  Tensor block_forward(const Block& block, const Tensor& x) const;

  SREConfig config_;
  std::vector<Tensor> conv_weight_;
  std::vector<Tensor> conv_bias_;
  Tensor first_norm_gamma_;  // [conv_channels]
  Tensor first_norm_beta_;
  Norm feature_norm_;
  Linear feature_proj_;
  Tensor mask_embedding_;
  std::vector<Block> blocks_;
  Norm final_norm_;
  Linear quant_logits_;
  Tensor codebook_;  // [G * V, code_dim / G]
  Linear quant_proj_;
  Linear final_proj_;
};

/// Mean over masked frames of the InfoNCE term with cosine similarity and
/// temperature `kappa`. `context` and `targets` are [T, D]. Distractors for
/// frame t are drawn uniformly from the other masked frames (without
/// replacement when at least K exist, with replacement otherwise; from all
/// other frames when t is the only masked one).
Tensor contrastive_loss(const Tensor& context, const Tensor& targets,
                        const MaskSpec& mask, std::size_t distractors,
                        double kappa, Rng& rng);

/// (G*V - sum_g exp(H(mean usage of codebook g))) / (G*V) for probabilities
/// [N, G, V].
Tensor diversity_loss(const Tensor& code_probs);
// exp(H) per codebook, same averaging as diversity_loss.
std::vector<double> codebook_perplexity(const Tensor& code_probs);

struct PretrainLoss {
  Tensor total;
  double contrastive = 0.0;
  double diversity = 0.0;
  double l2 = 0.0;
  std::vector<double> perplexity;
};

/// Contrastive + alpha * diversity + lambda * sum of squared weights over a
/// batch of waveforms [B, L].
PretrainLoss pretrain_loss(const SREModel& model, const Tensor& waves,
                           double gumbel_temperature, Rng& rng);

}  // namespace sremtl
