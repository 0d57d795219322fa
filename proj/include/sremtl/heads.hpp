#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sremtl/data.hpp"
#include "sremtl/params.hpp"
#include "sremtl/rng.hpp"
#include "sremtl/tensor.hpp"

namespace sremtl {

enum class HeadKind { linear, bilstm, cnn1d };
enum class OutputKind { class_scores, embedding };

std::string_view head_kind_name(HeadKind kind);
HeadKind parse_head_kind(std::string_view name);

struct HeadConfig {
  Task task = Task::kws;
  HeadKind kind = HeadKind::linear;
  OutputKind output = OutputKind::class_scores;
  // Number of classes for class_scores, embedding size for embedding.
  std::size_t out_dim = 12;
  std::size_t lstm_hidden = 256;
  // Also read h_fwd(0) and h_bwd(T-1).
  bool all_endpoints = false;
  std::size_t cnn_filters = 128;
  std::size_t cnn_kernel = 25;
  // 1 for keyword clips, 2 for speaker slices.
  std::size_t input_seconds = 1;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  void validate() const;
};

/// Downstream network mapping SRE output C [T, d] to class scores or an
/// embedding.
class TaskHead {
 public:
  TaskHead(const HeadConfig& config, std::size_t d_model, Rng& rng);

  const HeadConfig& config() const { return config_; }
  std::size_t in_dim() const { return d_model_; }

  // One row per utterance: [B, out_dim]. `training` selects batch statistics
  // (and updates the running ones) in the CNN head.
  Tensor forward(std::span<const Tensor> contexts, bool training);
  Tensor forward(const Tensor& context, bool training);

  ParameterList parameters() const;
  // Non-trainable state saved with the head (batch-norm running statistics).
  ParameterList buffers() const;

 private:
  struct ConvBlock {
    Tensor weight;  // [filters, in, K]
    Tensor bias;
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    std::size_t stride = 1;
  };

  ConvBlock make_block(std::size_t in, std::size_t stride, Rng& rng) const;
  Tensor forward_linear(std::span<const Tensor> contexts) const;
  Tensor forward_bilstm(std::span<const Tensor> contexts) const;
  Tensor forward_cnn(std::span<const Tensor> contexts, bool training);
  // rows: per utterance [T_in, C]; returns per utterance [T_out, filters].
  std::vector<Tensor> run_block(ConvBlock& block, const std::vector<Tensor>& rows,
                                bool training);

  HeadConfig config_;
  std::size_t d_model_;
  std::size_t frames_;  // expected T

  // Linear and final projection of every kind.
  Tensor out_weight_;  // [features, out_dim]
  Tensor out_bias_;

  // BiLSTM, per direction: w_ih [d, 4H], w_hh [H, 4H], bias [4H].
  std::vector<Tensor> lstm_;
  std::vector<ConvBlock> blocks_;
};

// Frame count of a clip of `seconds` seconds at the fixed encoder geometry.
std::size_t frames_for_seconds(std::size_t seconds);

}  // namespace sremtl
